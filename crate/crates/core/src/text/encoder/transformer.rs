//! Pre-layer-norm self-attention encoder with `[CLS]` pooling.
//!
//! `e = W . LN_f(x_L)[CLS]`, where each layer applies
//! `x += MHA(LN1(x))` then `x += FFN(LN2(x))` and `x_0` is the sum of word
//! and learned positional embeddings. Padding positions are masked as keys,
//! so they never influence real positions.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use super::{uniform_matrix, xavier, EncoderSpec, Encoding};
use crate::params::{mat, mat_mut, vec1, vec1_mut, Parameters, TensorRef};
use crate::text::tokenize::TokenSeq;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub word: Array2<f64>,
    pub pos: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    /// `dim x hidden`.
    pub proj: Array2<f64>,
    pub heads: usize,
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

pub(crate) struct Cache {
    layers: Vec<LayerCache>,
    lnf: LnCache,
    h_cls: Array1<f64>,
}

impl LayerParams {
    fn init<R: Rng>(h: usize, f: usize, rng: &mut R) -> Self {
        LayerParams {
            ln1_g: Array1::ones(h),
            ln1_b: Array1::zeros(h),
            wq: xavier(h, h, rng),
            bq: Array1::zeros(h),
            wk: xavier(h, h, rng),
            bk: Array1::zeros(h),
            wv: xavier(h, h, rng),
            bv: Array1::zeros(h),
            wo: xavier(h, h, rng),
            bo: Array1::zeros(h),
            ln2_g: Array1::ones(h),
            ln2_b: Array1::zeros(h),
            w1: xavier(h, f, rng),
            b1: Array1::zeros(f),
            w2: xavier(f, h, rng),
            b2: Array1::zeros(h),
        }
    }
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let h = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / h;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / h;
        let s = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * s);
        inv_std[i] = s;
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let dxhat = dy * g;
    let h = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dr = dxhat.row(i);
        let xr = cache.xhat.row(i);
        let mean_d = dr.sum() / h;
        let mean_dx = dr.dot(&xr) / h;
        let s = cache.inv_std[i];
        dx.row_mut(i)
            .assign(&((&dr - mean_d - &(&xr * mean_dx)) * s));
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_K * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_K * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * u * u)
}

/// `dw += x^T dy`, `db += sum_rows(dy)`, returns `dy w^T`.
fn linear_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    a.insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)))
}

impl TransformerParams {
    pub fn init<R: Rng>(spec: &EncoderSpec, vocab_size: usize, rng: &mut R) -> Self {
        let h = spec.hidden;
        let bound = 0.5 / h as f64;
        let word = uniform_matrix(vocab_size, h, bound, rng);
        let pos = uniform_matrix(spec.max_positions, h, bound, rng);
        let layers = (0..spec.layers)
            .map(|_| LayerParams::init(h, spec.ffn, rng))
            .collect();
        TransformerParams {
            word,
            pos,
            layers,
            lnf_g: Array1::ones(h),
            lnf_b: Array1::zeros(h),
            proj: xavier(spec.dim, h, rng),
            heads: spec.heads,
        }
    }

    fn attention(
        &self,
        q: &Array2<f64>,
        k: &Array2<f64>,
        v: &Array2<f64>,
        mask: &[u8],
    ) -> (Array2<f64>, Vec<Array2<f64>>) {
        let n = q.nrows();
        let dh = q.ncols() / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Array2::zeros(q.raw_dim());
        let mut probs = Vec::with_capacity(self.heads);
        for hd in 0..self.heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let mut p = q.slice(cols).dot(&k.slice(cols).t());
            for i in 0..n {
                let mut row = p.row_mut(i);
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    if mask[j] == 0 {
                        row[j] = f64::NEG_INFINITY;
                    } else {
                        row[j] *= scale;
                        max = max.max(row[j]);
                    }
                }
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                row.mapv_inplace(|x| x / sum);
            }
            ctx.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        (ctx, probs)
    }

    pub(crate) fn forward(&self, tokens: &TokenSeq) -> (Encoding, Cache) {
        let n = tokens.len();
        let h = self.word.ncols();
        let mut x = Array2::zeros((n, h));
        for (i, &id) in tokens.ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&self.word.row(id));
            row += &self.pos.row(i);
        }

        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (a, ln1) = layer_norm(&x, &layer.ln1_g, &layer.ln1_b);
            let q = a.dot(&layer.wq) + &layer.bq;
            let k = a.dot(&layer.wk) + &layer.bk;
            let v = a.dot(&layer.wv) + &layer.bv;
            let (ctx, probs) = self.attention(&q, &k, &v, &tokens.mask);
            x += &(ctx.dot(&layer.wo) + &layer.bo);

            let (b, ln2) = layer_norm(&x, &layer.ln2_g, &layer.ln2_b);
            let u = b.dot(&layer.w1) + &layer.b1;
            let g = u.mapv(gelu);
            x += &(g.dot(&layer.w2) + &layer.b2);
            caches.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                ctx,
                ln2,
                b,
                u,
                g,
            });
        }

        let (z, lnf) = layer_norm(&x, &self.lnf_g, &self.lnf_b);
        let h_cls = z.row(0).to_owned();
        let vector = self.proj.dot(&h_cls);
        (
            Encoding {
                vector,
                empty_input: tokens.content().is_empty(),
            },
            Cache {
                layers: caches,
                lnf,
                h_cls,
            },
        )
    }

    pub(crate) fn backward(
        &self,
        tokens: &TokenSeq,
        cache: &Cache,
        upstream: &Array1<f64>,
        grads: &mut TransformerParams,
    ) {
        let n = tokens.len();
        let h = self.word.ncols();
        grads.proj += &outer(upstream.view(), cache.h_cls.view());
        let mut dz = Array2::zeros((n, h));
        dz.row_mut(0).assign(&self.proj.t().dot(upstream));
        let mut dx = layer_norm_backward(
            &dz,
            &cache.lnf,
            &self.lnf_g,
            &mut grads.lnf_g,
            &mut grads.lnf_b,
        );

        let dh = h / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for ((layer, lc), gl) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            // feed-forward block
            let dgelu = linear_backward(&lc.g, &layer.w2, &dx, &mut gl.w2, &mut gl.b2);
            let du = dgelu * lc.u.mapv(gelu_grad);
            let dbn = linear_backward(&lc.b, &layer.w1, &du, &mut gl.w1, &mut gl.b1);
            dx += &layer_norm_backward(&dbn, &lc.ln2, &layer.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);

            // attention block
            let dctx = linear_backward(&lc.ctx, &layer.wo, &dx, &mut gl.wo, &mut gl.bo);
            let mut dq = Array2::zeros((n, h));
            let mut dk = Array2::zeros((n, h));
            let mut dv = Array2::zeros((n, h));
            for (hd, p) in lc.probs.iter().enumerate() {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let dctx_h = dctx.slice(cols);
                let dp = dctx_h.dot(&lc.v.slice(cols).t());
                dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
                let mut ds = dp;
                for i in 0..n {
                    let pr = p.row(i);
                    let mut dr = ds.row_mut(i);
                    let dot = dr.dot(&pr);
                    dr.zip_mut_with(&pr, |d, &pv| *d = pv * (*d - dot) * scale);
                }
                dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
            }
            let mut da = linear_backward(&lc.a, &layer.wq, &dq, &mut gl.wq, &mut gl.bq);
            da += &linear_backward(&lc.a, &layer.wk, &dk, &mut gl.wk, &mut gl.bk);
            da += &linear_backward(&lc.a, &layer.wv, &dv, &mut gl.wv, &mut gl.bv);
            dx += &layer_norm_backward(&da, &lc.ln1, &layer.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
        }

        for (i, &id) in tokens.ids.iter().enumerate() {
            let d = dx.row(i);
            let mut w = grads.word.row_mut(id);
            w += &d;
            let mut p = grads.pos.row_mut(i);
            p += &d;
        }
    }
}

impl Parameters for TransformerParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![
            mat("word_embeddings", &self.word),
            mat("position_embeddings", &self.pos),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = |n: &str| format!("layer{i}.{n}");
            out.extend([
                vec1(p("ln1.gain"), &l.ln1_g),
                vec1(p("ln1.bias"), &l.ln1_b),
                mat(p("query.weight"), &l.wq),
                vec1(p("query.bias"), &l.bq),
                mat(p("key.weight"), &l.wk),
                vec1(p("key.bias"), &l.bk),
                mat(p("value.weight"), &l.wv),
                vec1(p("value.bias"), &l.bv),
                mat(p("output.weight"), &l.wo),
                vec1(p("output.bias"), &l.bo),
                vec1(p("ln2.gain"), &l.ln2_g),
                vec1(p("ln2.bias"), &l.ln2_b),
                mat(p("ffn1.weight"), &l.w1),
                vec1(p("ffn1.bias"), &l.b1),
                mat(p("ffn2.weight"), &l.w2),
                vec1(p("ffn2.bias"), &l.b2),
            ]);
        }
        out.push(vec1("final_ln.gain", &self.lnf_g));
        out.push(vec1("final_ln.bias", &self.lnf_b));
        out.push(mat("projection", &self.proj));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![
            mat_mut("word_embeddings", &mut self.word),
            mat_mut("position_embeddings", &mut self.pos),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = |n: &str| format!("layer{i}.{n}");
            out.extend([
                vec1_mut(p("ln1.gain"), &mut l.ln1_g),
                vec1_mut(p("ln1.bias"), &mut l.ln1_b),
                mat_mut(p("query.weight"), &mut l.wq),
                vec1_mut(p("query.bias"), &mut l.bq),
                mat_mut(p("key.weight"), &mut l.wk),
                vec1_mut(p("key.bias"), &mut l.bk),
                mat_mut(p("value.weight"), &mut l.wv),
                vec1_mut(p("value.bias"), &mut l.bv),
                mat_mut(p("output.weight"), &mut l.wo),
                vec1_mut(p("output.bias"), &mut l.bo),
                vec1_mut(p("ln2.gain"), &mut l.ln2_g),
                vec1_mut(p("ln2.bias"), &mut l.ln2_b),
                mat_mut(p("ffn1.weight"), &mut l.w1),
                vec1_mut(p("ffn1.bias"), &mut l.b1),
                mat_mut(p("ffn2.weight"), &mut l.w2),
                vec1_mut(p("ffn2.bias"), &mut l.b2),
            ]);
        }
        out.push(vec1_mut("final_ln.gain", &mut self.lnf_g));
        out.push(vec1_mut("final_ln.bias", &mut self.lnf_b));
        out.push(mat_mut("projection", &mut self.proj));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::encoder::EncoderKind;
    use crate::text::tokenize::tokenize;
    use crate::text::vocab::{Vocabulary, CLS, PAD};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> EncoderSpec {
        EncoderSpec {
            kind: EncoderKind::Transformer,
            dim: 4,
            hidden: 8,
            layers: 2,
            heads: 2,
            ffn: 16,
            max_positions: 16,
            ..Default::default()
        }
    }

    fn random_params(vocab: &Vocabulary, seed: u64) -> TransformerParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = TransformerParams::init(&spec(), vocab.len(), &mut rng);
        p.word = uniform_matrix(vocab.len(), 8, 1.0, &mut rng);
        p.pos = uniform_matrix(16, 8, 1.0, &mut rng);
        p
    }

    #[test]
    fn zeroed_blocks_reduce_to_residual_path() {
        let vocab = Vocabulary::build(["red green blue"]);
        let mut p = random_params(&vocab, 4);
        p.lnf_g = Array1::from_iter((0..8).map(|i| 0.5 + i as f64 * 0.1));
        p.lnf_b = Array1::from_iter((0..8).map(|i| i as f64 * -0.05));
        for (name, t) in p.tensors_mut() {
            if name.starts_with("layer") && !name.contains(".ln") {
                t.fill(0.0);
            }
        }
        let tokens = tokenize("red green blue", &vocab, 7);
        let (e, _) = p.forward(&tokens);

        // straight-line oracle: layer-normed CLS input, then projection
        let x: Vec<f64> = (0..8).map(|j| p.word[[CLS, j]] + p.pos[[0, j]]).collect();
        let mean = x.iter().sum::<f64>() / 8.0;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        let normed: Vec<f64> = (0..8)
            .map(|j| (x[j] - mean) / (var + LN_EPS).sqrt() * p.lnf_g[j] + p.lnf_b[j])
            .collect();
        for r in 0..4 {
            let expect: f64 = (0..8).map(|j| p.proj[[r, j]] * normed[j]).sum();
            assert!((e.vector[r] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn word_order_changes_output() {
        let vocab = Vocabulary::build(["alpha beta gamma"]);
        let p = random_params(&vocab, 9);
        let a = p.forward(&tokenize("alpha beta gamma", &vocab, 6)).0.vector;
        let b = p.forward(&tokenize("gamma beta alpha", &vocab, 6)).0.vector;
        assert!((&a - &b).iter().any(|d| d.abs() > 1e-6));
    }

    #[test]
    fn padding_does_not_change_output_or_receive_gradient() {
        let vocab = Vocabulary::build(["alpha beta gamma"]);
        let p = random_params(&vocab, 5);
        let short = tokenize("alpha beta", &vocab, 4);
        let long = tokenize("alpha beta", &vocab, 12);
        let (a, _) = p.forward(&short);
        let (b, cache) = p.forward(&long);
        assert_eq!(a.vector, b.vector);

        let mut g = p.clone();
        g.fill(0.0);
        let up = Array1::from(vec![1.0, -0.5, 0.25, 2.0]);
        p.backward(&long, &cache, &up, &mut g);
        assert!(g.word.row(PAD).iter().all(|&v| v == 0.0));
        for i in 4..12 {
            assert!(g.pos.row(i).iter().all(|&v| v == 0.0));
        }
    }
}
