use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::{uniform_matrix, xavier, EncoderSpec, Encoding};
use crate::params::{mat, mat_mut, vec1, vec1_mut, Parameters, TensorRef};
use crate::text::tokenize::TokenSeq;

const CONV1_WIDTH: usize = 2;
const POOL_WINDOW: usize = 4;

/// Convolutional description encoder: width-2 convolution, tanh, max-pool
/// over windows of 4, width-1 convolution, tanh, mean over positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DkrlParams {
    pub word: Array2<f64>,
    /// `channels x (2 * word_dim)`.
    pub conv1_w: Array2<f64>,
    pub conv1_b: Array1<f64>,
    /// `dim x channels`.
    pub conv2_w: Array2<f64>,
    pub conv2_b: Array1<f64>,
}

pub(crate) struct Cache {
    windows: Array2<f64>,
    hidden: Array2<f64>,
    pooled: Array2<f64>,
    argmax: Vec<Vec<usize>>,
    out: Array2<f64>,
    ids: Vec<usize>,
}

impl DkrlParams {
    pub fn init<R: Rng>(spec: &EncoderSpec, vocab_size: usize, rng: &mut R) -> Self {
        let c = spec.conv_channels;
        DkrlParams {
            word: uniform_matrix(vocab_size, spec.word_dim, 0.5 / spec.word_dim as f64, rng),
            conv1_w: xavier(c, CONV1_WIDTH * spec.word_dim, rng),
            conv1_b: Array1::zeros(c),
            conv2_w: xavier(spec.dim, c, rng),
            conv2_b: Array1::zeros(spec.dim),
        }
    }

    pub(crate) fn forward(&self, tokens: &TokenSeq) -> (Encoding, Cache) {
        let ids = tokens.content().to_vec();
        let n = ids.len();
        let dw = self.word.ncols();
        let dim = self.conv2_w.nrows();
        if n == 0 {
            let empty = Cache {
                windows: Array2::zeros((0, CONV1_WIDTH * dw)),
                hidden: Array2::zeros((0, 0)),
                pooled: Array2::zeros((0, 0)),
                argmax: Vec::new(),
                out: Array2::zeros((0, dim)),
                ids,
            };
            return (
                Encoding {
                    vector: Array1::zeros(dim),
                    empty_input: true,
                },
                empty,
            );
        }

        // Each row holds a token and its right neighbour (zero past the end).
        let mut windows = Array2::zeros((n, CONV1_WIDTH * dw));
        for i in 0..n {
            windows
                .slice_mut(s![i, ..dw])
                .assign(&self.word.row(ids[i]));
            if i + 1 < n {
                windows
                    .slice_mut(s![i, dw..])
                    .assign(&self.word.row(ids[i + 1]));
            }
        }
        let mut hidden = windows.dot(&self.conv1_w.t()) + &self.conv1_b;
        hidden.mapv_inplace(f64::tanh);

        let channels = hidden.ncols();
        let m = n.div_ceil(POOL_WINDOW);
        let mut pooled = Array2::zeros((m, channels));
        let mut argmax = vec![vec![0; channels]; m];
        for j in 0..m {
            let rows = j * POOL_WINDOW..((j + 1) * POOL_WINDOW).min(n);
            for c in 0..channels {
                let mut best = rows.start;
                for r in rows.clone() {
                    if hidden[[r, c]] > hidden[[best, c]] {
                        best = r;
                    }
                }
                pooled[[j, c]] = hidden[[best, c]];
                argmax[j][c] = best;
            }
        }
        let mut out = pooled.dot(&self.conv2_w.t()) + &self.conv2_b;
        out.mapv_inplace(f64::tanh);
        let vector = out.mean_axis(Axis(0)).expect("non-empty");
        (
            Encoding {
                vector,
                empty_input: false,
            },
            Cache {
                windows,
                hidden,
                pooled,
                argmax,
                out,
                ids,
            },
        )
    }

    pub(crate) fn backward(&self, cache: &Cache, upstream: &Array1<f64>, grads: &mut DkrlParams) {
        let n = cache.ids.len();
        if n == 0 {
            return;
        }
        let m = cache.out.nrows();
        let dw = self.word.ncols();

        let mut d_out = Array2::zeros(cache.out.raw_dim());
        for mut row in d_out.rows_mut() {
            row.assign(&(upstream / m as f64));
        }
        let d_pre2 = d_out * cache.out.mapv(|o| 1.0 - o * o);
        grads.conv2_w += &d_pre2.t().dot(&cache.pooled);
        grads.conv2_b += &d_pre2.sum_axis(Axis(0));
        let d_pooled = d_pre2.dot(&self.conv2_w);

        let mut d_hidden = Array2::zeros(cache.hidden.raw_dim());
        for (j, picks) in cache.argmax.iter().enumerate() {
            for (c, &r) in picks.iter().enumerate() {
                d_hidden[[r, c]] += d_pooled[[j, c]];
            }
        }
        let d_pre1 = d_hidden * cache.hidden.mapv(|h| 1.0 - h * h);
        grads.conv1_w += &d_pre1.t().dot(&cache.windows);
        grads.conv1_b += &d_pre1.sum_axis(Axis(0));
        let d_windows = d_pre1.dot(&self.conv1_w);
        for i in 0..n {
            let mut row = grads.word.row_mut(cache.ids[i]);
            row += &d_windows.slice(s![i, ..dw]);
            if i + 1 < n {
                let mut next = grads.word.row_mut(cache.ids[i + 1]);
                next += &d_windows.slice(s![i, dw..]);
            }
        }
    }
}

impl Parameters for DkrlParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            mat("word_embeddings", &self.word),
            mat("conv1.weight", &self.conv1_w),
            vec1("conv1.bias", &self.conv1_b),
            mat("conv2.weight", &self.conv2_w),
            vec1("conv2.bias", &self.conv2_b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            mat_mut("word_embeddings", &mut self.word),
            mat_mut("conv1.weight", &mut self.conv1_w),
            vec1_mut("conv1.bias", &mut self.conv1_b),
            mat_mut("conv2.weight", &mut self.conv2_w),
            vec1_mut("conv2.bias", &mut self.conv2_b),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::encoder::EncoderKind;
    use crate::text::tokenize::tokenize_with;
    use crate::text::vocab::Vocabulary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> EncoderSpec {
        EncoderSpec {
            kind: EncoderKind::Dkrl,
            dim: 4,
            word_dim: 3,
            conv_channels: 5,
            ..Default::default()
        }
    }

    #[test]
    fn output_is_bounded_by_tanh() {
        let vocab = Vocabulary::build(["alpha beta gamma delta epsilon"]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = DkrlParams::init(&spec(), vocab.len(), &mut rng);
        p.word = uniform_matrix(vocab.len(), 3, 10.0, &mut rng);
        let t = tokenize_with("alpha beta gamma delta epsilon", &vocab, 12, true);
        let (e, _) = p.forward(&t);
        assert_eq!(e.vector.len(), 4);
        assert!(e.vector.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn stop_word_only_description_is_empty() {
        let vocab = Vocabulary::build(["the of and"]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = DkrlParams::init(&spec(), vocab.len(), &mut rng);
        let t = tokenize_with("the of and", &vocab, 8, true);
        let (e, _) = p.forward(&t);
        assert!(e.empty_input);
        assert!(e.vector.iter().all(|&v| v == 0.0));
    }
}
