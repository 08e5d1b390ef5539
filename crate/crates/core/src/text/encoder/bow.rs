use ndarray::{Array1, Array2};
use rand::Rng;

use super::{uniform_matrix, xavier, EncoderSpec, Encoding};
use crate::params::{mat, mat_mut, Parameters, TensorRef};
use crate::text::tokenize::TokenSeq;

/// Mean of content-word embeddings, projected when `word_dim != dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct BowParams {
    pub word: Array2<f64>,
    /// `dim x word_dim`; absent means identity.
    pub proj: Option<Array2<f64>>,
}

pub(crate) struct Cache {
    mean: Array1<f64>,
}

impl BowParams {
    pub fn init<R: Rng>(spec: &EncoderSpec, vocab_size: usize, rng: &mut R) -> Self {
        let word = uniform_matrix(vocab_size, spec.word_dim, 0.5 / spec.word_dim as f64, rng);
        let proj = (spec.word_dim != spec.dim).then(|| xavier(spec.dim, spec.word_dim, rng));
        BowParams { word, proj }
    }

    pub fn dim(&self) -> usize {
        self.proj.as_ref().map_or(self.word.ncols(), |p| p.nrows())
    }

    pub(crate) fn forward(&self, tokens: &TokenSeq) -> (Encoding, Cache) {
        let content = tokens.content();
        let mut mean = Array1::zeros(self.word.ncols());
        for &id in content {
            mean += &self.word.row(id);
        }
        if !content.is_empty() {
            mean /= content.len() as f64;
        }
        let vector = match &self.proj {
            Some(p) => p.dot(&mean),
            None => mean.clone(),
        };
        (
            Encoding {
                vector,
                empty_input: content.is_empty(),
            },
            Cache { mean },
        )
    }

    pub(crate) fn backward(
        &self,
        tokens: &TokenSeq,
        cache: &Cache,
        upstream: &Array1<f64>,
        grads: &mut BowParams,
    ) {
        let content = tokens.content();
        let d_mean = match (&self.proj, &mut grads.proj) {
            (Some(p), Some(gp)) => {
                let outer = upstream
                    .view()
                    .insert_axis(ndarray::Axis(1))
                    .dot(&cache.mean.view().insert_axis(ndarray::Axis(0)));
                *gp += &outer;
                p.t().dot(upstream)
            }
            _ => upstream.clone(),
        };
        if content.is_empty() {
            return;
        }
        let scale = 1.0 / content.len() as f64;
        for &id in content {
            grads.word.row_mut(id).scaled_add(scale, &d_mean);
        }
    }
}

impl Parameters for BowParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![mat("word_embeddings", &self.word)];
        if let Some(p) = &self.proj {
            out.push(mat("projection", p));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![mat_mut("word_embeddings", &mut self.word)];
        if let Some(p) = &mut self.proj {
            out.push(mat_mut("projection", p));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize::tokenize;
    use crate::text::vocab::{Vocabulary, PAD};
    use ndarray::array;

    fn params(word: Array2<f64>) -> BowParams {
        BowParams { word, proj: None }
    }

    fn table(vocab: &Vocabulary, rows: &[(&str, [f64; 2])]) -> Array2<f64> {
        let mut w = Array2::zeros((vocab.len(), 2));
        for (tok, v) in rows {
            w.row_mut(vocab.get(tok)).assign(&array![v[0], v[1]]);
        }
        w
    }

    #[test]
    fn single_token_is_its_embedding() {
        let vocab = Vocabulary::build(["w"]);
        let p = params(table(&vocab, &[("w", [0.3, -1.0])]));
        let (e, _) = p.forward(&tokenize("w", &vocab, 4));
        assert_eq!(e.vector, array![0.3, -1.0]);
    }

    #[test]
    fn two_tokens_average() {
        let vocab = Vocabulary::build(["u v"]);
        let p = params(table(&vocab, &[("u", [1.0, 2.0]), ("v", [3.0, -4.0])]));
        let (e, _) = p.forward(&tokenize("u v", &vocab, 6));
        assert_eq!(e.vector, array![2.0, -1.0]);
    }

    #[test]
    fn content_order_does_not_matter() {
        let vocab = Vocabulary::build(["u v x"]);
        let p = params(table(
            &vocab,
            &[("u", [1.0, 2.0]), ("v", [3.0, -4.0]), ("x", [0.5, 0.25])],
        ));
        let a = p.forward(&tokenize("u v x", &vocab, 8)).0;
        let b = p.forward(&tokenize("x u v", &vocab, 8)).0;
        assert!((&a.vector - &b.vector).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn gradient_of_single_token_is_upstream_and_pad_gets_none() {
        let vocab = Vocabulary::build(["w"]);
        let p = params(table(&vocab, &[("w", [0.3, -1.0])]));
        let tokens = tokenize("w", &vocab, 5);
        let (_, cache) = p.forward(&tokens);
        let mut g = BowParams {
            word: Array2::zeros(p.word.raw_dim()),
            proj: None,
        };
        let up = array![0.7, -0.2];
        p.backward(&tokens, &cache, &up, &mut g);
        assert_eq!(g.word.row(vocab.get("w")).to_owned(), up);
        assert!(g.word.row(PAD).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_description_yields_zero_vector() {
        let vocab = Vocabulary::build(["w"]);
        let p = params(table(&vocab, &[("w", [0.3, -1.0])]));
        let (e, _) = p.forward(&tokenize("", &vocab, 4));
        assert!(e.empty_input);
        assert_eq!(e.vector, array![0.0, 0.0]);
    }
}
