use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::Result;
use crate::params::{mat, mat_mut, Parameters, TensorRef};
use crate::scoring::ScoringModel;
use crate::text::encoder::{uniform_matrix, EncoderParams, EncoderSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Encoder weights, one embedding per relation, and the scoring function.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    /// `num_relations x dim`.
    pub relations: Array2<f64>,
    pub scoring: ScoringModel,
}

impl Model {
    /// Relation rows are uniform in `[-0.5/sqrt(d), 0.5/sqrt(d)]`.
    pub fn init<R: Rng>(
        spec: &EncoderSpec,
        scoring: ScoringModel,
        vocab_size: usize,
        num_entities: usize,
        num_relations: usize,
        rng: &mut R,
    ) -> Result<Self> {
        scoring.validate(spec.dim)?;
        let encoder = EncoderParams::init(spec, vocab_size, num_entities, rng)?;
        let relations =
            uniform_matrix(num_relations, spec.dim, 0.5 / (spec.dim as f64).sqrt(), rng);
        Ok(Model {
            encoder,
            relations,
            scoring,
        })
    }

    /// Same structure as `init`, with every entry zero.
    pub fn zeros(
        spec: &EncoderSpec,
        scoring: ScoringModel,
        vocab_size: usize,
        num_entities: usize,
        num_relations: usize,
    ) -> Result<Self> {
        let mut m = Self::init(
            spec,
            scoring,
            vocab_size,
            num_entities,
            num_relations,
            &mut ChaCha8Rng::seed_from_u64(0),
        )?;
        m.fill(0.0);
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn dim(&self) -> usize {
        self.relations.ncols()
    }

    pub fn relation(&self, r: usize) -> ArrayView1<'_, f64> {
        self.relations.row(r)
    }

    pub fn score(&self, head: &Array1<f64>, relation: usize, tail: &Array1<f64>) -> f64 {
        self.scoring.score_unchecked(
            head.as_slice().expect("contiguous"),
            self.relations.row(relation).as_slice().expect("contiguous"),
            tail.as_slice().expect("contiguous"),
        )
    }
}

impl Parameters for Model {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut t = self.encoder.tensors();
        t.push(mat("relation_embeddings", &self.relations));
        t
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut t = self.encoder.tensors_mut();
        t.push(mat_mut("relation_embeddings", &mut self.relations));
        t
    }
}
