use ndarray::Array2;
use rand::Rng;

use super::{uniform_matrix, EncoderSpec, Encoding};
use crate::params::{mat, mat_mut, Parameters, TensorRef};

/// Transductive table with one free embedding per entity.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupParams {
    pub table: Array2<f64>,
}

impl LookupParams {
    pub fn init<R: Rng>(spec: &EncoderSpec, num_entities: usize, rng: &mut R) -> Self {
        LookupParams {
            table: uniform_matrix(num_entities, spec.dim, 0.5 / (spec.dim as f64).sqrt(), rng),
        }
    }

    pub(crate) fn forward(&self, entity: usize) -> Encoding {
        Encoding {
            vector: self.table.row(entity).to_owned(),
            empty_input: false,
        }
    }
}

impl Parameters for LookupParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![mat("entity_embeddings", &self.table)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![mat_mut("entity_embeddings", &mut self.table)]
    }
}
