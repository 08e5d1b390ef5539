//! Uniform access to named parameter tensors.

use ndarray::{Array1, Array2};

/// Borrowed view of one named tensor in row-major order.
#[derive(Debug, Clone)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// A collection of named `f64` tensors.
///
/// Gradients and optimizer moments reuse the type that holds the parameters,
/// so visiting two values of the same type yields tensors in the same order.
pub trait Parameters {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn fill(&mut self, value: f64) {
        for (_, t) in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for ((_, dst), s) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s.data) {
                *d += scale * v;
            }
        }
    }

    /// Name of the first tensor holding a NaN or infinity.
    fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name)
    }

    fn norms(&self) -> Vec<(String, f64)> {
        self.tensors()
            .into_iter()
            .map(|t| (t.name, t.data.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect()
    }
}

pub(crate) fn mat<'a>(name: impl Into<String>, a: &'a Array2<f64>) -> TensorRef<'a> {
    TensorRef {
        name: name.into(),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

pub(crate) fn vec1<'a>(name: impl Into<String>, a: &'a Array1<f64>) -> TensorRef<'a> {
    TensorRef {
        name: name.into(),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

pub(crate) fn mat_mut(name: impl Into<String>, a: &mut Array2<f64>) -> (String, &mut [f64]) {
    (name.into(), a.as_slice_mut().expect("standard layout"))
}

pub(crate) fn vec1_mut(name: impl Into<String>, a: &mut Array1<f64>) -> (String, &mut [f64]) {
    (name.into(), a.as_slice_mut().expect("standard layout"))
}
