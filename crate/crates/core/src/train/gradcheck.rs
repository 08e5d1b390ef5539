use crate::error::Result;
use crate::graph::Triple;
use crate::model::Model;
use crate::params::Parameters;
use crate::text::TokenSeq;

use super::{batch_objective, LossKind};

/// Worst disagreement between the analytic gradient and central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// `|a - n| / max(|a|, |n|, 1e-6)` at the worst entry.
    pub max_rel_error: f64,
    /// `tensor[index]` of the worst entry.
    pub worst: String,
    pub entries: usize,
}

/// Compares the gradient of [`batch_objective`] against central finite
/// differences with step `eps`, entry by entry.
#[allow(clippy::too_many_arguments)]
pub fn check_gradient(
    model: &Model,
    inputs: &[TokenSeq],
    positives: &[Triple],
    negatives: &[Vec<Triple>],
    loss: LossKind,
    l2: f64,
    eps: f64,
) -> Result<GradientCheck> {
    let analytic = batch_objective(model, inputs, positives, negatives, loss, l2, true)?
        .grads
        .expect("gradient requested");
    let f = |m: &Model| {
        batch_objective(m, inputs, positives, negatives, loss, l2, false).map(|o| o.loss)
    };
    let mut probe = model.clone();
    let mut out = GradientCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        entries: 0,
    };
    let grads = analytic.tensors();
    for (ti, g) in grads.iter().enumerate() {
        for i in 0..g.data.len() {
            let orig = probe.tensors_mut()[ti].1[i];
            probe.tensors_mut()[ti].1[i] = orig + eps;
            let up = f(&probe)?;
            probe.tensors_mut()[ti].1[i] = orig - eps;
            let down = f(&probe)?;
            probe.tensors_mut()[ti].1[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = g.data[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if err > out.max_rel_error {
                out.max_rel_error = err;
                out.worst = format!("{}[{i}]", g.name);
            }
            out.entries += 1;
        }
    }
    Ok(out)
}
