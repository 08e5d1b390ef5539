//! Relational scoring functions over `(head, relation, tail)` embeddings.
//!
//! ComplEx and SimplE split each `d`-vector into contiguous halves: for
//! ComplEx the first half is the real part and the second the imaginary
//! part; for SimplE entities carry a head-role half then a tail-role half,
//! and relations carry the relation half then the inverse-relation half.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoringKind {
    TransE,
    DistMult,
    ComplEx,
    SimplE,
}

impl fmt::Display for ScoringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoringKind::TransE => "transe",
            ScoringKind::DistMult => "distmult",
            ScoringKind::ComplEx => "complex",
            ScoringKind::SimplE => "simple",
        })
    }
}

impl FromStr for ScoringKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transe" => Ok(ScoringKind::TransE),
            "distmult" => Ok(ScoringKind::DistMult),
            "complex" => Ok(ScoringKind::ComplEx),
            "simple" => Ok(ScoringKind::SimplE),
            _ => Err(Error::Config(format!(
                "unknown scoring model `{s}` (transe|distmult|complex|simple)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoringModel {
    pub kind: ScoringKind,
    /// Norm order for TransE, 1 or 2.
    pub p_norm: u8,
}

impl Default for ScoringModel {
    fn default() -> Self {
        ScoringModel {
            kind: ScoringKind::TransE,
            p_norm: 2,
        }
    }
}

/// Gradients of a score with respect to its three operands.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    pub tail: Vec<f64>,
    /// TransE L2 evaluated at an exact translation; a zero subgradient was used.
    pub degenerate: bool,
}

fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum()
}

impl ScoringModel {
    pub fn new(kind: ScoringKind) -> Self {
        ScoringModel { kind, p_norm: 2 }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.kind == ScoringKind::TransE && !matches!(self.p_norm, 1 | 2) {
            return Err(Error::Config(format!(
                "p_norm must be 1 or 2, got {}",
                self.p_norm
            )));
        }
        if matches!(self.kind, ScoringKind::ComplEx | ScoringKind::SimplE) && !dim.is_multiple_of(2)
        {
            return Err(Error::Config(format!(
                "{} needs an even dimension, got {dim}",
                self.kind
            )));
        }
        Ok(())
    }

    fn check(&self, head: &[f64], rel: &[f64], tail: &[f64]) -> Result<()> {
        if head.len() != rel.len() || rel.len() != tail.len() {
            return Err(Error::Contract(format!(
                "dimension mismatch: head {}, relation {}, tail {}",
                head.len(),
                rel.len(),
                tail.len()
            )));
        }
        self.validate(head.len())
    }

    pub fn score(&self, head: &[f64], rel: &[f64], tail: &[f64]) -> Result<f64> {
        self.check(head, rel, tail)?;
        Ok(self.score_unchecked(head, rel, tail))
    }

    /// Score without dimension checks; operands must share an even length.
    pub fn score_unchecked(&self, head: &[f64], rel: &[f64], tail: &[f64]) -> f64 {
        match self.kind {
            ScoringKind::TransE => {
                let residuals = head.iter().zip(rel).zip(tail).map(|((h, r), t)| h + r - t);
                if self.p_norm == 1 {
                    -residuals.map(f64::abs).sum::<f64>()
                } else {
                    -residuals.map(|x| x * x).sum::<f64>().sqrt()
                }
            }
            ScoringKind::DistMult => dot3(head, rel, tail),
            ScoringKind::ComplEx => {
                let m = head.len() / 2;
                let (a, b) = head.split_at(m);
                let (c, d) = rel.split_at(m);
                let (e, f) = tail.split_at(m);
                (0..m)
                    .map(|i| {
                        a[i] * c[i] * e[i] - b[i] * d[i] * e[i]
                            + a[i] * d[i] * f[i]
                            + b[i] * c[i] * f[i]
                    })
                    .sum()
            }
            ScoringKind::SimplE => {
                let m = head.len() / 2;
                let (h_head, h_tail) = head.split_at(m);
                let (r, r_inv) = rel.split_at(m);
                let (t_head, t_tail) = tail.split_at(m);
                0.5 * (dot3(h_head, r, t_tail) + dot3(t_head, r_inv, h_tail))
            }
        }
    }

    pub fn score_gradient(&self, head: &[f64], rel: &[f64], tail: &[f64]) -> Result<ScoreGradient> {
        self.check(head, rel, tail)?;
        let d = head.len();
        let mut g = ScoreGradient {
            head: vec![0.0; d],
            relation: vec![0.0; d],
            tail: vec![0.0; d],
            degenerate: false,
        };
        g.degenerate = self.accumulate_gradient(
            head,
            rel,
            tail,
            1.0,
            &mut g.head,
            &mut g.relation,
            &mut g.tail,
        );
        Ok(g)
    }

    /// Adds `scale * ds/d(operand)` into the three buffers. Returns whether the
    /// point was degenerate (TransE L2 with zero residual).
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_gradient(
        &self,
        head: &[f64],
        rel: &[f64],
        tail: &[f64],
        scale: f64,
        dh: &mut [f64],
        dr: &mut [f64],
        dt: &mut [f64],
    ) -> bool {
        let d = head.len();
        match self.kind {
            ScoringKind::TransE => {
                let res: Vec<f64> = (0..d).map(|i| head[i] + rel[i] - tail[i]).collect();
                let grad: Vec<f64> = if self.p_norm == 1 {
                    res.iter()
                        .map(|x| -x.signum() * f64::from(u8::from(*x != 0.0)))
                        .collect()
                } else {
                    let norm = res.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        return true;
                    }
                    res.iter().map(|x| -x / norm).collect()
                };
                for i in 0..d {
                    dh[i] += scale * grad[i];
                    dr[i] += scale * grad[i];
                    dt[i] -= scale * grad[i];
                }
            }
            ScoringKind::DistMult => {
                for i in 0..d {
                    dh[i] += scale * rel[i] * tail[i];
                    dr[i] += scale * head[i] * tail[i];
                    dt[i] += scale * head[i] * rel[i];
                }
            }
            ScoringKind::ComplEx => {
                let m = d / 2;
                for i in 0..m {
                    let (a, b) = (head[i], head[m + i]);
                    let (c, dd) = (rel[i], rel[m + i]);
                    let (e, f) = (tail[i], tail[m + i]);
                    dh[i] += scale * (c * e + dd * f);
                    dh[m + i] += scale * (c * f - dd * e);
                    dr[i] += scale * (a * e + b * f);
                    dr[m + i] += scale * (a * f - b * e);
                    dt[i] += scale * (a * c - b * dd);
                    dt[m + i] += scale * (a * dd + b * c);
                }
            }
            ScoringKind::SimplE => {
                let m = d / 2;
                let s = 0.5 * scale;
                for i in 0..m {
                    // 0.5 * (h_head r t_tail + t_head r_inv h_tail)
                    dh[i] += s * rel[i] * tail[m + i];
                    dr[i] += s * head[i] * tail[m + i];
                    dt[m + i] += s * head[i] * rel[i];
                    dt[i] += s * rel[m + i] * head[m + i];
                    dr[m + i] += s * tail[i] * head[m + i];
                    dh[m + i] += s * tail[i] * rel[m + i];
                }
            }
        }
        false
    }
}
