use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `max(0, 1 - s_p + s_n)`.
    Margin,
    /// `softplus(-s_p) + softplus(s_n)`, binary cross-entropy on score logits.
    Nll,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Margin => "margin",
            LossKind::Nll => "nll",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "margin" => Ok(LossKind::Margin),
            "nll" => Ok(LossKind::Nll),
            _ => Err(Error::Config(format!("unknown loss `{s}` (margin|nll)"))),
        }
    }
}

impl LossKind {
    pub fn value(self, s_p: f64, s_n: f64) -> f64 {
        match self {
            LossKind::Margin => margin_loss(s_p, s_n),
            LossKind::Nll => nll_loss(s_p, s_n),
        }
    }

    /// Loss with its derivatives `(dL/ds_p, dL/ds_n)`.
    pub fn value_and_grad(self, s_p: f64, s_n: f64) -> (f64, f64, f64) {
        match self {
            LossKind::Margin => {
                let l = margin_loss(s_p, s_n);
                if l > 0.0 {
                    (l, -1.0, 1.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            LossKind::Nll => (nll_loss(s_p, s_n), -sigmoid(-s_p), sigmoid(s_n)),
        }
    }
}

pub fn margin_loss(s_p: f64, s_n: f64) -> f64 {
    (1.0 - s_p + s_n).max(0.0)
}

pub fn nll_loss(s_p: f64, s_n: f64) -> f64 {
    softplus(-s_p) + softplus(s_n)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_fixtures() {
        assert_eq!(margin_loss(1.0, 0.0), 0.0);
        assert_eq!(margin_loss(0.0, 0.0), 1.0);
        assert_eq!(margin_loss(-2.0, 3.0), 6.0);
    }

    #[test]
    fn nll_fixtures() {
        assert!((nll_loss(0.0, 0.0) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!(nll_loss(40.0, -40.0) < 1e-6);
        assert!(nll_loss(1e6, -1e6).is_finite());
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn nll_minimum_on_the_diagonal_is_two_ln2() {
        let floor = 2.0 * std::f64::consts::LN_2;
        for i in -400..=400 {
            let x = i as f64 * 0.05;
            assert!(nll_loss(x, x) >= floor - 1e-12, "x = {x}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let eps = 1e-6;
        for kind in [LossKind::Margin, LossKind::Nll] {
            for &(p, n) in &[(0.3, -0.2), (-1.5, 2.0), (4.0, -3.0), (0.1, 0.7)] {
                let (_, dp, dn) = kind.value_and_grad(p, n);
                let np = (kind.value(p + eps, n) - kind.value(p - eps, n)) / (2.0 * eps);
                let nn = (kind.value(p, n + eps) - kind.value(p, n - eps)) / (2.0 * eps);
                assert!(
                    (dp - np).abs() < 1e-6 && (dn - nn).abs() < 1e-6,
                    "{kind} at ({p},{n})"
                );
            }
        }
    }

    #[test]
    fn losses_are_non_negative() {
        for i in -50..50 {
            for j in -50..50 {
                let (p, n) = (i as f64 * 0.3, j as f64 * 0.3);
                assert!(margin_loss(p, n) >= 0.0 && nll_loss(p, n) >= 0.0);
            }
        }
    }
}
