//! Point losses. MADL is non-differentiable, so training uses
//! `sign(x) ~ tanh(k x)` with `k = MADL_SHARPNESS` for its gradient while the
//! reported value stays exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MADL_SHARPNESS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
    Madl,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
            LossKind::Madl => "madl",
        }
    }

    /// Exact per-observation loss.
    pub fn point(self, y_true: f64, y_pred: f64) -> f64 {
        match self {
            LossKind::Mse => (y_true - y_pred).powi(2),
            LossKind::Mae => (y_true - y_pred).abs(),
            LossKind::Madl => -sign(y_true * y_pred) * y_true.abs(),
        }
    }

    /// Per-observation loss that training differentiates.
    pub fn surrogate_point(self, y_true: f64, y_pred: f64) -> f64 {
        match self {
            LossKind::Madl => -(MADL_SHARPNESS * y_true * y_pred).tanh() * y_true.abs(),
            other => other.point(y_true, y_pred),
        }
    }

    /// d surrogate_point / d y_pred.
    pub fn surrogate_derivative(self, y_true: f64, y_pred: f64) -> f64 {
        match self {
            LossKind::Mse => 2.0 * (y_pred - y_true),
            LossKind::Mae => sign(y_pred - y_true),
            LossKind::Madl => {
                let t = (MADL_SHARPNESS * y_true * y_pred).tanh();
                -(1.0 - t * t) * MADL_SHARPNESS * y_true * y_true.abs()
            }
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            "madl" => Ok(LossKind::Madl),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?}"))),
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check(y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok(())
}

/// Mean exact loss.
pub fn loss(kind: LossKind, y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check(y_true, y_pred)?;
    let total: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(&y, &p)| kind.point(y, p))
        .sum();
    Ok(total / y_true.len() as f64)
}

/// Mean surrogate loss (equal to [`loss`] except for MADL).
pub fn surrogate_loss(kind: LossKind, y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check(y_true, y_pred)?;
    let total: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(&y, &p)| kind.surrogate_point(y, p))
        .sum();
    Ok(total / y_true.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_zero() {
        let y = [0.1, -0.4, 2.0];
        assert_eq!(loss(LossKind::Mse, &y, &y).unwrap(), 0.0);
        assert_eq!(loss(LossKind::Mae, &y, &y).unwrap(), 0.0);
    }

    #[test]
    fn madl_examples() {
        assert_eq!(loss(LossKind::Madl, &[0.01], &[0.02]).unwrap(), -0.01);
        assert_eq!(loss(LossKind::Madl, &[0.01], &[-0.02]).unwrap(), 0.01);
        for p in [-3.0, 0.0, 0.5] {
            assert_eq!(LossKind::Madl.point(0.0, p), 0.0);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            loss(LossKind::Mse, &[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(loss(LossKind::Mae, &[], &[]).is_err());
    }

    #[test]
    fn derivatives_match_differences() {
        for kind in [LossKind::Mse, LossKind::Mae, LossKind::Madl] {
            for &(y, p) in &[(0.3, 0.1), (-0.02, 0.015), (0.004, -0.003)] {
                let h = 1e-7;
                let fd = (kind.surrogate_point(y, p + h) - kind.surrogate_point(y, p - h)) / (2.0 * h);
                let an = kind.surrogate_derivative(y, p);
                assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{kind:?} {fd} {an}");
            }
        }
    }
}
