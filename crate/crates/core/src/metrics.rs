//! Evaluation metrics: mean squared error and regression R.
//!
//! Both metrics are always computed in physical units (m/s), after inverse
//! scaling, so reported numbers are directly comparable across models and
//! runs. R is the Pearson correlation coefficient between the expected and
//! predicted series; the denominator is computed as `sqrt(sxx * syy)` (one
//! square root of the product), which is algebraically identical to the
//! product of square roots and better behaved for small moment sums.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: expected series has {expected} values, predicted has {predicted}")]
    LengthMismatch { expected: usize, predicted: usize },
    #[error("need at least {min} values, got {got}")]
    EmptyVectors { min: usize, got: usize },
    #[error("{which} series has zero variance; regression R is undefined")]
    ZeroVariance { which: &'static str },
}

/// Mean of squared differences, summed in index order.
pub fn mse(expected: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    if expected.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            expected: expected.len(),
            predicted: predicted.len(),
        });
    }
    if expected.is_empty() {
        return Err(MetricsError::EmptyVectors { min: 1, got: 0 });
    }
    let mut sum = 0.0;
    for (e, o) in expected.iter().zip(predicted.iter()) {
        let d = e - o;
        sum += d * d;
    }
    Ok(sum / expected.len() as f64)
}

/// Pearson correlation between expected and predicted values.
///
/// Two-pass: sample means first, then centered moments. The result is
/// clamped to [-1, 1] only to absorb rounding at the 1e-15 level.
pub fn regression_r(expected: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    if expected.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            expected: expected.len(),
            predicted: predicted.len(),
        });
    }
    if expected.len() < 2 {
        return Err(MetricsError::EmptyVectors {
            min: 2,
            got: expected.len(),
        });
    }
    let n = expected.len() as f64;
    let mean_e = expected.iter().sum::<f64>() / n;
    let mean_o = predicted.iter().sum::<f64>() / n;

    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (e, o) in expected.iter().zip(predicted.iter()) {
        let de = e - mean_e;
        let dn = o - mean_o;
        sxy += de * dn;
        sxx += de * de;
        syy += dn * dn;
    }
    if sxx == 0.0 {
        return Err(MetricsError::ZeroVariance { which: "expected" });
    }
    if syy == 0.0 {
        return Err(MetricsError::ZeroVariance { which: "predicted" });
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// MSE and R for one split, with the sample count they were computed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mse: f64,
    pub r: f64,
    pub n: usize,
}

impl EvalMetrics {
    pub fn compute(expected: &[f64], predicted: &[f64]) -> Result<Self, MetricsError> {
        Ok(Self {
            mse: mse(expected, predicted)?,
            r: regression_r(expected, predicted)?,
            n: expected.len(),
        })
    }
}
