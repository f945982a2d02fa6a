//! Closed-form ridge probes on frozen features.
//!
//! Minimizes `‖Xw + b − y‖² + λ‖w‖²` with an unpenalized bias by centering
//! `X` and `y`, then solving `(XcᵀXc + λI) w = Xcᵀyc` with a Cholesky
//! factorization. Columns that are constant over the training rows carry
//! no signal after centering; they get weight 0 and stay out of the solve.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ProbeError, Result};
use crate::circular::{atan2_deg, sincos_deg};

/// Relative pivot size below which an unregularized system is rank-deficient.
const RANK_TOL: f64 = 1e-12;
const COND_WARN: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    /// `(max L_ii / min L_ii)²` of the Cholesky factor; a cheap lower bound
    /// on the condition number of the regularized Gram matrix.
    pub condition_estimate: f64,
}

fn check_design(x: &[f64], cols: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(ProbeError::EmptyTrainSet);
    }
    if cols == 0 || x.len() != n * cols {
        return Err(ProbeError::DimMismatch { expected: n * cols, found: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    Ok(())
}

/// Fits ridge weights on a row-major `n × cols` design (`n = y.len()`).
pub fn ridge_fit(x: &[f64], cols: usize, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let n = y.len();
    check_design(x, cols, n)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ProbeError::InvalidConfig(format!("lambda {lambda} must be a non-negative number")));
    }

    let row = |i: usize| &x[i * cols..(i + 1) * cols];
    let mut mean_x = vec![0f64; cols];
    for i in 0..n {
        for (m, v) in mean_x.iter_mut().zip(row(i)) {
            *m += v;
        }
    }
    mean_x.iter_mut().for_each(|m| *m /= n as f64);
    let mean_y = y.iter().sum::<f64>() / n as f64;

    let active: Vec<usize> = (0..cols).filter(|&j| (1..n).any(|i| x[i * cols + j] != x[j])).collect();
    let mut weights = vec![0f64; cols];
    let mut condition_estimate = 1.0;
    if !active.is_empty() {
        let xc = DMatrix::from_fn(n, active.len(), |i, a| x[i * cols + active[a]] - mean_x[active[a]]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean_y));
        let mut gram = xc.transpose() * &xc;
        for a in 0..active.len() {
            gram[(a, a)] += lambda;
        }
        let rhs = xc.transpose() * yc;
        let max_diag = gram.diagonal().max();
        let chol = gram.cholesky().ok_or(ProbeError::SingularSystem)?;
        let l_diag = chol.l_dirty().diagonal();
        let (lo, hi) = (l_diag.min(), l_diag.max());
        if lambda == 0.0 && lo * lo <= RANK_TOL * max_diag {
            return Err(ProbeError::SingularSystem);
        }
        condition_estimate = (hi / lo).powi(2);
        if condition_estimate > COND_WARN {
            warn!("ridge system is ill-conditioned (estimate {condition_estimate:.3e}, lambda {lambda})");
        }
        let w = chol.solve(&rhs);
        for (a, &j) in active.iter().enumerate() {
            weights[j] = w[a];
        }
    }
    let bias = mean_y - mean_x.iter().zip(&weights).map(|(m, w)| m * w).sum::<f64>();
    Ok(RidgeModel { weights, bias, lambda, condition_estimate })
}

/// `Xw + b` for a row-major design with `model.weights.len()` columns.
pub fn ridge_predict(model: &RidgeModel, x: &[f64]) -> Result<Vec<f64>> {
    let cols = model.weights.len();
    if cols == 0 || !x.len().is_multiple_of(cols) {
        return Err(ProbeError::DimMismatch { expected: cols, found: x.len() % cols.max(1) });
    }
    Ok(x.chunks_exact(cols)
        .map(|r| r.iter().zip(&model.weights).map(|(a, w)| a * w).sum::<f64>() + model.bias)
        .collect())
}

/// Two ridge models on `sin θ` and `cos θ`; predictions are recovered with
/// `atan2` in `[0, 360)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularModel {
    pub sin: RidgeModel,
    pub cos: RidgeModel,
}

pub fn circular_fit(x: &[f64], cols: usize, theta_deg: &[f64], lambda: f64) -> Result<CircularModel> {
    if let Some(bad) = theta_deg.iter().find(|t| !(0.0..360.0).contains(*t)) {
        return Err(ProbeError::InvalidConfig(format!("angle {bad} outside [0, 360)")));
    }
    let (s, c): (Vec<f64>, Vec<f64>) = theta_deg.iter().map(|&t| sincos_deg(t)).unzip();
    Ok(CircularModel { sin: ridge_fit(x, cols, &s, lambda)?, cos: ridge_fit(x, cols, &c, lambda)? })
}

pub fn circular_predict(model: &CircularModel, x: &[f64]) -> Result<Vec<f64>> {
    let s = ridge_predict(&model.sin, x)?;
    let c = ridge_predict(&model.cos, x)?;
    s.iter()
        .zip(&c)
        .map(|(&s, &c)| if s * s + c * c < 1e-12 { Err(ProbeError::DegeneratePrediction) } else { Ok(atan2_deg(s, c)) })
        .collect()
}
