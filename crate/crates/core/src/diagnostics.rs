//! Convergence factor, refinement error ladder and observed order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measured multigrid behaviour of one time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub rho: f64,
    pub sweep_count: usize,
    pub residual_start: f64,
    pub residual_end: f64,
}

/// `(||r^m|| / ||r^0||)^(1/m)` from the first and last entries of `norms`.
pub fn conv_factor(norms: &[f64]) -> Result<f64> {
    conv_record(norms).map(|r| r.rho)
}

pub fn conv_record(norms: &[f64]) -> Result<ConvergenceRecord> {
    if norms.len() < 2 {
        return Err(Error::Invalid("need at least two residual norms".into()));
    }
    let (first, last) = (norms[0], norms[norms.len() - 1]);
    if !(first > 0.0) {
        return Err(Error::Invalid("initial residual must be positive".into()));
    }
    let m = norms.len() - 1;
    Ok(ConvergenceRecord {
        rho: (last / first).powf(1.0 / m as f64),
        sweep_count: m,
        residual_start: first,
        residual_end: last,
    })
}

/// Per-step ratios `||r^{j+1}|| / ||r^j||`, for debugging.
pub fn step_ratios(norms: &[f64]) -> Vec<f64> {
    norms.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Max-norm difference between a solution and its refinement at co-located
/// nodes. `fine` must have `2^p` times the intervals of `coarse`.
pub fn max_difference(coarse: &[f64], fine: &[f64]) -> Result<f64> {
    let mc = coarse.len().saturating_sub(1);
    let mf = fine.len().saturating_sub(1);
    if mc == 0 || mf % mc != 0 || mf == mc {
        return Err(Error::Invalid(format!(
            "grids with {mc} and {mf} intervals are not a refinement pair"
        )));
    }
    let stride = mf / mc;
    Ok(coarse
        .iter()
        .zip(fine.iter().step_by(stride))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `(E(h, k), E(h/2, k/4))` for three solutions on successively halved grids.
pub fn error_ladder(coarse: &[f64], middle: &[f64], fine: &[f64]) -> Result<(f64, f64)> {
    Ok((max_difference(coarse, middle)?, max_difference(middle, fine)?))
}

/// `log2(E_coarse / E_fine)`.
pub fn roc(e_coarse: f64, e_fine: f64) -> Result<f64> {
    if !(e_coarse > 0.0) || !(e_fine > 0.0) {
        return Err(Error::Invalid(format!(
            "errors must be positive (got {e_coarse}, {e_fine})"
        )));
    }
    Ok((e_coarse / e_fine).log2())
}
