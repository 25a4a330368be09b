//! Option values and Greeks at spot prices in the original asset coordinate.

use serde::{Deserialize, Serialize};

use crate::coupling::{locate, sample, CrossLocation};
use crate::error::{Error, Result};
use crate::solver::Solution;

/// Value and Greeks of one regime at one spot price at `tau = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotQuote {
    pub spot: f64,
    pub regime: usize,
    pub price: f64,
    /// Log-space Greeks `W`, `Y`, `Z`.
    pub delta_x: f64,
    pub gamma_x: f64,
    pub speed_x: f64,
    /// Asset-space Greeks from the chain rule.
    pub delta: f64,
    pub gamma: f64,
    pub speed: f64,
    pub theta: f64,
}

impl SpotQuote {
    fn from_log_space(spot: f64, regime: usize, price: f64, w: f64, y: f64, z: f64, theta: f64) -> Self {
        SpotQuote {
            spot,
            regime,
            price,
            delta_x: w,
            gamma_x: y,
            speed_x: z,
            delta: w / spot,
            gamma: (y - w) / (spot * spot),
            speed: (z - 3.0 * y + 2.0 * w) / (spot * spot * spot),
            theta,
        }
    }
}

/// Quote of regime `m` at spot `spot` from a converged solution.
///
/// Below the exercise boundary the payoff `K - S` applies (log-space
/// derivatives `-S`); beyond the truncated domain everything is zero;
/// otherwise the same Hermite interpolants as the regime coupling are used.
pub fn price_at_spot(solution: &Solution, m: usize, spot: f64) -> Result<SpotQuote> {
    if !solution.converged() {
        return Err(Error::Invalid("solution did not converge to maturity".into()));
    }
    if m >= solution.states.len() {
        return Err(Error::Invalid(format!("no regime {m}")));
    }
    if !(spot > 0.0) {
        return Err(Error::Invalid(format!("spot must be positive, got {spot}")));
    }
    let st = &solution.states[m];
    let strike = solution.model.strike;
    let s_f = st.s_f();
    if spot <= s_f {
        return Ok(SpotQuote::from_log_space(spot, m, strike - spot, -spot, -spot, -spot, 0.0));
    }
    let grid = &solution.grid;
    // x = ln(S / s_f) is the frame shift from a boundary S to s_f evaluated at x = 0.
    match locate(0.0, s_f, spot, grid.h, grid.m)? {
        CrossLocation::AboveDomain => Ok(SpotQuote::from_log_space(spot, m, 0.0, 0.0, 0.0, 0.0, 0.0)),
        CrossLocation::BelowDomain { .. } => unreachable!("spot above the boundary maps to x >= 0"),
        loc @ CrossLocation::Interior { j, offset } => {
            let v = sample(&st.state.fields, grid.h, loc)?;
            let theta = st.theta[j] + offset * (st.theta[j + 1] - st.theta[j]);
            Ok(SpotQuote::from_log_space(spot, m, v[0], v[1], v[2], v[3], theta))
        }
    }
}
