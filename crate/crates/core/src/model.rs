//! Problem data for the regime-switching American put.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Default convergence tolerance of the outer iteration.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Names accepted by [`load_preset`].
pub const PRESETS: [&str; 3] = ["example1", "example2", "fourregime"];

/// Strike, maturity and per-regime market data of an American put whose
/// rate and volatility follow a continuous-time Markov chain with generator `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    pub strike: f64,
    pub maturity: f64,
    pub rates: Vec<f64>,
    pub vols: Vec<f64>,
    /// Generator matrix, row-major, `q[m][l]` is the intensity of `m -> l`.
    pub generator: Vec<Vec<f64>>,
    pub tolerance: f64,
}

impl RegimeModel {
    pub fn regime_count(&self) -> usize {
        self.rates.len()
    }

    /// `r_m - q_mm`, the effective discount rate of regime `m`.
    pub fn effective_rate(&self, m: usize) -> f64 {
        self.rates[m] - self.generator[m][m]
    }

    /// Single-regime (decoupled) model.
    pub fn single(strike: f64, maturity: f64, rate: f64, vol: f64) -> Self {
        RegimeModel {
            strike,
            maturity,
            rates: vec![rate],
            vols: vec![vol],
            generator: vec![vec![0.0]],
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn with_tolerance(mut self, eps: f64) -> Self {
        self.tolerance = eps;
        self
    }

    pub fn with_maturity(mut self, t: f64) -> Self {
        self.maturity = t;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        validate_model(self)
    }
}

/// Checks every invariant of `model`, reporting the first violation.
pub fn validate_model(model: &RegimeModel) -> Result<(), ModelError> {
    if !(model.strike > 0.0) {
        return Err(ModelError::Strike(model.strike));
    }
    if !(model.maturity > 0.0) {
        return Err(ModelError::Maturity(model.maturity));
    }
    if !(model.tolerance > 0.0) {
        return Err(ModelError::Tolerance(model.tolerance));
    }
    let n = model.rates.len();
    if n == 0 {
        return Err(ModelError::NoRegimes);
    }
    if model.vols.len() != n {
        return Err(ModelError::Shape(format!(
            "{} rates but {} volatilities",
            n,
            model.vols.len()
        )));
    }
    if model.generator.len() != n || model.generator.iter().any(|row| row.len() != n) {
        return Err(ModelError::Shape(format!("generator must be {n}x{n}")));
    }
    for (m, (&r, &s)) in model.rates.iter().zip(&model.vols).enumerate() {
        if !r.is_finite() {
            return Err(ModelError::Rate(m));
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(ModelError::Volatility { regime: m, value: s });
        }
    }
    let scale = model
        .generator
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, q| acc.max(q.abs()));
    let row_tol = 1e-12 * scale.max(1.0);
    for (row, q) in model.generator.iter().enumerate() {
        for (col, &value) in q.iter().enumerate() {
            if col != row && (value < 0.0 || !value.is_finite()) {
                return Err(ModelError::NegativeIntensity { row, col, value });
            }
        }
        let sum: f64 = q.iter().sum();
        if sum.abs() > row_tol {
            return Err(ModelError::RowSum { row, sum });
        }
    }
    Ok(())
}

/// The three experiment set-ups: two two-regime problems and a
/// symmetric four-regime problem, all with `K = 9`, `T = 1`.
pub fn load_preset(name: &str) -> Result<RegimeModel, ModelError> {
    let two_state = vec![vec![-6.0, 6.0], vec![9.0, -9.0]];
    let model = match name {
        "example1" => RegimeModel {
            strike: 9.0,
            maturity: 1.0,
            rates: vec![0.10, 0.05],
            vols: vec![0.80, 0.30],
            generator: two_state,
            tolerance: DEFAULT_TOLERANCE,
        },
        "example2" => RegimeModel {
            strike: 9.0,
            maturity: 1.0,
            rates: vec![0.05, 0.05],
            vols: vec![0.15, 0.20],
            generator: two_state,
            tolerance: DEFAULT_TOLERANCE,
        },
        "fourregime" => {
            let third = 1.0 / 3.0;
            let generator = (0..4)
                .map(|m| (0..4).map(|l| if l == m { -1.0 } else { third }).collect())
                .collect();
            RegimeModel {
                strike: 9.0,
                maturity: 1.0,
                rates: vec![0.02, 0.10, 0.06, 0.15],
                vols: vec![0.90, 0.50, 0.70, 0.20],
                generator,
                tolerance: DEFAULT_TOLERANCE,
            }
        }
        other => return Err(ModelError::UnknownPreset(other.to_string())),
    };
    Ok(model)
}
