//! Time marching over `n = 1..=N` with per-regime state, the exercise
//! boundary update, and the time-derivative Greeks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, SpaceTimeGrid};
use crate::model::{validate_model, RegimeModel};
use crate::multigrid::{solve_time_step, CycleReport, MultigridConfig};
use crate::{Field, FieldSet, NodalState};

/// One regime at the latest time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeState {
    pub state: NodalState,
    /// `dU/dtau`.
    pub theta: Vec<f64>,
    /// `dW/dtau` (delta decay).
    pub kappa: Vec<f64>,
    /// `dY/dtau`.
    pub color: Vec<f64>,
}

impl RegimeState {
    pub fn s_f(&self) -> f64 {
        self.state.s_f
    }

    pub fn field(&self, f: Field) -> &[f64] {
        &self.state.fields[f]
    }
}

/// Payoff-time states: `s_f = K` with every field and time Greek zero.
/// See [`NodalState::initial`] for why node 0 is not seeded with `-K`.
pub fn init_state(model: &RegimeModel, grid: &SpaceTimeGrid) -> Vec<RegimeState> {
    let nodes = grid.nodes();
    (0..model.regime_count())
        .map(|_| RegimeState {
            state: NodalState::initial(model.strike, nodes),
            theta: vec![0.0; nodes],
            kappa: vec![0.0; nodes],
            color: vec![0.0; nodes],
        })
        .collect()
}

/// `s_f = K - u_0`; a non-positive boundary means the iteration diverged.
pub fn update_boundary(u0: f64, strike: f64) -> Result<f64> {
    let s = strike - u0;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::BoundaryDivergence { regime: 0, s_f: s });
    }
    Ok(s)
}

/// Backward difference in time: first order when `prev` is absent,
/// second order (`(3 v^{n+1} - 4 v^n + v^{n-1}) / 2k`) otherwise.
pub fn backward_difference(new: &[f64], now: &[f64], prev: Option<&[f64]>, k: f64) -> Result<Vec<f64>> {
    if new.len() != now.len() || prev.is_some_and(|p| p.len() != new.len()) {
        return Err(Error::Dimension {
            expected: new.len(),
            actual: now.len(),
            context: "time history",
        });
    }
    Ok(match prev {
        None => new.iter().zip(now).map(|(a, b)| (a - b) / k).collect(),
        Some(p) => new
            .iter()
            .zip(now)
            .zip(p)
            .map(|((a, b), c)| (3.0 * a - 4.0 * b + c) / (2.0 * k))
            .collect(),
    })
}

/// Theta, delta decay and color of level `n + 1` from the `u`, `w`, `y`
/// histories. `n = 0` (the first step) has no `n - 1` level.
pub fn time_greeks(
    new: &FieldSet,
    now: &FieldSet,
    prev: Option<&FieldSet>,
    k: f64,
    n: usize,
) -> Result<[Vec<f64>; 3]> {
    if n >= 1 && prev.is_none() {
        return Err(Error::MissingHistory("second-order Greeks need two past levels"));
    }
    let prev = if n == 0 { None } else { prev };
    let d = |f: Field| backward_difference(&new[f], &now[f], prev.map(|p| p[f].as_slice()), k);
    Ok([d(Field::U)?, d(Field::W)?, d(Field::Y)?])
}

/// Result of a full time march.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub model: RegimeModel,
    pub grid: SpaceTimeGrid,
    pub config: MultigridConfig,
    pub states: Vec<RegimeState>,
    /// `boundaries[m][n] = s_f(m)(tau_n)`, starting at `K`.
    pub boundaries: Vec<Vec<f64>>,
    pub reports: Vec<CycleReport>,
    /// Number of completed time steps (`N` unless the run failed).
    pub completed_steps: usize,
}

impl Solution {
    pub fn boundary(&self, m: usize) -> &[f64] {
        &self.boundaries[m]
    }

    pub fn converged(&self) -> bool {
        self.completed_steps == self.grid.steps && self.reports.iter().all(|r| r.converged)
    }

    /// Largest outer-iteration count over all time steps.
    pub fn global_max_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.outer_iterations).max().unwrap_or(0)
    }

    pub fn final_rho(&self) -> Option<f64> {
        self.reports.last().and_then(|r| r.rho)
    }

    pub fn tau(&self, n: usize) -> f64 {
        n as f64 * self.grid.k
    }
}

/// A run that stopped early, with everything computed up to the failing step.
#[derive(Debug, Clone)]
pub struct SolveFailure {
    pub error: Error,
    pub partial: Option<Box<Solution>>,
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(p) => write!(f, "{} (after {} completed steps)", self.error, p.completed_steps),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for SolveFailure {}

impl From<Error> for SolveFailure {
    fn from(error: Error) -> Self {
        SolveFailure { error, partial: None }
    }
}

/// Options of [`run_with`] beyond the cycle configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Keep per-iteration histories for every step, not only the last.
    pub keep_histories: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { keep_histories: false }
    }
}

/// Marches all `N` steps of `grid` with the multigrid configuration `config`.
pub fn run(model: &RegimeModel, grid: SpaceTimeGrid, config: &MultigridConfig) -> std::result::Result<Solution, SolveFailure> {
    run_with(model, grid, config, RunOptions::default())
}

pub fn run_with(
    model: &RegimeModel,
    grid: SpaceTimeGrid,
    config: &MultigridConfig,
    options: RunOptions,
) -> std::result::Result<Solution, SolveFailure> {
    validate_model(model).map_err(Error::from)?;
    config.validate()?;
    let hierarchy = GridHierarchy::from_finest(grid, config.levels)?;
    let regimes = model.regime_count();
    let mut solution = Solution {
        model: model.clone(),
        grid,
        config: config.clone(),
        states: init_state(model, &grid),
        boundaries: vec![vec![model.strike]; regimes],
        reports: Vec::with_capacity(grid.steps),
        completed_steps: 0,
    };
    let mut prev: Option<Vec<FieldSet>> = None;
    for n in 0..grid.steps {
        let now: Vec<NodalState> = solution.states.iter().map(|s| s.state.clone()).collect();
        let use_fmg = config.fmg && (config.fmg_every_step || n == 0);
        let step = solve_time_step(&now, model, &hierarchy, config, use_fmg);
        let (new, mut report) = match step {
            Ok(v) => v,
            Err(error) => {
                return Err(SolveFailure {
                    error,
                    partial: Some(Box::new(solution)),
                })
            }
        };
        if !report.converged {
            let iterations = report.outer_iterations;
            solution.reports.push(report);
            return Err(SolveFailure {
                error: Error::NonConvergence { step: n + 1, iterations },
                partial: Some(Box::new(solution)),
            });
        }
        if !options.keep_histories {
            if let Some(last) = solution.reports.last_mut() {
                last.compact();
            }
        }
        solution.reports.push(std::mem::take(&mut report));
        for (m, st) in new.into_iter().enumerate() {
            let [theta, kappa, color] = time_greeks(
                &st.fields,
                &now[m].fields,
                prev.as_ref().map(|p| &p[m]),
                grid.k,
                n,
            )?;
            solution.boundaries[m].push(st.s_f);
            solution.states[m] = RegimeState {
                state: st,
                theta,
                kappa,
                color,
            };
        }
        prev = Some(now.into_iter().map(|s| s.fields).collect());
        solution.completed_steps = n + 1;
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_preset;

    #[test]
    fn initial_states() {
        let model = load_preset("example1").unwrap();
        let grid = SpaceTimeGrid::new(3.0, 30, 1.0, 10).unwrap();
        let st = init_state(&model, &grid);
        assert_eq!(st.len(), 2);
        assert_eq!(st[0], st[1]);
        assert_eq!(st[0].s_f(), 9.0);
        assert!(st[0].field(Field::U).iter().all(|&v| v == 0.0));
        assert!(Field::ALL.iter().all(|&f| st[0].field(f).iter().all(|&v| v == 0.0)));
        assert_eq!(st[0].field(Field::W)[1], 0.0);
        assert!(st[0].theta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_update() {
        assert_eq!(update_boundary(0.0, 9.0).unwrap(), 9.0);
        assert_eq!(update_boundary(1.5, 9.0).unwrap(), 7.5);
        assert!(update_boundary(9.5, 9.0).is_err());
    }

    #[test]
    fn backward_differences() {
        let k = 0.1;
        let c = vec![2.0; 4];
        assert!(backward_difference(&c, &c, None, k).unwrap().iter().all(|&v| v == 0.0));
        assert!(backward_difference(&c, &c, Some(&c), k).unwrap().iter().all(|&v| v == 0.0));
        let lin = |n: f64| vec![n * k; 3];
        for v in backward_difference(&lin(3.0), &lin(2.0), Some(&lin(1.0)), k).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // BDF2 is exact on quadratics: d/dtau tau^2 = 2 tau.
        let quad = |n: f64| vec![(n * k) * (n * k); 2];
        for v in backward_difference(&quad(5.0), &quad(4.0), Some(&quad(3.0)), k).unwrap() {
            assert!((v - 2.0 * 5.0 * k).abs() < 1e-12);
        }
    }

    #[test]
    fn greeks_need_history() {
        let f = FieldSet::zeros(4);
        assert!(time_greeks(&f, &f, None, 0.1, 0).is_ok());
        assert!(matches!(time_greeks(&f, &f, None, 0.1, 3), Err(Error::MissingHistory(_))));
    }

    #[test]
    fn single_regime_put_boundary_below_strike() {
        let model = RegimeModel::single(9.0, 0.05, 0.05, 0.3);
        let grid = SpaceTimeGrid::with_square_rule(3.0, 40, model.maturity).unwrap();
        let sol = run(&model, grid, &MultigridConfig { levels: 2, ..Default::default() }).unwrap();
        assert!(sol.converged());
        assert_eq!(sol.boundary(0)[0], 9.0);
        assert!(sol.boundary(0).iter().all(|&s| s > 0.0 && s <= 9.0));
    }
}
