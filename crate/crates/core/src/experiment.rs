//! Experiment plumbing: run configurations, the on-disk result bundle, the
//! refinement study and the smoother comparison.
//!
//! Bundle layout of one run directory:
//!
//! | file | columns |
//! |---|---|
//! | `prices.csv` | `S,regime,price,delta,gamma,speed,theta,delta_x,gamma_x,speed_x` |
//! | `boundary.csv` | `tau,regime,s_f` |
//! | `greeks_profile.csv` | `x,regime,u,w,y,z,theta,kappa,color` at `tau = T` |
//! | `diagnostics.json` | iteration counts, `rho` per step, residual histories |
//! | `plot/boundary.dat` | `tau` then `s_f` of every regime |
//! | `plot/profile_<m>.dat` | `S`, value and asset-space Greeks of regime `m` |
//!
//! Regimes are numbered from 1 in every file. Prices carry 10 significant
//! digits; everything else is written with the shortest representation
//! that parses back to the same `f64`. Asset-space Greeks follow from the
//! chain rule of `x = ln(S / s_f)`: `delta = W / S`, `gamma = (Y - W) / S^2`,
//! `speed = (Z - 3Y + 2W) / S^3`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{max_difference, roc};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::model::{load_preset, RegimeModel};
use crate::multigrid::MultigridConfig;
use crate::readout::{price_at_spot, SpotQuote};
use crate::solver::{run_with, RunOptions, Solution};
use crate::Field;

/// Spots of the two-regime price tables.
pub const TABLE_SPOTS: [f64; 10] = [3.5, 4.0, 4.5, 6.0, 7.5, 8.5, 9.0, 9.5, 10.5, 12.0];

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Name of the preset the model came from, if any.
    pub preset: Option<String>,
    pub model: RegimeModel,
    pub x_max: f64,
    pub h: f64,
    /// Explicit step count; `None` uses `k = h^2`.
    pub steps: Option<usize>,
    pub multigrid: MultigridConfig,
    pub spots: Vec<f64>,
    pub out: PathBuf,
    /// Keep residual histories of every step in the report.
    pub full_histories: bool,
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        Ok(RunConfig {
            preset: Some(name.to_string()),
            model: load_preset(name)?,
            x_max: 3.0,
            h: 0.0125,
            steps: None,
            multigrid: MultigridConfig::default(),
            spots: TABLE_SPOTS.to_vec(),
            out: PathBuf::from("out"),
            full_histories: false,
        })
    }

    /// Node count `M = x_max / h`, which must come out integral.
    pub fn nodes_m(&self) -> Result<usize> {
        if !(self.h > 0.0) || !(self.x_max > 0.0) {
            return Err(Error::Invalid(format!("need h > 0 and x_max > 0, got {} and {}", self.h, self.x_max)));
        }
        let m = (self.x_max / self.h).round();
        if (m * self.h - self.x_max).abs() > 1e-9 * self.x_max || m < 2.0 {
            return Err(Error::Invalid(format!("x_max = {} is not a multiple of h = {}", self.x_max, self.h)));
        }
        Ok(m as usize)
    }

    pub fn grid(&self) -> Result<SpaceTimeGrid> {
        let m = self.nodes_m()?;
        match self.steps {
            Some(n) => SpaceTimeGrid::new(self.x_max, m, self.model.maturity, n),
            None => SpaceTimeGrid::with_square_rule(self.x_max, m, self.model.maturity),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.multigrid.validate()?;
        self.grid()?;
        if let Some(s) = self.spots.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Invalid(format!("spot prices must be positive, got {s}")));
        }
        Ok(())
    }

    /// `levels` configurations halving `h` and quartering `k` each time.
    pub fn ladder(&self, levels: usize) -> Result<Vec<RunConfig>> {
        let n0 = self.grid()?.steps;
        Ok((0..levels)
            .map(|i| RunConfig {
                h: self.h / (1 << i) as f64,
                steps: Some(n0 << (2 * i)),
                out: self.out.join(format!("h{i}")),
                ..self.clone()
            })
            .collect())
    }
}

/// Summary written as `diagnostics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub m: usize,
    pub steps: usize,
    pub converged: bool,
    pub completed_steps: usize,
    /// Present when the run stopped early.
    pub error: Option<String>,
    pub global_max_iterations: usize,
    pub iterations_per_step: Vec<usize>,
    pub rho_per_step: Vec<Option<f64>>,
    pub final_rho: Option<f64>,
    /// `U` residual norms by step; empty for steps whose history was dropped.
    pub residual_histories: Vec<Vec<f64>>,
    pub fine_sweeps: usize,
    pub wall_seconds: f64,
}

/// In-memory result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub quotes: Vec<SpotQuote>,
    /// Complete for a converged run, partial otherwise.
    pub solution: Solution,
}

/// Solves without touching the disk.
pub fn solve(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let grid = config.grid()?;
    let started = Instant::now();
    let options = RunOptions { keep_histories: config.full_histories };
    let (solution, error) = match run_with(&config.model, grid, &config.multigrid, options) {
        Ok(s) => (s, None),
        Err(f) => match f.partial {
            Some(p) => (*p, Some(f.error.to_string())),
            None => return Err(f.error),
        },
    };
    let wall_seconds = started.elapsed().as_secs_f64();
    let quotes = if error.is_none() {
        let mut q = Vec::with_capacity(config.spots.len() * solution.states.len());
        for &spot in &config.spots {
            for m in 0..solution.states.len() {
                q.push(price_at_spot(&solution, m, spot)?);
            }
        }
        q
    } else {
        Vec::new()
    };
    let report = RunReport {
        config: config.clone(),
        m: grid.m,
        steps: grid.steps,
        converged: error.is_none() && solution.converged(),
        completed_steps: solution.completed_steps,
        error,
        global_max_iterations: solution.global_max_iterations(),
        iterations_per_step: solution.reports.iter().map(|r| r.outer_iterations).collect(),
        rho_per_step: solution.reports.iter().map(|r| r.rho).collect(),
        final_rho: solution.final_rho(),
        residual_histories: solution
            .reports
            .iter()
            .map(|r| {
                let u = r.u_residuals();
                if u.is_empty() {
                    u
                } else {
                    std::iter::once(r.initial_residual).chain(u).collect()
                }
            })
            .collect(),
        fine_sweeps: solution.reports.iter().map(|r| r.fine_sweeps).sum(),
        wall_seconds,
    };
    Ok(RunOutcome { report, quotes, solution })
}

/// Solves and writes the bundle into `config.out`. A run that stops early
/// still writes its bundle, with `converged: false` in the report.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutcome> {
    let outcome = solve(config)?;
    write_bundle(&config.out, &outcome)?;
    Ok(outcome)
}

/// Ten significant digits, plain decimal notation.
pub fn sig10(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let decimals = (9 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn prices_csv(quotes: &[SpotQuote]) -> String {
    let mut s = String::from("S,regime,price,delta,gamma,speed,theta,delta_x,gamma_x,speed_x\n");
    for q in quotes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            q.spot,
            q.regime + 1,
            sig10(q.price),
            q.delta,
            q.gamma,
            q.speed,
            q.theta,
            q.delta_x,
            q.gamma_x,
            q.speed_x
        );
    }
    s
}

pub fn boundary_csv(solution: &Solution) -> String {
    let mut s = String::from("tau,regime,s_f\n");
    for (m, traj) in solution.boundaries.iter().enumerate() {
        for (n, sf) in traj.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", solution.tau(n), m + 1, sf);
        }
    }
    s
}

pub fn greeks_profile_csv(solution: &Solution) -> String {
    let mut s = String::from("x,regime,u,w,y,z,theta,kappa,color\n");
    for (m, st) in solution.states.iter().enumerate() {
        for i in 0..solution.grid.nodes() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                solution.grid.node(i),
                m + 1,
                st.field(Field::U)[i],
                st.field(Field::W)[i],
                st.field(Field::Y)[i],
                st.field(Field::Z)[i],
                st.theta[i],
                st.kappa[i],
                st.color[i]
            );
        }
    }
    s
}

fn plot_boundary(solution: &Solution) -> String {
    let mut s = String::from("# tau");
    for m in 0..solution.boundaries.len() {
        let _ = write!(s, " s_f{}", m + 1);
    }
    s.push('\n');
    let len = solution.boundaries.iter().map(Vec::len).min().unwrap_or(0);
    for n in 0..len {
        let _ = write!(s, "{}", solution.tau(n));
        for traj in &solution.boundaries {
            let _ = write!(s, " {}", traj[n]);
        }
        s.push('\n');
    }
    s
}

/// Nodal curves of regime `m` against `S = s_f e^x`.
fn plot_profile(solution: &Solution, m: usize) -> String {
    let st = &solution.states[m];
    let mut s = String::from("# S V delta gamma speed theta\n");
    for i in 0..solution.grid.nodes() {
        let spot = st.s_f() * solution.grid.node(i).exp();
        let (u, w, y, z) = (st.field(Field::U)[i], st.field(Field::W)[i], st.field(Field::Y)[i], st.field(Field::Z)[i]);
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            spot,
            u,
            w / spot,
            (y - w) / (spot * spot),
            (z - 3.0 * y + 2.0 * w) / (spot * spot * spot),
            st.theta[i]
        );
    }
    s
}

pub fn write_bundle(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir.join("plot"))?;
    let sol = &outcome.solution;
    fs::write(dir.join("prices.csv"), prices_csv(&outcome.quotes))?;
    fs::write(dir.join("boundary.csv"), boundary_csv(sol))?;
    fs::write(dir.join("greeks_profile.csv"), greeks_profile_csv(sol))?;
    let json = serde_json::to_string_pretty(&outcome.report).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("diagnostics.json"), json + "\n")?;
    fs::write(dir.join("plot").join("boundary.dat"), plot_boundary(sol))?;
    for m in 0..sol.states.len() {
        fs::write(dir.join("plot").join(format!("profile_{}.dat", m + 1)), plot_profile(sol, m))?;
    }
    Ok(())
}

/// Parses a `prices.csv` back into `(S, regime, price)` rows.
pub fn read_prices(text: &str) -> Result<Vec<(f64, usize, f64)>> {
    let bad = |line: &str| Error::Invalid(format!("malformed prices.csv line: {line}"));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 10 {
                return Err(bad(line));
            }
            let s = cols[0].parse().map_err(|_| bad(line))?;
            let m = cols[1].parse().map_err(|_| bad(line))?;
            let p = cols[2].parse().map_err(|_| bad(line))?;
            Ok((s, m, p))
        })
        .collect()
}

/// Outcome of a refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub h: Vec<f64>,
    pub k: Vec<f64>,
    /// `errors[i] = max |u_1(h_i) - u_1(h_{i+1})|` over shared nodes at `tau = T`.
    pub errors: Vec<f64>,
    /// `rates[i] = log2(errors[i] / errors[i + 1])`.
    pub rates: Vec<f64>,
}

fn check_ladder(configs: &[RunConfig]) -> Result<Vec<SpaceTimeGrid>> {
    if configs.len() < 3 {
        return Err(Error::Invalid("a refinement study needs at least three grids".into()));
    }
    let grids: Vec<SpaceTimeGrid> = configs.iter().map(RunConfig::grid).collect::<Result<_>>()?;
    for (pair, g) in configs.windows(2).zip(grids.windows(2)) {
        let (a, b) = (&pair[0], &pair[1]);
        let refines = g[1].m == 2 * g[0].m && g[1].steps == 4 * g[0].steps;
        if !refines || a.model != b.model || a.x_max != b.x_max {
            return Err(Error::Invalid(format!(
                "not a refinement sequence: (M, N) = ({}, {}) then ({}, {})",
                g[0].m, g[0].steps, g[1].m, g[1].steps
            )));
        }
    }
    Ok(grids)
}

/// Runs each configuration of the ladder and measures the observed order
/// on the first regime's value. Writes `roc.csv` into `out`.
pub fn convergence_study(configs: &[RunConfig], out: &Path) -> Result<RocReport> {
    let grids = check_ladder(configs)?;
    let mut finals = Vec::with_capacity(configs.len());
    for c in configs {
        let o = solve(c)?;
        if let Some(e) = o.report.error {
            return Err(Error::Invalid(format!("run at h = {} failed: {e}", c.h)));
        }
        finals.push(o.solution.states[0].field(Field::U).to_vec());
    }
    let errors: Vec<f64> = finals.windows(2).map(|w| max_difference(&w[0], &w[1])).collect::<Result<_>>()?;
    let rates: Vec<f64> = errors.windows(2).map(|e| roc(e[0], e[1])).collect::<Result<_>>()?;
    let report = RocReport {
        h: grids.iter().map(|g| g.h).collect(),
        k: grids.iter().map(|g| g.k).collect(),
        errors,
        rates,
    };
    fs::create_dir_all(out)?;
    fs::write(out.join("roc.csv"), roc_csv(&report))?;
    Ok(report)
}

/// One row per error: the coarser grid's `h` and `k`, the error, and the
/// rate against the next error (empty on the last row).
pub fn roc_csv(report: &RocReport) -> String {
    let mut s = String::from("h,k,max_error,roc\n");
    for (i, e) in report.errors.iter().enumerate() {
        let rate = report.rates.get(i).map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", report.h[i], report.k[i], e, rate);
    }
    s
}

/// One line of a smoother comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherRow {
    pub label: String,
    pub levels: usize,
    pub fmg: bool,
    pub converged: bool,
    pub global_max_iterations: usize,
    pub final_rho: Option<f64>,
    pub fine_sweeps: usize,
    pub wall_seconds: f64,
}

/// Plain Gauss-Seidel against the configured M-cycle on the same grid.
/// Writes `smoothers.csv` into `config.out`.
pub fn compare_smoothers(config: &RunConfig) -> Result<Vec<SmootherRow>> {
    let gs = RunConfig {
        multigrid: MultigridConfig {
            tolerance: config.multigrid.tolerance,
            max_outer: config.multigrid.max_outer,
            gate_all_fields: config.multigrid.gate_all_fields,
            ..MultigridConfig::plain_gauss_seidel()
        },
        ..config.clone()
    };
    let mut rows = Vec::new();
    for (label, c) in [("gauss-seidel", &gs), ("m-cycle", config)] {
        let o = solve(c)?;
        rows.push(SmootherRow {
            label: label.to_string(),
            levels: c.multigrid.levels,
            fmg: c.multigrid.fmg,
            converged: o.report.converged,
            global_max_iterations: o.report.global_max_iterations,
            final_rho: o.report.final_rho,
            fine_sweeps: o.report.fine_sweeps,
            wall_seconds: o.report.wall_seconds,
        });
    }
    fs::create_dir_all(&config.out)?;
    let mut s = String::from("method,levels,fmg,converged,global_max_iterations,final_rho,fine_sweeps,wall_seconds\n");
    for r in &rows {
        let rho = r.final_rho.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.label, r.levels, r.fmg, r.converged, r.global_max_iterations, rho, r.fine_sweeps, r.wall_seconds
        );
    }
    fs::write(config.out.join("smoothers.csv"), s)?;
    Ok(rows)
}
