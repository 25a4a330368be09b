//! Outer iteration of one time step: nonlinear Gauss-Seidel relaxation on
//! the finest grid accelerated by the modified multigrid cycle (M-cycle),
//! with optional full-multigrid initialisation.
//!
//! In an M-cycle each coarse level is visited once, coarsest first. The
//! current fine residual is restricted straight down to that level, the
//! defect equation is smoothed there with `c (q - i)^2` sweeps from a zero
//! guess, the error is brought back to the finest grid by cubic
//! interpolation, and the corrected iterate is relaxed `nu2` times before the
//! next (finer) level is processed.

use serde::{Deserialize, Serialize};

use crate::coupling::cross_sums;
use crate::diagnostics::conv_factor;
use crate::discretization::{assemble_rhs, beta, norm2, residual, stencil_coeffs, ForceInputs, StencilCoeffs};
use crate::error::{Error, Result};
use crate::grid::{inject, prolong_cubic_times, restrict_times, GridHierarchy, SpaceTimeGrid};
use crate::model::RegimeModel;
use crate::smoother::{gs_sweep, inner_sweeps, relax_batch, BatchItem};
use crate::solver::update_boundary;
use crate::{Field, FieldSet, NodalState};

/// Cycle shape and stopping rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultigridConfig {
    /// Number of grids `q`, finest included. `1` means plain Gauss-Seidel.
    pub levels: usize,
    /// Factor `c` of the inner schedule `s_i = c (q - i)^2`.
    pub schedule_factor: usize,
    pub nu1: usize,
    pub nu2: usize,
    pub fmg: bool,
    /// Run the full-multigrid initialisation at every step (otherwise only at the first).
    pub fmg_every_step: bool,
    /// Overrides the model tolerance when set.
    pub tolerance: Option<f64>,
    pub max_outer: usize,
    /// Gate convergence on every field's residual, not only `U`'s.
    pub gate_all_fields: bool,
}

impl Default for MultigridConfig {
    fn default() -> Self {
        MultigridConfig {
            levels: 3,
            schedule_factor: 3,
            nu1: 2,
            nu2: 2,
            fmg: false,
            fmg_every_step: true,
            tolerance: None,
            max_outer: 10_000,
            gate_all_fields: false,
        }
    }
}

impl MultigridConfig {
    /// Classic single-grid Gauss-Seidel: one sweep per outer iteration.
    pub fn plain_gauss_seidel() -> Self {
        MultigridConfig {
            levels: 1,
            nu1: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.schedule_factor == 0 || self.nu1 == 0 || self.max_outer == 0 {
            return Err(Error::Invalid(
                "levels, schedule factor, nu1 and max_outer must be positive".into(),
            ));
        }
        if let Some(eps) = self.tolerance {
            if !(eps > 0.0) {
                return Err(Error::Invalid(format!("tolerance must be positive, got {eps}")));
            }
        }
        Ok(())
    }

    /// `s_i` for coarse level `i`.
    pub fn inner_sweeps(&self, level: usize) -> usize {
        inner_sweeps(self.schedule_factor, self.levels, level)
    }
}

/// Diagnostics of one time step's outer loop.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleReport {
    pub outer_iterations: usize,
    pub converged: bool,
    /// Per outer iteration: largest absolute l2 residual over regimes, per field.
    pub residual_history: Vec<[f64; 5]>,
    /// Per outer iteration: largest `||r_u|| / ||f_u||` over regimes.
    pub normalized_history: Vec<f64>,
    /// Per outer iteration: exercise boundary of every regime.
    pub boundary_history: Vec<Vec<f64>>,
    /// Largest `U` residual norm of the starting guess, before any sweep.
    pub initial_residual: f64,
    /// Convergence factor of the `U` residuals, counted from `initial_residual`.
    pub rho: Option<f64>,
    /// Fine-grid sweeps performed, coarse smoothing excluded.
    pub fine_sweeps: usize,
}

impl CycleReport {
    /// Drops the per-iteration histories, keeping counts and `rho`.
    pub fn compact(&mut self) {
        self.residual_history = Vec::new();
        self.normalized_history = Vec::new();
        self.boundary_history = Vec::new();
    }

    pub fn u_residuals(&self) -> Vec<f64> {
        self.residual_history.iter().map(|r| r[0]).collect()
    }
}

/// Residuals of every field of every regime for one iterate.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub vectors: Vec<FieldSet>,
    pub norms: Vec<[f64; 5]>,
    pub force_norms: Vec<[f64; 5]>,
}

impl Residuals {
    /// `max_m ||r_F|| / ||f_F||`.
    pub fn max_normalized(&self, field: Field) -> f64 {
        self.norms
            .iter()
            .zip(&self.force_norms)
            .map(|(r, f)| {
                let f = f[field.index()];
                if f > 0.0 {
                    r[field.index()] / f
                } else {
                    r[field.index()]
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn max_norms(&self) -> [f64; 5] {
        let mut out = [0.0_f64; 5];
        for r in &self.norms {
            for (o, v) in out.iter_mut().zip(r) {
                *o = o.max(*v);
            }
        }
        out
    }
}

/// The discrete problem of one time step on one grid.
#[derive(Debug, Clone)]
pub struct StepSystem<'a> {
    pub model: &'a RegimeModel,
    pub grid: SpaceTimeGrid,
    pub coeffs: Vec<StencilCoeffs>,
    pub old: Vec<NodalState>,
    pub old_cross: Vec<FieldSet>,
}

impl<'a> StepSystem<'a> {
    pub fn new(model: &'a RegimeModel, grid: SpaceTimeGrid, old: Vec<NodalState>) -> Result<Self> {
        let regimes = model.regime_count();
        if old.len() != regimes {
            return Err(Error::Dimension {
                expected: regimes,
                actual: old.len(),
                context: "regime states",
            });
        }
        if let Some(bad) = old.iter().find(|s| s.nodes() != grid.nodes()) {
            return Err(Error::Dimension {
                expected: grid.nodes(),
                actual: bad.nodes(),
                context: "state nodes",
            });
        }
        let coeffs = (0..regimes).map(|m| stencil_coeffs(model, m, grid.h, grid.k)).collect();
        let old_cross = cross_sums(model, &old, grid.h)?;
        Ok(StepSystem {
            model,
            grid,
            coeffs,
            old,
            old_cross,
        })
    }

    pub fn regimes(&self) -> usize {
        self.old.len()
    }

    pub fn beta(&self, m: usize, iterate: &[NodalState]) -> Result<f64> {
        beta(
            iterate[m].s_f,
            self.old[m].s_f,
            self.grid.k,
            self.model.rates[m],
            self.model.vols[m],
        )
    }

    pub fn force(&self, field: Field, m: usize, iterate: &[NodalState], cross: &FieldSet) -> Result<Vec<f64>> {
        let inputs = ForceInputs {
            coeffs: &self.coeffs[m],
            beta: self.beta(m, iterate)?,
            strike: self.model.strike,
            old: &self.old[m],
            new: &iterate[m],
            old_cross: &self.old_cross[m],
            new_cross: cross,
        };
        assemble_rhs(field, &inputs)
    }

    /// Right-hand sides of every field, assembled from one snapshot.
    pub fn forces(&self, iterate: &[NodalState]) -> Result<Vec<FieldSet>> {
        let cross = cross_sums(self.model, iterate, self.grid.h)?;
        (0..self.regimes())
            .map(|m| {
                let mut fs = FieldSet::zeros(self.grid.nodes());
                for field in Field::ALL {
                    fs[field] = self.force(field, m, iterate, &cross[m])?;
                }
                Ok(fs)
            })
            .collect()
    }

    pub fn residuals(&self, iterate: &[NodalState]) -> Result<Residuals> {
        let forces = self.forces(iterate)?;
        let mut vectors = Vec::with_capacity(self.regimes());
        let mut norms = Vec::with_capacity(self.regimes());
        let mut force_norms = Vec::with_capacity(self.regimes());
        for (m, f) in forces.iter().enumerate() {
            let r = FieldSet::from_fn(|field| residual(field, &iterate[m].fields[field], &f[field], &self.coeffs[m]));
            norms.push(Field::ALL.map(|field| norm2(&r[field])));
            force_norms.push(Field::ALL.map(|field| norm2(&f[field])));
            vectors.push(r);
        }
        Ok(Residuals {
            vectors,
            norms,
            force_norms,
        })
    }

    /// One nonlinear sweep: coupling samples are refreshed once, then every
    /// regime relaxes its fields in order `U, W, Y, Z, Zhat`, each with a
    /// force assembled from the freshest values. The exercise boundary moves
    /// with `u_0` right after the `U` sweep. Returns the largest nodal change.
    pub fn sweep(&self, iterate: &mut [NodalState]) -> Result<f64> {
        let cross = cross_sums(self.model, iterate, self.grid.h)?;
        let mut max_update = 0.0_f64;
        for m in 0..self.regimes() {
            for field in Field::ALL {
                let f = self.force(field, m, iterate, &cross[m])?;
                let out = gs_sweep(field, &mut iterate[m].fields[field], &f, &self.coeffs[m])?;
                max_update = max_update.max(out.max_update);
                if field == Field::U {
                    self.move_boundary(m, &mut iterate[m])?;
                }
            }
        }
        Ok(max_update)
    }

    pub fn relax(&self, iterate: &mut [NodalState], count: usize) -> Result<f64> {
        let mut max_update = 0.0_f64;
        for _ in 0..count {
            max_update = max_update.max(self.sweep(iterate)?);
        }
        Ok(max_update)
    }

    fn move_boundary(&self, m: usize, state: &mut NodalState) -> Result<()> {
        state.s_f = update_boundary(state.fields[Field::U][0], self.model.strike)
            .map_err(|_| Error::BoundaryDivergence {
                regime: m,
                s_f: self.model.strike - state.fields[Field::U][0],
            })?;
        state.apply_dirichlet(self.model.strike);
        Ok(())
    }
}

/// Coefficients of every regime on every coarse level, `[level][regime]`.
fn coarse_coeffs(model: &RegimeModel, hierarchy: &GridHierarchy) -> Vec<Vec<StencilCoeffs>> {
    hierarchy
        .grids()
        .iter()
        .map(|g| (0..model.regime_count()).map(|m| stencil_coeffs(model, m, g.h, g.k)).collect())
        .collect()
}

/// One M-cycle on the fine system. `first_residual` is the residual already
/// computed for the convergence test; later levels recompute it.
/// Returns the number of fine sweeps performed.
pub fn m_cycle(
    system: &StepSystem<'_>,
    hierarchy: &GridHierarchy,
    config: &MultigridConfig,
    iterate: &mut [NodalState],
    first_residual: Residuals,
) -> Result<usize> {
    let q = hierarchy.levels();
    let coeffs = coarse_coeffs(system.model, hierarchy);
    let mut res = Some(first_residual);
    let mut sweeps = 0;
    for level in 0..q.saturating_sub(1) {
        let r = match res.take() {
            Some(r) => r,
            None => system.residuals(iterate)?,
        };
        let times = q - 1 - level;
        let count = config.inner_sweeps(level);
        let mut defects = Vec::with_capacity(iterate.len() * 5);
        for m in 0..iterate.len() {
            for field in Field::ALL {
                let rc = restrict_times(&r.vectors[m][field], field, times)?;
                let e = vec![0.0; rc.len()];
                defects.push((m, field, rc, e));
            }
        }
        let mut items: Vec<BatchItem<'_>> = defects
            .iter_mut()
            .map(|(m, field, rc, e)| BatchItem {
                field: *field,
                values: e,
                force: rc,
                coeffs: &coeffs[level][*m],
            })
            .collect();
        relax_batch(&mut items, count)?;
        drop(items);
        for (m, field, _, e) in &defects {
            let ef = prolong_cubic_times(e, times)?;
            for (v, de) in iterate[*m].fields[*field].iter_mut().zip(&ef) {
                *v += de;
            }
        }
        for (m, state) in iterate.iter_mut().enumerate() {
            system.move_boundary(m, state)?;
        }
        system.relax(iterate, config.nu2)?;
        sweeps += config.nu2;
    }
    Ok(sweeps)
}

/// Nested-iteration initial guess: the step is solved on the coarsest grid
/// from the injected old level, and its increment over the old level is
/// carried up by cubic interpolation, smoothing on every intermediate level.
pub fn fmg_init(
    model: &RegimeModel,
    hierarchy: &GridHierarchy,
    old: &[NodalState],
    config: &MultigridConfig,
) -> Result<Vec<NodalState>> {
    let q = hierarchy.levels();
    let eps = config.tolerance.unwrap_or(model.tolerance);
    let coarse_old = |level: usize| -> Vec<NodalState> {
        old.iter()
            .map(|s| NodalState {
                s_f: s.s_f,
                fields: s.fields.map(|_, v| inject(v, q - 1 - level)),
            })
            .collect()
    };
    let mut level_old = coarse_old(0);
    let mut iterate = level_old.clone();
    for level in 0..q {
        let grid = *hierarchy.level(level);
        if level > 0 {
            let next_old = coarse_old(level);
            iterate = next_old
                .iter()
                .zip(iterate.iter().zip(&level_old))
                .map(|(base, (new, prev))| lift_increment(base, new, prev))
                .collect::<Result<_>>()?;
            for st in iterate.iter_mut() {
                st.s_f = model.strike - st.fields[Field::U][0];
                st.apply_dirichlet(model.strike);
            }
            level_old = next_old;
        }
        if level + 1 == q && q > 1 {
            break;
        }
        let system = StepSystem::new(model, grid, level_old.clone())?;
        // Coarse levels share the fine time step, so their `sigma^2 k / h^2`
        // is small and the boundary feedback can blow up there. Growth of
        // the boundary update stops the smoothing and keeps the last sane
        // iterate.
        let mut last_ds = f64::INFINITY;
        for _ in 0..config.inner_sweeps(level) {
            let saved = iterate.clone();
            let before: Vec<f64> = iterate.iter().map(|s| s.s_f).collect();
            let change = match system.sweep(&mut iterate) {
                Ok(c) => c,
                Err(_) => {
                    iterate = saved;
                    break;
                }
            };
            let ds = iterate.iter().zip(&before).map(|(s, b)| (s.s_f - b).abs()).fold(0.0, f64::max);
            if !sane(&iterate, model.strike) || ds > last_ds {
                iterate = saved;
                break;
            }
            last_ds = ds;
            if change < eps && ds < eps {
                break;
            }
        }
    }
    if !sane(&iterate, model.strike) {
        return Ok(old.to_vec());
    }
    Ok(iterate)
}

fn sane(states: &[NodalState], strike: f64) -> bool {
    states.iter().all(|s| {
        s.s_f > 0.0 && s.s_f <= strike && Field::ALL.iter().all(|&f| s.fields[f].iter().all(|v| v.is_finite()))
    })
}

/// `base + P(new - prev)` with `P` one level of cubic prolongation.
fn lift_increment(base: &NodalState, new: &NodalState, prev: &NodalState) -> Result<NodalState> {
    let mut fields = base.fields.clone();
    for f in Field::ALL {
        let inc: Vec<f64> = new.fields[f].iter().zip(&prev.fields[f]).map(|(a, b)| a - b).collect();
        let fine = prolong_cubic_times(&inc, 1)?;
        for (v, d) in fields[f].iter_mut().zip(&fine) {
            *v += d;
        }
    }
    Ok(NodalState { s_f: new.s_f, fields })
}

/// Solves time level `n + 1` from level `n`.
pub fn solve_time_step(
    old: &[NodalState],
    model: &RegimeModel,
    hierarchy: &GridHierarchy,
    config: &MultigridConfig,
    use_fmg: bool,
) -> Result<(Vec<NodalState>, CycleReport)> {
    let grid = *hierarchy.finest();
    let system = StepSystem::new(model, grid, old.to_vec())?;
    let eps = config.tolerance.unwrap_or(model.tolerance);
    let mut iterate = if use_fmg && hierarchy.levels() > 1 {
        fmg_init(model, hierarchy, old, config)?
    } else {
        old.to_vec()
    };
    let mut report = CycleReport::default();
    report.initial_residual = system.residuals(&iterate)?.max_norms()[0];
    for it in 1..=config.max_outer {
        let before: Vec<f64> = iterate.iter().map(|s| s.s_f).collect();
        system.relax(&mut iterate, config.nu1)?;
        report.fine_sweeps += config.nu1;
        let res = system.residuals(&iterate)?;
        let ds = iterate
            .iter()
            .zip(&before)
            .map(|(s, b)| (s.s_f - b).abs())
            .fold(0.0, f64::max);
        let normalized = if config.gate_all_fields {
            Field::ALL.iter().map(|&f| res.max_normalized(f)).fold(0.0, f64::max)
        } else {
            res.max_normalized(Field::U)
        };
        report.outer_iterations = it;
        report.residual_history.push(res.max_norms());
        report.normalized_history.push(normalized);
        report.boundary_history.push(iterate.iter().map(|s| s.s_f).collect());
        if ds < eps && normalized < eps {
            report.converged = true;
            break;
        }
        report.fine_sweeps += m_cycle(&system, hierarchy, config, &mut iterate, res)?;
    }
    let mut norms = vec![report.initial_residual];
    norms.extend(report.u_residuals());
    report.rho = conv_factor(&norms).ok();
    Ok((iterate, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_preset;

    fn setup(m: usize, q: usize) -> (RegimeModel, GridHierarchy) {
        let model = load_preset("example1").unwrap();
        let h = 3.0 / m as f64;
        let steps = (1.0 / (h * h)).round() as usize;
        (model.clone(), build(&model, m, steps, q))
    }

    fn build(model: &RegimeModel, m: usize, steps: usize, q: usize) -> GridHierarchy {
        crate::grid::build_hierarchy(3.0, m, model.maturity, steps, q).unwrap()
    }

    fn initial(model: &RegimeModel, nodes: usize) -> Vec<NodalState> {
        (0..model.regime_count()).map(|_| NodalState::initial(model.strike, nodes)).collect()
    }

    #[test]
    fn schedule() {
        let c = MultigridConfig::default();
        assert_eq!(c.inner_sweeps(0), 27);
        assert_eq!(c.inner_sweeps(1), 12);
        assert!(MultigridConfig { levels: 0, ..c.clone() }.validate().is_err());
        assert!(MultigridConfig { tolerance: Some(0.0), ..c }.validate().is_err());
    }

    #[test]
    fn zero_residual_zero_iterate_gives_force() {
        let (model, hier) = setup(24, 2);
        let old = initial(&model, 25);
        let sys = StepSystem::new(&model, *hier.finest(), old.clone()).unwrap();
        let mut zero = old.clone();
        for s in zero.iter_mut() {
            s.fields = FieldSet::zeros(25);
        }
        let forces = sys.forces(&zero).unwrap();
        let res = sys.residuals(&zero).unwrap();
        for m in 0..2 {
            for f in Field::ALL {
                assert_eq!(res.vectors[m][f], forces[m][f]);
            }
        }
    }

    #[test]
    fn converged_step_is_fixed_point_of_cycle() {
        let (model, hier) = setup(48, 3);
        let old = initial(&model, 49);
        let config = MultigridConfig {
            tolerance: Some(1e-12),
            gate_all_fields: true,
            ..Default::default()
        };
        let (new, report) = solve_time_step(&old, &model, &hier, &config, false).unwrap();
        assert!(report.converged);
        let sys = StepSystem::new(&model, *hier.finest(), old).unwrap();
        let mut again = new.clone();
        let res = sys.residuals(&again).unwrap();
        m_cycle(&sys, &hier, &config, &mut again, res).unwrap();
        for (a, b) in again.iter().zip(&new) {
            for f in Field::ALL {
                for (x, y) in a.fields[f].iter().zip(&b.fields[f]) {
                    assert!((x - y).abs() < 1e-9 * y.abs().max(1.0), "{f:?}");
                }
            }
        }
    }

    #[test]
    fn relaxation_reduces_residual() {
        let (model, hier) = setup(48, 2);
        let old = initial(&model, 49);
        let sys = StepSystem::new(&model, *hier.finest(), old.clone()).unwrap();
        let mut it = old.clone();
        // Freeze forces at the starting snapshot and relax the linear systems.
        let forces = sys.forces(&it).unwrap();
        let before: f64 = (0..2).map(|m| norm2(&residual(Field::U, &it[m].fields[Field::U], &forces[m][Field::U], &sys.coeffs[m]))).sum();
        for m in 0..2 {
            crate::smoother::relax(Field::U, &mut it[m].fields[Field::U], &forces[m][Field::U], &sys.coeffs[m], 2).unwrap();
        }
        let after: f64 = (0..2).map(|m| norm2(&residual(Field::U, &it[m].fields[Field::U], &forces[m][Field::U], &sys.coeffs[m]))).sum();
        assert!(after < before);
    }

    #[test]
    fn fmg_single_level_smooths_directly() {
        let model = load_preset("example1").unwrap();
        let hier = build(&model, 24, 100, 1);
        let old = initial(&model, 25);
        let out = fmg_init(&model, &hier, &old, &MultigridConfig::default()).unwrap();
        let sys = StepSystem::new(&model, *hier.finest(), old.clone()).unwrap();
        let mut direct = old.clone();
        sys.relax(&mut direct, 1).unwrap();
        assert_ne!(out, old);
        assert!(out[0].s_f < 9.0);
        assert!(sys.residuals(&out).unwrap().max_normalized(Field::U) < sys.residuals(&direct).unwrap().max_normalized(Field::U));
    }
}
