//! Compact Crank-Nicolson discretisation of the front-fixed system.
//!
//! Every field obeys `F_t = sigma^2/2 F_xx + beta G - (r - q_mm) F + sum_l q_ml F_l`
//! where the driver `G` is `W` for `U` and the second derivative of the
//! preceding field otherwise. Interior rows use the fourth-order compact
//! operator `(1 + delta^2/12)`; the free-boundary row of `U` at `x = 0` uses a
//! two-point compact relation closed with smooth pasting (`W_0 = U_0 - K`).
//!
//! All rows are scaled by the time step, so a system row reads
//! `d1 v_{i-1} + c1 v_i + d1 v_{i+1} = f_i` with `f_i` gathering the old time
//! level, the drift term, and the cross-regime coupling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RegimeModel;
use crate::{Field, FieldSet, NodalState};

/// Scalar coefficients of the compact scheme for one regime on one grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilCoeffs {
    pub mu: f64,
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub d2: f64,
    pub h: f64,
    pub k: f64,
    pub sigma: f64,
    /// `r_m - q_mm`.
    pub discount: f64,
}

/// Coefficients of regime `m` for space step `h` and time step `k`.
pub fn stencil_coeffs(model: &RegimeModel, m: usize, h: f64, k: f64) -> StencilCoeffs {
    let sigma = model.vols[m];
    let disc = model.effective_rate(m);
    let mu = sigma * sigma * k / (h * h);
    StencilCoeffs {
        mu,
        a1: 7.0 / 4.0 + 1.25 * mu + 1.25 * h * mu + 7.0 * k / 8.0 * disc,
        b1: 3.0 / 4.0 - 1.25 * mu + 3.0 * k / 8.0 * disc,
        c1: 10.0 / 12.0 + mu / 2.0 + 10.0 * k / 24.0 * disc,
        d1: 1.0 / 12.0 - mu / 4.0 + k / 24.0 * disc,
        a2: 7.0 / 4.0 - 1.25 * mu - 1.25 * h * mu - 7.0 * k / 8.0 * disc,
        b2: 3.0 / 4.0 + 1.25 * mu - 3.0 * k / 8.0 * disc,
        c2: 10.0 / 12.0 - mu / 2.0 - 10.0 * k / 24.0 * disc,
        d2: 1.0 / 12.0 + mu / 4.0 - k / 24.0 * disc,
        h,
        k,
        sigma,
        discount: disc,
    }
}

/// Drift coefficient at `tau_{n+1/2}`: the relative boundary speed plus
/// `r - sigma^2/2`.
pub fn beta(s_f_new: f64, s_f_old: f64, k: f64, rate: f64, sigma: f64) -> Result<f64> {
    if !(s_f_new > 0.0) || !(s_f_old > 0.0) {
        return Err(Error::Invalid(format!(
            "exercise boundaries must be positive (new {s_f_new}, old {s_f_old})"
        )));
    }
    Ok(2.0 * (s_f_new - s_f_old) / (k * (s_f_new + s_f_old)) + rate - 0.5 * sigma * sigma)
}

/// Everything the right-hand side of one regime needs at one time step.
#[derive(Debug, Clone, Copy)]
pub struct ForceInputs<'a> {
    pub coeffs: &'a StencilCoeffs,
    pub beta: f64,
    pub strike: f64,
    /// Level `n` (known).
    pub old: &'a NodalState,
    /// Latest iterate of level `n + 1`.
    pub new: &'a NodalState,
    /// Coupling sums at level `n`.
    pub old_cross: &'a FieldSet,
    /// Coupling sums from the latest iterate.
    pub new_cross: &'a FieldSet,
}

fn check_len(v: &[f64], nodes: usize, context: &'static str) -> Result<()> {
    if v.len() != nodes {
        return Err(Error::Dimension {
            expected: nodes,
            actual: v.len(),
            context,
        });
    }
    Ok(())
}

/// Right-hand side of `field` over rows `0..=M`.
///
/// Row 0 is the free-boundary row for `U` and unused (zero) for the
/// Dirichlet fields, whose node-0 value is folded into row 1. Row `M` is zero.
pub fn assemble_rhs(field: Field, inp: &ForceInputs<'_>) -> Result<Vec<f64>> {
    let nodes = inp.old.nodes();
    if nodes < 4 {
        return Err(Error::Grid(format!("need at least 3 intervals, got {}", nodes - 1)));
    }
    for (v, ctx) in [
        (&inp.new.fields[field], "iterate"),
        (&inp.old_cross[field], "old coupling samples"),
        (&inp.new_cross[field], "new coupling samples"),
    ] {
        check_len(v, nodes, ctx)?;
    }
    let c = inp.coeffs;
    let k = c.k;
    let m = nodes - 1;
    let old = &inp.old.fields[field];
    let summed = |f: Field| -> Vec<f64> {
        inp.new.fields[f].iter().zip(&inp.old.fields[f]).map(|(a, b)| a + b).collect()
    };
    let cross: Vec<f64> = inp.new_cross[field]
        .iter()
        .zip(&inp.old_cross[field])
        .map(|(a, b)| a + b)
        .collect();
    let q = k / 24.0;

    let mut f = vec![0.0; nodes];
    match field.driver() {
        None => {
            let w = summed(Field::W);
            let drift = k * inp.beta / 24.0;
            for i in 1..m {
                f[i] = c.d2 * (old[i - 1] + old[i + 1])
                    + c.c2 * old[i]
                    + drift * (w[i - 1] + 10.0 * w[i] + w[i + 1])
                    + q * (cross[i - 1] + 10.0 * cross[i] + cross[i + 1]);
            }
            f[0] = boundary_force(inp);
        }
        Some(driver) => {
            let g = summed(driver);
            let drift = k * inp.beta / (2.0 * c.h * c.h);
            for i in 1..m {
                f[i] = c.d2 * (old[i - 1] + old[i + 1])
                    + c.c2 * old[i]
                    + drift * (g[i - 1] - 2.0 * g[i] + g[i + 1])
                    + q * (cross[i - 1] + 10.0 * cross[i] + cross[i + 1]);
            }
            f[1] -= c.d1 * inp.new.fields[field][0];
        }
    }
    Ok(f)
}

/// Free-boundary row of `U` at `x = 0`.
fn boundary_force(inp: &ForceInputs<'_>) -> f64 {
    let c = inp.coeffs;
    let (h, k) = (c.h, c.k);
    let s2 = c.sigma * c.sigma;
    let (wn, yn) = (&inp.new.fields[Field::W], &inp.new.fields[Field::Y]);
    let (uo, wo, yo) = (&inp.old.fields[Field::U], &inp.old.fields[Field::W], &inp.old.fields[Field::Y]);
    let w = |i: usize| wn[i] + wo[i];
    let y = |i: usize| yn[i] + yo[i];
    let cu = |i: usize| inp.new_cross[Field::U][i] + inp.old_cross[Field::U][i];
    let cw = |i: usize| inp.new_cross[Field::W][i] + inp.old_cross[Field::W][i];
    c.a2 * uo[0]
        + c.b2 * uo[1]
        + 2.5 * s2 * k / h * inp.strike
        - 0.75 * s2 * k / h * (w(0) - 2.0 * w(1) + w(2))
        + h / 12.0 * (32.0 * (wn[1] - wo[1]) + 3.0 * (wn[2] - wo[2]))
        + h * k * c.discount / 24.0 * (32.0 * w(1) + 3.0 * w(2))
        + k * inp.beta / 8.0 * (7.0 * w(0) + 3.0 * w(1))
        - h * k * inp.beta / 24.0 * (32.0 * y(1) + 3.0 * y(2))
        - h * k / 24.0 * (32.0 * cw(1) + 3.0 * cw(2))
        + k / 8.0 * (7.0 * cu(0) + 3.0 * cu(1))
}

/// Left-hand side operator applied to `values` (nodes `0..=M`), rows `0..=M`.
///
/// Dirichlet rows (row 0 for `W..Zhat`, row `M` always) are zero, and the
/// node-0 neighbour of row 1 is omitted for Dirichlet fields because it
/// lives in the force.
pub fn apply_lhs(field: Field, values: &[f64], coeffs: &StencilCoeffs) -> Vec<f64> {
    let nodes = values.len();
    let m = nodes - 1;
    let mut out = vec![0.0; nodes];
    for i in 1..m {
        let left = if i == 1 && field != Field::U { 0.0 } else { values[i - 1] };
        out[i] = coeffs.d1 * (left + values[i + 1]) + coeffs.c1 * values[i];
    }
    if field == Field::U {
        out[0] = coeffs.a1 * values[0] + coeffs.b1 * values[1];
    }
    out
}

/// `f - A v`.
pub fn residual(field: Field, values: &[f64], force: &[f64], coeffs: &StencilCoeffs) -> Vec<f64> {
    apply_lhs(field, values, coeffs)
        .into_iter()
        .zip(force)
        .map(|(av, f)| f - av)
        .collect()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_preset;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn mu_for_square_rule() {
        let model = load_preset("example1").unwrap();
        let h = 0.0125;
        let c = stencil_coeffs(&model, 0, h, h * h);
        assert_relative_eq!(c.mu, 0.64, max_relative = 1e-12);
    }

    #[test]
    fn c1_value() {
        let model = load_preset("example1").unwrap();
        let c = stencil_coeffs(&model, 0, 0.0125, 1.5625e-4);
        // 10/12 + 0.64/2 + (10 k / 24) * 6.1, evaluated independently.
        let want = 10.0 / 12.0 + 0.32 + 10.0 * 1.5625e-4 / 24.0 * 6.1;
        assert_relative_eq!(c.c1, want, max_relative = 1e-14);
        assert!((c.c1 - 1.15373).abs() < 1e-5);
    }

    #[test]
    fn beta_cases() {
        assert_relative_eq!(beta(9.0, 9.0, 0.01, 0.10, 0.80).unwrap(), -0.22, epsilon = 1e-15);
        let b = beta(8.9, 9.0, 0.01, 0.05, 0.30).unwrap();
        assert_relative_eq!(b, 2.0 * -0.1 / (0.01 * 17.9) + 0.005, epsilon = 1e-12);
        assert!((b + 1.112318).abs() < 1e-6);
        let r: f64 = 0.08;
        assert_eq!(beta(5.0, 5.0, 0.1, r, (2.0 * r).sqrt()).unwrap().abs() < 1e-16, true);
        assert!(beta(0.0, 9.0, 0.01, 0.1, 0.2).is_err());
    }

    fn zero_state(nodes: usize) -> NodalState {
        NodalState {
            s_f: 9.0,
            fields: FieldSet::zeros(nodes),
        }
    }

    #[test]
    fn homogeneous_forces() {
        let model = load_preset("example1").unwrap();
        let (h, k) = (0.1, 0.01);
        let c = stencil_coeffs(&model, 0, h, k);
        let z = zero_state(11);
        let cross = FieldSet::zeros(11);
        let inp = ForceInputs {
            coeffs: &c,
            beta: 0.3,
            strike: 9.0,
            old: &z,
            new: &z,
            old_cross: &cross,
            new_cross: &cross,
        };
        let f = assemble_rhs(Field::U, &inp).unwrap();
        assert!(f[1..].iter().all(|&v| v == 0.0));
        let s2 = 0.64;
        assert_relative_eq!(f[0], 2.5 * s2 * k / h * 9.0, max_relative = 1e-14);
        for field in &Field::ALL[1..] {
            assert!(assemble_rhs(*field, &inp).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mismatched_lengths() {
        let model = load_preset("example1").unwrap();
        let c = stencil_coeffs(&model, 0, 0.1, 0.01);
        let z = zero_state(11);
        let short = FieldSet::zeros(10);
        let inp = ForceInputs {
            coeffs: &c,
            beta: 0.0,
            strike: 9.0,
            old: &z,
            new: &z,
            old_cross: &short,
            new_cross: &short,
        };
        assert!(matches!(assemble_rhs(Field::W, &inp), Err(Error::Dimension { .. })));
    }

    #[test]
    fn lhs_stencil_readoff() {
        let model = load_preset("example2").unwrap();
        let c = stencil_coeffs(&model, 1, 0.1, 0.01);
        assert!(apply_lhs(Field::U, &[0.0; 11], &c).iter().all(|&v| v == 0.0));
        let mut e = vec![0.0; 11];
        e[5] = 1.0;
        for field in Field::ALL {
            let img = apply_lhs(field, &e, &c);
            assert_eq!(img[4], c.d1);
            assert_eq!(img[5], c.c1);
            assert_eq!(img[6], c.d1);
            assert_eq!(img.iter().filter(|v| **v != 0.0).count(), 3);
        }
        let mut e0 = vec![0.0; 11];
        e0[0] = 1.0;
        let img = apply_lhs(Field::U, &e0, &c);
        assert_eq!((img[0], img[1]), (c.a1, c.d1));
        assert!(apply_lhs(Field::W, &e0, &c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_in_state() {
        // Doubling every state and coupling input doubles the force, except
        // for the constant strike source of the boundary row.
        let model = load_preset("example1").unwrap();
        let (h, k) = (0.1, 0.01);
        let c = stencil_coeffs(&model, 0, h, k);
        let mk = |scale: f64, seed: f64| {
            let mut s = zero_state(11);
            for f in Field::ALL {
                for i in 0..11 {
                    s.fields[f][i] = scale * ((i as f64 + seed) * (1.0 + f.index() as f64)).sin();
                }
            }
            s
        };
        let (o1, n1, o2, n2) = (mk(1.0, 0.1), mk(1.0, 0.7), mk(2.0, 0.1), mk(2.0, 0.7));
        let cr1 = mk(1.0, 0.3).fields;
        let cr2 = mk(2.0, 0.3).fields;
        let force = |o: &NodalState, n: &NodalState, cr: &FieldSet, strike: f64, field| {
            assemble_rhs(
                field,
                &ForceInputs { coeffs: &c, beta: 0.4, strike, old: o, new: n, old_cross: cr, new_cross: cr },
            )
            .unwrap()
        };
        for field in Field::ALL {
            let f1 = force(&o1, &n1, &cr1, 9.0, field);
            let f2 = force(&o2, &n2, &cr2, 9.0, field);
            let strike_term = if field == Field::U { 2.5 * 0.64 * k / h * 9.0 } else { 0.0 };
            for i in 0..11 {
                let want = if i == 0 { 2.0 * f1[0] - strike_term } else { 2.0 * f1[i] };
                assert!((f2[i] - want).abs() < 1e-12, "{field:?} {i}");
            }
        }
    }

    proptest! {
        #[test]
        fn coefficient_pairs(sigma in 0.01f64..2.0, r in -0.1f64..0.3, qd in -10.0f64..0.0,
                             h in 1e-3f64..0.2, k in 1e-6f64..0.05) {
            let model = RegimeModel {
                strike: 1.0, maturity: 1.0, rates: vec![r], vols: vec![sigma],
                generator: vec![vec![qd]], tolerance: 1e-8,
            };
            let c = stencil_coeffs(&model, 0, h, k);
            let tol = 1e-13 * (1.0 + c.mu + c.mu * h);
            prop_assert!((c.a1 + c.a2 - 3.5).abs() <= tol);
            prop_assert!((c.b1 + c.b2 - 1.5).abs() <= tol);
            prop_assert!((c.c1 + c.c2 - 10.0 / 6.0).abs() <= tol);
            prop_assert!((c.d1 + c.d2 - 1.0 / 6.0).abs() <= tol);
            prop_assert!(c.mu > 0.0);
        }
    }
}
