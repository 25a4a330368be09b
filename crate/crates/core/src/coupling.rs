//! Evaluation of one regime's fields inside another regime's moving frame.
//!
//! Node `x_i` of regime `m` corresponds to `x* = x_i - ln(s_l / s_m)` in the
//! frame of regime `l`. Points left of the domain lie in the exercise region
//! and use the payoff; points right of it use the far-field zeros; everything
//! else is interpolated with two-point cubic Hermite polynomials written in
//! the Newton basis.

use crate::error::{Error, Result};
use crate::model::RegimeModel;
use crate::{Field, FieldSet, NodalState};

/// Position of a mapped point relative to the target regime's grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrossLocation {
    /// `x* < 0`: inside the exercise region.
    BelowDomain { x: f64 },
    /// `x* > x_max`: beyond the truncated far field.
    AboveDomain,
    /// `x_j <= x* < x_{j+1}` with `offset = (x* - x_j) / h`.
    Interior { j: usize, offset: f64 },
}

/// `ln(s_l / s_m)` without forming the ratio's logarithm directly, which
/// loses digits when the boundaries nearly coincide.
fn frame_shift(s_l: f64, s_m: f64) -> f64 {
    ((s_l - s_m) / s_m).ln_1p()
}

fn check_boundaries(s_l: f64, s_m: f64) -> Result<()> {
    if !(s_l > 0.0) || !(s_m > 0.0) {
        return Err(Error::Invalid(format!(
            "exercise boundaries must be positive (s_l = {s_l}, s_m = {s_m})"
        )));
    }
    Ok(())
}

/// Classifies `pos`, a coordinate measured in cells.
fn classify(pos: f64, h: f64, m: usize) -> CrossLocation {
    if pos < 0.0 {
        return CrossLocation::BelowDomain { x: pos * h };
    }
    if pos >= m as f64 {
        // x* = x_max carries the Dirichlet zeros, same as beyond it.
        return CrossLocation::AboveDomain;
    }
    let j = (pos.floor() as usize).min(m - 1);
    let offset = (pos - j as f64).clamp(0.0, 1.0 - f64::EPSILON);
    CrossLocation::Interior { j, offset }
}

/// Locates the point `x` of regime `m` (boundary `s_m`) in the frame of
/// regime `l` (boundary `s_l`) on a grid of `m_nodes` intervals of width `h`.
pub fn locate(x: f64, s_l: f64, s_m: f64, h: f64, m_nodes: usize) -> Result<CrossLocation> {
    check_boundaries(s_l, s_m)?;
    Ok(classify((x - frame_shift(s_l, s_m)) / h, h, m_nodes))
}

/// As [`locate`] for grid node `i`; coincident frames map node to node exactly.
pub fn locate_node(i: usize, s_l: f64, s_m: f64, h: f64, m_nodes: usize) -> Result<CrossLocation> {
    check_boundaries(s_l, s_m)?;
    Ok(classify(i as f64 - frame_shift(s_l, s_m) / h, h, m_nodes))
}

/// Values of `(u, w, y, z, zhat)` at one point.
pub type PointValues = [f64; 5];

/// Field values outside the grid: the exercised payoff `K - S` with all
/// derivatives equal to `-S` on the left, zeros on the right.
pub fn extend_exterior(location: CrossLocation, s_l: f64, strike: f64) -> Result<PointValues> {
    match location {
        CrossLocation::BelowDomain { x } => {
            let spot = x.exp() * s_l;
            Ok([strike - spot, -spot, -spot, -spot, -spot])
        }
        CrossLocation::AboveDomain => Ok([0.0; 5]),
        CrossLocation::Interior { .. } => Err(Error::Invalid(
            "exterior extension requested for an interior location".into(),
        )),
    }
}

/// Newton-form coefficients of the cubic Hermite interpolant on one cell:
/// `p(t) = a0 + a1 t + a2 t^2 + a3 t^2 (t - h)`, `t = x - x_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteCoeffs {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub h: f64,
}

/// Divided-difference table for values and slopes at both ends of a cell.
pub fn hermite_coeffs(value_j: f64, value_j1: f64, deriv_j: f64, deriv_j1: f64, h: f64) -> HermiteCoeffs {
    let slope = (value_j1 - value_j) / h;
    let alpha2 = (slope - deriv_j) / h;
    let alpha3 = ((deriv_j1 - slope) / h - alpha2) / h;
    HermiteCoeffs {
        alpha0: value_j,
        alpha1: deriv_j,
        alpha2,
        alpha3,
        h,
    }
}

impl HermiteCoeffs {
    pub fn value(&self, t: f64) -> f64 {
        self.alpha0 + t * (self.alpha1 + t * (self.alpha2 + self.alpha3 * (t - self.h)))
    }

    /// Exact derivative of [`value`](Self::value).
    pub fn slope(&self, t: f64) -> f64 {
        self.alpha1 + 2.0 * self.alpha2 * t + self.alpha3 * t * (3.0 * t - 2.0 * self.h)
    }
}

/// Evaluates the five fields of `fields` at an interior location.
///
/// `u` and `w` come from the `(u, w)` interpolant and its derivative; `y` and
/// `z` each have their own value interpolant with slopes `z` and `zhat`;
/// `zhat` is the derivative of the `(z, zhat)` interpolant.
pub fn sample(fields: &FieldSet, h: f64, location: CrossLocation) -> Result<PointValues> {
    let CrossLocation::Interior { j, offset } = location else {
        return Err(Error::Invalid("sample requires an interior location".into()));
    };
    if j + 1 >= fields.nodes() {
        return Err(Error::Dimension {
            expected: j + 2,
            actual: fields.nodes(),
            context: "hermite sample",
        });
    }
    let t = offset * h;
    let cell = |value: Field, slope: Field| {
        let v = &fields[value];
        let d = &fields[slope];
        hermite_coeffs(v[j], v[j + 1], d[j], d[j + 1], h)
    };
    let hu = cell(Field::U, Field::W);
    let hy = cell(Field::Y, Field::Z);
    let hz = cell(Field::Z, Field::Zhat);
    Ok([hu.value(t), hu.slope(t), hy.value(t), hz.value(t), hz.slope(t)])
}

/// Full evaluation at an arbitrary location, interior or not.
pub fn evaluate(state: &NodalState, h: f64, strike: f64, location: CrossLocation) -> Result<PointValues> {
    match location {
        CrossLocation::Interior { .. } => sample(&state.fields, h, location),
        _ => extend_exterior(location, state.s_f, strike),
    }
}

/// Regime `l`'s fields sampled at every node of regime `m`'s grid.
///
/// Every node shares the same cell offset, so the Hermite basis weights are
/// computed once; the result equals [`evaluate`] node by node up to rounding.
pub fn map_regime(target: &NodalState, source: &NodalState, h: f64, strike: f64) -> Result<FieldSet> {
    let nodes = source.nodes();
    if target.nodes() != nodes {
        return Err(Error::Dimension {
            expected: nodes,
            actual: target.nodes(),
            context: "regime mapping",
        });
    }
    check_boundaries(target.s_f, source.s_f)?;
    let m = nodes - 1;
    let base = -frame_shift(target.s_f, source.s_f) / h;
    let cell = base.floor();
    let s = base - cell;
    let cell = cell as i64;
    let (s2, s3) = (s * s, s * s * s);
    // value and slope weights on (v_j, h d_j, v_j+1, h d_j+1)
    let pv = [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, 3.0 * s2 - 2.0 * s3, s3 - s2];
    let pd = [
        (6.0 * s2 - 6.0 * s) / h,
        (3.0 * s2 - 4.0 * s + 1.0) / h,
        (6.0 * s - 6.0 * s2) / h,
        (3.0 * s2 - 2.0 * s) / h,
    ];
    let f = &target.fields;
    let interp = |w: &[f64; 4], v: &[f64], d: &[f64], j: usize| {
        w[0] * v[j] + w[1] * h * d[j] + w[2] * v[j + 1] + w[3] * h * d[j + 1]
    };
    let mut out = FieldSet::zeros(nodes);
    for i in 0..nodes {
        let j = i as i64 + cell;
        let vals = if j < 0 {
            extend_exterior(CrossLocation::BelowDomain { x: (i as f64 + base) * h }, target.s_f, strike)?
        } else if j as usize >= m {
            [0.0; 5]
        } else {
            let j = j as usize;
            let (u, w, y, z, zh) = (&f[Field::U], &f[Field::W], &f[Field::Y], &f[Field::Z], &f[Field::Zhat]);
            [
                interp(&pv, u, w, j),
                interp(&pd, u, w, j),
                interp(&pv, y, z, j),
                interp(&pv, z, zh, j),
                interp(&pd, z, zh, j),
            ]
        };
        for (fld, v) in Field::ALL.iter().zip(vals) {
            out[*fld][i] = v;
        }
    }
    Ok(out)
}

/// For every regime `m`, the coupling sums `sum_{l != m} q_ml F_l` sampled
/// on regime `m`'s nodes, for every field `F`.
pub fn cross_sums(model: &RegimeModel, states: &[NodalState], h: f64) -> Result<Vec<FieldSet>> {
    let regimes = states.len();
    let nodes = states.first().map_or(0, NodalState::nodes);
    let mut sums: Vec<FieldSet> = (0..regimes).map(|_| FieldSet::zeros(nodes)).collect();
    for m in 0..regimes {
        for l in 0..regimes {
            let q = model.generator[m][l];
            if l == m || q == 0.0 {
                continue;
            }
            let mapped = map_regime(&states[l], &states[m], h, model.strike)?;
            for f in Field::ALL {
                for (acc, v) in sums[m][f].iter_mut().zip(&mapped[f]) {
                    *acc += q * v;
                }
            }
        }
    }
    Ok(sums)
}
