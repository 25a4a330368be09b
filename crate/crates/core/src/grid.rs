//! Uniform space-time grids, the nested multigrid hierarchy, and the
//! inter-grid transfer operators.
//!
//! Coarsening is spatial only: every level shares the time step `k`.
//! Level `q - 1` is the finest, level `0` the coarsest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Field;

/// Uniform grid on `[0, x_max] x [0, T]` with nodes `i = 0..=m` and `N` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub x_max: f64,
    pub m: usize,
    pub h: f64,
    pub steps: usize,
    pub k: f64,
}

impl SpaceTimeGrid {
    pub fn new(x_max: f64, m: usize, maturity: f64, steps: usize) -> Result<Self> {
        if !(x_max > 0.0) || m < 2 || steps == 0 || !(maturity > 0.0) {
            return Err(Error::Grid(format!(
                "need x_max > 0, M >= 2, N >= 1, T > 0 (got {x_max}, {m}, {steps}, {maturity})"
            )));
        }
        Ok(SpaceTimeGrid {
            x_max,
            m,
            h: x_max / m as f64,
            steps,
            k: maturity / steps as f64,
        })
    }

    /// Grid with `k = h^2` and `N = round(T / h^2)`, the experiments' default rule.
    pub fn with_square_rule(x_max: f64, m: usize, maturity: f64) -> Result<Self> {
        let h = x_max / m as f64;
        let steps = (maturity / (h * h)).round().max(1.0) as usize;
        Self::new(x_max, m, maturity, steps)
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn nodes(&self) -> usize {
        self.m + 1
    }

    /// Same time discretisation, half the spatial nodes.
    fn coarsened(&self) -> Self {
        SpaceTimeGrid {
            m: self.m / 2,
            h: self.x_max / (self.m / 2) as f64,
            ..*self
        }
    }
}

/// Nested grids, `grids[0]` coarsest and `grids[q-1]` finest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridHierarchy {
    grids: Vec<SpaceTimeGrid>,
}

impl GridHierarchy {
    pub fn levels(&self) -> usize {
        self.grids.len()
    }

    pub fn finest(&self) -> &SpaceTimeGrid {
        self.grids.last().expect("hierarchy is never empty")
    }

    pub fn level(&self, i: usize) -> &SpaceTimeGrid {
        &self.grids[i]
    }

    pub fn grids(&self) -> &[SpaceTimeGrid] {
        &self.grids
    }

    pub fn from_finest(fine: SpaceTimeGrid, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Grid("hierarchy needs at least one level".into()));
        }
        let factor = 1usize << (levels - 1);
        if fine.m % factor != 0 || fine.m / factor < 1 {
            return Err(Error::Grid(format!(
                "M = {} is not divisible by 2^(q-1) = {factor}",
                fine.m
            )));
        }
        let mut grids = vec![fine];
        for _ in 1..levels {
            let next = grids.last().unwrap().coarsened();
            grids.push(next);
        }
        grids.reverse();
        Ok(GridHierarchy { grids })
    }
}

/// Builds `q` nested levels over `[0, x_max]` whose finest level has `m` intervals.
///
/// `q = 1` yields a single grid (plain relaxation without coarse correction).
pub fn build_hierarchy(
    x_max: f64,
    m: usize,
    maturity: f64,
    steps: usize,
    q: usize,
) -> Result<GridHierarchy> {
    GridHierarchy::from_finest(SpaceTimeGrid::new(x_max, m, maturity, steps)?, q)
}

/// Full-weighting restriction of a residual vector over nodes `0..=M` onto
/// nodes `0..=M/2`.
///
/// The right end is injected. At the left end the `u` residual keeps the
/// one-sided weight `(2 r_0 + r_1) / 4` of its derivative-type boundary row,
/// while Dirichlet fields inject.
pub fn restrict_residual(fine: &[f64], field: Field) -> Result<Vec<f64>> {
    let m = fine.len().checked_sub(1).unwrap_or(0);
    if fine.len() < 3 || m % 2 != 0 {
        return Err(Error::Grid(format!(
            "restriction needs an even interval count, got M = {m}"
        )));
    }
    let mc = m / 2;
    let mut coarse = vec![0.0; mc + 1];
    for i in 1..mc {
        coarse[i] = 0.25 * (fine[2 * i - 1] + 2.0 * fine[2 * i] + fine[2 * i + 1]);
    }
    coarse[0] = match field {
        Field::U => 0.25 * (2.0 * fine[0] + fine[1]),
        _ => fine[0],
    };
    coarse[mc] = fine[m];
    Ok(coarse)
}

/// Restriction applied `times` times.
pub fn restrict_times(fine: &[f64], field: Field, times: usize) -> Result<Vec<f64>> {
    let mut v = fine.to_vec();
    for _ in 0..times {
        v = restrict_residual(&v, field)?;
    }
    Ok(v)
}

/// Linear prolongation: even fine nodes copy, odd fine nodes average.
pub fn prolong_linear(coarse: &[f64]) -> Vec<f64> {
    if coarse.is_empty() {
        return Vec::new();
    }
    let mc = coarse.len() - 1;
    let mut fine = vec![0.0; 2 * mc + 1];
    for i in 0..mc {
        fine[2 * i] = coarse[i];
        fine[2 * i + 1] = 0.5 * (coarse[i] + coarse[i + 1]);
    }
    fine[2 * mc] = coarse[mc];
    fine
}

/// Lagrange weights at `t` for nodes `0, 1, 2, 3`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}

/// Cubic prolongation. Odd fine nodes use the cubic through the four nearest
/// coarse nodes; the first and last cells use one-sided four-node stencils.
pub fn prolong_cubic(coarse: &[f64]) -> Result<Vec<f64>> {
    if coarse.len() < 4 {
        return Err(Error::Grid(format!(
            "cubic prolongation needs at least 4 coarse nodes, got {}",
            coarse.len()
        )));
    }
    let mc = coarse.len() - 1;
    let centered = cubic_weights(1.5);
    let left = cubic_weights(0.5);
    let right = cubic_weights(2.5);
    let mut fine = vec![0.0; 2 * mc + 1];
    for i in 0..=mc {
        fine[2 * i] = coarse[i];
    }
    for i in 0..mc {
        let (start, w) = if i == 0 {
            (0, &left)
        } else if i + 1 == mc {
            (mc - 3, &right)
        } else {
            (i - 1, &centered)
        };
        fine[2 * i + 1] = (0..4).map(|s| w[s] * coarse[start + s]).sum();
    }
    Ok(fine)
}

/// Cubic prolongation applied `times` times.
pub fn prolong_cubic_times(coarse: &[f64], times: usize) -> Result<Vec<f64>> {
    let mut v = coarse.to_vec();
    for _ in 0..times {
        v = prolong_cubic(&v)?;
    }
    Ok(v)
}

/// Pointwise injection onto every `2^times`-th node.
pub fn inject(fine: &[f64], times: usize) -> Vec<f64> {
    fine.iter().step_by(1 << times).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hierarchy_levels() {
        let h = build_hierarchy(3.0, 240, 1.0, 100, 3).unwrap();
        let ms: Vec<_> = h.grids().iter().map(|g| g.m).collect();
        assert_eq!(ms, vec![60, 120, 240]);
        assert_eq!(h.finest().h, 0.0125);
        assert!(h.grids().iter().all(|g| g.k == 0.01));

        let h = build_hierarchy(1.0, 4, 1.0, 1, 2).unwrap();
        assert_eq!(h.level(0).m, 2);
        assert_eq!(h.level(1).m, 4);

        let h = build_hierarchy(3.0, 240, 1.0, 1, 5).unwrap();
        assert_eq!(h.level(0).m, 15);
        assert!(build_hierarchy(3.0, 250, 1.0, 1, 3).is_err());
    }

    #[test]
    fn square_rule() {
        let g = SpaceTimeGrid::with_square_rule(3.0, 240, 1.0).unwrap();
        assert_eq!(g.steps, 6400);
        assert_relative_eq!(g.k, 0.0125 * 0.0125, max_relative = 1e-12);
    }

    #[test]
    fn restrict_constants() {
        let fine = vec![1.0; 9];
        assert_eq!(restrict_residual(&fine, Field::W).unwrap(), vec![1.0; 5]);
        let u = restrict_residual(&fine, Field::U).unwrap();
        assert_eq!(u, vec![0.75, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn restrict_impulse() {
        let mut fine = vec![0.0; 9];
        fine[4] = 1.0;
        let c = restrict_residual(&fine, Field::Y).unwrap();
        assert_eq!(c, vec![0.0, 0.0, 0.5, 0.0, 0.0]);
        let mut fine = vec![0.0; 9];
        fine[3] = 1.0;
        let c = restrict_residual(&fine, Field::Y).unwrap();
        assert_eq!(c, vec![0.0, 0.25, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn restrict_rejects_odd() {
        assert!(restrict_residual(&[0.0; 8], Field::U).is_err());
    }

    #[test]
    fn linear_prolongation() {
        assert_eq!(prolong_linear(&[0.0, 1.0, 2.0]), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(prolong_linear(&[0.0; 3]), vec![0.0; 5]);
    }

    #[test]
    fn restriction_is_half_prolongation_transpose() {
        // Assemble both operators column by column and compare interior rows.
        let mc = 6;
        let m = 2 * mc;
        let mut p = vec![vec![0.0; mc + 1]; m + 1];
        for j in 0..=mc {
            let mut e = vec![0.0; mc + 1];
            e[j] = 1.0;
            for (i, v) in prolong_linear(&e).into_iter().enumerate() {
                p[i][j] = v;
            }
        }
        for i in 1..mc {
            let mut row = vec![0.0; m + 1];
            for (c, r) in row.iter_mut().enumerate() {
                let mut e = vec![0.0; m + 1];
                e[c] = 1.0;
                *r = restrict_residual(&e, Field::W).unwrap()[i];
            }
            for c in 0..=m {
                assert_eq!(row[c], 0.5 * p[c][i], "row {i} col {c}");
            }
        }
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let p = |x: f64| x * x * x - 2.0 * x + 0.5;
        let mc = 8;
        let hc = 0.3;
        let coarse: Vec<f64> = (0..=mc).map(|i| p(i as f64 * hc)).collect();
        let fine = prolong_cubic(&coarse).unwrap();
        for (i, v) in fine.iter().enumerate() {
            let want = p(i as f64 * hc / 2.0);
            assert!((v - want).abs() <= 1e-12 * want.abs().max(1.0), "{i}");
        }
    }

    #[test]
    fn cubic_small_cases() {
        assert_eq!(prolong_cubic(&[2.5; 4]).unwrap(), vec![2.5; 7]);
        let f = prolong_cubic(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        for (i, v) in f.iter().enumerate() {
            assert_relative_eq!(*v, i as f64 * 0.5, epsilon = 1e-14);
        }
        assert!(prolong_cubic(&[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn injection() {
        assert_eq!(inject(&[0.0, 1.0, 2.0, 3.0, 4.0], 1), vec![0.0, 2.0, 4.0]);
        assert_eq!(inject(&[0.0, 1.0, 2.0, 3.0, 4.0], 2), vec![0.0, 4.0]);
    }

    proptest! {
        #[test]
        fn transfers_are_linear(
            x in proptest::collection::vec(-10.0f64..10.0, 17),
            y in proptest::collection::vec(-10.0f64..10.0, 17),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            for field in [Field::U, Field::W] {
                let lhs = restrict_residual(&mix, field).unwrap();
                let rx = restrict_residual(&x, field).unwrap();
                let ry = restrict_residual(&y, field).unwrap();
                for i in 0..lhs.len() {
                    let rhs = a * rx[i] + b * ry[i];
                    prop_assert!((lhs[i] - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()) * 20.0);
                }
            }
            let c = &mix[..9];
            let lhs = prolong_linear(c);
            let px = prolong_linear(&x[..9]);
            let py = prolong_linear(&y[..9]);
            for i in 0..lhs.len() {
                let rhs = a * px[i] + b * py[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()) * 20.0);
            }
        }

        #[test]
        fn row_weights_sum_to_one(c in -5.0f64..5.0, n in 4usize..20) {
            let fine = vec![c; 2 * n + 1];
            let r = restrict_residual(&fine, Field::Z).unwrap();
            prop_assert!(r.iter().all(|v| (v - c).abs() <= 1e-14 * (1.0 + c.abs())));
            let p = prolong_linear(&vec![c; n + 1]);
            prop_assert!(p.iter().all(|v| (v - c).abs() <= 1e-14 * (1.0 + c.abs())));
        }

        #[test]
        fn cubic_reproduces_random_cubics(
            coef in proptest::collection::vec(-2.0f64..2.0, 4),
            n in 3usize..12,
        ) {
            let p = |x: f64| coef[0] + x * (coef[1] + x * (coef[2] + x * coef[3]));
            let coarse: Vec<f64> = (0..=n).map(|i| p(i as f64)).collect();
            let fine = prolong_cubic(&coarse).unwrap();
            for (i, v) in fine.iter().enumerate() {
                let want = p(i as f64 / 2.0);
                prop_assert!((v - want).abs() <= 1e-11 * (1.0 + want.abs()));
            }
        }
    }
}
