//! Pointwise Gauss-Seidel relaxation, ascending in the node index.

use crate::discretization::StencilCoeffs;
use crate::error::{Error, Result};
use crate::Field;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOutcome {
    /// Largest absolute change of any node during the sweep(s).
    pub max_update: f64,
    pub sweeps: usize,
}

/// One sweep over the rows of `field` with a fixed right-hand side.
///
/// `U` first updates its boundary row at node 0; the other fields keep node 0
/// (Dirichlet). Node `M` is never touched.
pub fn gs_sweep(field: Field, values: &mut [f64], force: &[f64], coeffs: &StencilCoeffs) -> Result<SweepOutcome> {
    let nodes = values.len();
    if force.len() != nodes {
        return Err(Error::Dimension {
            expected: nodes,
            actual: force.len(),
            context: "sweep force",
        });
    }
    if coeffs.c1 == 0.0 || (field == Field::U && coeffs.a1 == 0.0) {
        return Err(Error::ZeroPivot(field.name()));
    }
    let m = nodes - 1;
    let mut max_update = 0.0_f64;
    if field == Field::U {
        let v = (force[0] - coeffs.b1 * values[1]) / coeffs.a1;
        max_update = max_update.max((v - values[0]).abs());
        values[0] = v;
    }
    let inv = 1.0 / coeffs.c1;
    let g = coeffs.d1 * inv;
    let mut left = if field == Field::U { values[0] } else { 0.0 };
    for i in 1..m {
        // only the last product depends on the node just updated
        let v = (force[i] * inv - g * values[i + 1]) - g * left;
        max_update = max_update.max((v - values[i]).abs());
        values[i] = v;
        left = v;
    }
    Ok(SweepOutcome { max_update, sweeps: 1 })
}

/// `count` consecutive sweeps.
pub fn relax(field: Field, values: &mut [f64], force: &[f64], coeffs: &StencilCoeffs, count: usize) -> Result<SweepOutcome> {
    let mut out = SweepOutcome::default();
    for _ in 0..count {
        let s = gs_sweep(field, values, force, coeffs)?;
        out.max_update = out.max_update.max(s.max_update);
        out.sweeps += 1;
    }
    Ok(out)
}

/// One independent linear system for [`relax_batch`].
pub struct BatchItem<'a> {
    pub field: Field,
    pub values: &'a mut [f64],
    pub force: &'a [f64],
    pub coeffs: &'a StencilCoeffs,
}

/// `count` sweeps on each of several independent systems of equal size.
///
/// Same arithmetic as calling [`relax`] on each item; the node loop runs
/// across all items at once so their recurrences overlap.
pub fn relax_batch(items: &mut [BatchItem<'_>], count: usize) -> Result<()> {
    let Some(first) = items.first() else { return Ok(()) };
    let nodes = first.values.len();
    for it in items.iter() {
        if it.values.len() != nodes || it.force.len() != nodes {
            return Err(Error::Dimension {
                expected: nodes,
                actual: it.values.len().min(it.force.len()),
                context: "batched sweep",
            });
        }
        if it.coeffs.c1 == 0.0 || (it.field == Field::U && it.coeffs.a1 == 0.0) {
            return Err(Error::ZeroPivot(it.field.name()));
        }
    }
    let m = nodes - 1;
    let n = items.len();
    // node-major copies so the loop over systems is contiguous
    let mut v = vec![0.0; nodes * n];
    let mut fi = vec![0.0; nodes * n];
    let inv: Vec<f64> = items.iter().map(|it| 1.0 / it.coeffs.c1).collect();
    let g: Vec<f64> = items.iter().zip(&inv).map(|(it, inv)| it.coeffs.d1 * inv).collect();
    // Dirichlet fields keep node 0 out of row 1
    let g1: Vec<f64> = items.iter().zip(&g).map(|(it, g)| if it.field == Field::U { *g } else { 0.0 }).collect();
    for (s, it) in items.iter().enumerate() {
        for i in 0..nodes {
            v[i * n + s] = it.values[i];
            fi[i * n + s] = it.force[i] * inv[s];
        }
    }
    for _ in 0..count {
        for (s, it) in items.iter().enumerate() {
            if it.field == Field::U {
                v[s] = (it.force[0] - it.coeffs.b1 * v[n + s]) / it.coeffs.a1;
            }
        }
        for i in 1..m {
            let (head, tail) = v.split_at_mut(i * n);
            let left = &head[(i - 1) * n..];
            let (cur, right) = tail.split_at_mut(n);
            let f = &fi[i * n..(i + 1) * n];
            let gl = if i == 1 { &g1 } else { &g };
            for s in 0..n {
                cur[s] = (f[s] - g[s] * right[s]) - gl[s] * left[s];
            }
        }
    }
    for (s, it) in items.iter_mut().enumerate() {
        for i in 0..nodes {
            it.values[i] = v[i * n + s];
        }
    }
    Ok(())
}

/// Schedule of inner sweeps on coarse level `i` of a `q`-level hierarchy: `c (q - i)^2`.
pub fn inner_sweeps(factor: usize, levels: usize, level: usize) -> usize {
    factor * (levels - level).pow(2)
}
