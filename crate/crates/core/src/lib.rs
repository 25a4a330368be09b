//! Pricing of American put options under Markov regime switching.
//!
//! Each regime's free-boundary problem is front-fixed with
//! `x = ln(S / s_f(tau))`, turned into a coupled system for the option value
//! and its first three spatial derivatives, and discretised with a
//! fourth-order compact scheme in space and Crank-Nicolson in time. The
//! regimes are coupled through cubic Hermite interpolation between their
//! moving frames, and every time level is solved by Gauss-Seidel relaxation
//! accelerated with a modified multigrid cycle.
//!
//! ```
//! use rsmg::{load_preset, MultigridConfig, SpaceTimeGrid, solver};
//!
//! let model = load_preset("example1").unwrap().with_maturity(0.01);
//! let grid = SpaceTimeGrid::with_square_rule(3.0, 60, model.maturity).unwrap();
//! let config = MultigridConfig { levels: 2, ..MultigridConfig::default() };
//! let solution = solver::run(&model, grid, &config).unwrap();
//! assert!(solution.boundary(0).iter().all(|&s| s <= 9.0));
//! ```

pub mod coupling;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod model;
pub mod multigrid;
pub mod readout;
pub mod smoother;
pub mod solver;

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

pub use error::{Error, ModelError, Result};
pub use grid::{build_hierarchy, GridHierarchy, SpaceTimeGrid};
pub use model::{load_preset, validate_model, RegimeModel};
pub use multigrid::MultigridConfig;
pub use solver::Solution;

/// The five unknown fields of each regime: option value `U` and its first
/// three log-space derivatives (delta `W`, gamma `Y`, speed `Z`), plus the
/// auxiliary `Zhat = dZ/dx` that supplies slope data to the speed interpolant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    U,
    W,
    Y,
    Z,
    Zhat,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::U, Field::W, Field::Y, Field::Z, Field::Zhat];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::U => "u",
            Field::W => "w",
            Field::Y => "y",
            Field::Z => "z",
            Field::Zhat => "zhat",
        }
    }

    /// The field whose second difference drives this one (`None` for `U`,
    /// which is driven by `W` through a mass-weighted term instead).
    pub fn driver(self) -> Option<Field> {
        match self {
            Field::U => None,
            Field::W => Some(Field::U),
            Field::Y => Some(Field::W),
            Field::Z => Some(Field::Y),
            Field::Zhat => Some(Field::Z),
        }
    }
}

/// One nodal array per [`Field`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSet {
    data: [Vec<f64>; 5],
}

impl FieldSet {
    pub fn zeros(nodes: usize) -> Self {
        FieldSet {
            data: std::array::from_fn(|_| vec![0.0; nodes]),
        }
    }

    pub fn from_fn(mut f: impl FnMut(Field) -> Vec<f64>) -> Self {
        FieldSet {
            data: std::array::from_fn(|i| f(Field::ALL[i])),
        }
    }

    pub fn nodes(&self) -> usize {
        self.data[0].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Field, &Vec<f64>)> {
        Field::ALL.into_iter().zip(self.data.iter())
    }

    pub fn map(&self, mut f: impl FnMut(Field, &[f64]) -> Vec<f64>) -> FieldSet {
        FieldSet::from_fn(|field| f(field, &self[field]))
    }
}

impl Index<Field> for FieldSet {
    type Output = Vec<f64>;
    fn index(&self, f: Field) -> &Vec<f64> {
        &self.data[f.index()]
    }
}

impl IndexMut<Field> for FieldSet {
    fn index_mut(&mut self, f: Field) -> &mut Vec<f64> {
        &mut self.data[f.index()]
    }
}

/// Exercise boundary and nodal fields of one regime at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalState {
    pub s_f: f64,
    pub fields: FieldSet,
}

impl NodalState {
    /// Payoff-time state: `s_f = K` and every field zero, node 0 included.
    ///
    /// The node-0 values `w_0 = -K` etc. are only imposed from the first
    /// new level on. Seeding them here makes the first boundary row cancel
    /// its own dependence on `s_f` and the step has no sensible root.
    pub fn initial(strike: f64, nodes: usize) -> Self {
        NodalState {
            s_f: strike,
            fields: FieldSet::zeros(nodes),
        }
    }

    /// Writes `u_0 = K - s_f`, `w_0 = y_0 = z_0 = zhat_0 = -s_f` and zero
    /// values at the far end.
    pub fn apply_dirichlet(&mut self, strike: f64) {
        let s = self.s_f;
        for f in Field::ALL {
            let v = &mut self.fields[f];
            let last = v.len() - 1;
            v[0] = if f == Field::U { strike - s } else { -s };
            v[last] = 0.0;
        }
    }

    pub fn nodes(&self) -> usize {
        self.fields.nodes()
    }
}
