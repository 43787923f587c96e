//! Variational equilibria of an assembled game.
//!
//! [`solve_vgne_direct`] minimizes the exact potential over the feasible set
//! with an interior-point QP solve on the condensed (input-only) problem.
//! [`solve_vgne_iterative`] runs a primal-dual forward-backward iteration on
//! the pseudo-gradient and does not need a potential. Both return a
//! [`Solution`] in full coordinates with multipliers for every row.

mod iterative;
mod steady;

pub use iterative::{solve_vgne_iterative, IterativeOptions};
pub use steady::{solve_steady_state, SteadyState};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::game::{CondensedGame, GameQP, RowKind};
use crate::linalg::{inf_norm, SparseRow};
use crate::qp::{self, QpProblem, QpSettings, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible { max_violation: f64 },
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub z: Vec<f64>,
    /// Multipliers of the dynamics equalities, in `GameQP::equalities` order.
    pub duals_eq: Vec<f64>,
    /// Nonnegative `(lower, upper)` multipliers of every row in `GameQP::rows` order.
    pub row_duals: Vec<(f64, f64)>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Per-iteration residual of the iterative method (empty for the direct solver).
    pub history: Vec<f64>,
    coupling_start: usize,
}

impl Solution {
    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// `(lower, upper)` multiplier of the aggregate-load row of every step.
    pub fn duals_coupling(&self) -> &[(f64, f64)] {
        &self.row_duals[self.coupling_start..]
    }

    /// Multipliers of the per-prosumer rows.
    pub fn duals_box(&self) -> &[(f64, f64)] {
        &self.row_duals[..self.coupling_start]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartPoint {
    /// Inputs at zero, unit slacks.
    #[default]
    Origin,
    /// Inputs at the middle of their boxes, wide slacks.
    Centered,
}

#[derive(Debug, Clone)]
pub struct DirectOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub start: StartPoint,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            tol: 1e-8,
            max_iter: 100,
            start: StartPoint::Origin,
        }
    }
}

pub(crate) fn condensed_problem(cond: &CondensedGame) -> QpProblem {
    QpProblem {
        hessian: (&cond.hessian + cond.hessian.transpose()) * 0.5,
        linear: cond.linear.clone(),
        rows: cond.rows.clone(),
        lo: cond.lo.clone(),
        hi: cond.hi.clone(),
    }
}

fn centered_inputs(cond: &CondensedGame) -> Vec<f64> {
    let mut u = vec![0.0; cond.input_dim()];
    for (i, kind) in cond.kinds.iter().enumerate() {
        if matches!(kind, RowKind::Consumption { .. } | RowKind::Charge { .. }) {
            let (j, c) = cond.rows[i].entries[0];
            u[j] = 0.5 * (cond.lo[i] + cond.hi[i]) / c;
        }
    }
    u
}

/// Unique v-GNE as the minimizer of the potential over the feasible set.
///
/// Infeasibility and iteration limits are reported through `status`; errors
/// are returned only for games without an exact potential.
pub fn solve_vgne_direct(game: &GameQP, opts: &DirectOptions) -> Result<Solution> {
    if !game.symmetric_pricing {
        return Err(Error::AsymmetricPricing);
    }
    let cond = game.condense();
    let problem = condensed_problem(&cond);
    let settings = match opts.start {
        StartPoint::Origin => QpSettings {
            tol: (0.01 * opts.tol).max(1e-13),
            max_iter: opts.max_iter,
            ..Default::default()
        },
        StartPoint::Centered => QpSettings {
            tol: (0.01 * opts.tol).max(1e-13),
            max_iter: opts.max_iter,
            x_init: Some(centered_inputs(&cond)),
            initial_slack: 10.0,
            polish: true,
        },
    };
    let sol = qp::solve(&problem, &settings);
    let status = match sol.status {
        QpStatus::Optimal => SolveStatus::Converged,
        QpStatus::MaxIterations => SolveStatus::MaxIterations,
        QpStatus::Infeasible { max_violation } => SolveStatus::Infeasible { max_violation },
    };
    let mut out = finish(game, &cond, &sol.x, sol.duals, sol.iterations, status, vec![]);
    // the verdict is the full-space residual; the inner solve only aims tighter
    if !matches!(out.status, SolveStatus::Infeasible { .. }) {
        out.status = if out.kkt_residual <= opts.tol {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIterations
        };
    }
    Ok(out)
}

/// Expands condensed inputs and row multipliers to a full-space solution.
pub(crate) fn finish(
    game: &GameQP,
    cond: &CondensedGame,
    u: &[f64],
    row_duals: Vec<(f64, f64)>,
    iterations: usize,
    status: SolveStatus,
    history: Vec<f64>,
) -> Solution {
    let z = cond.expand(u);
    let duals_eq = dynamics_duals(game, &z, &row_duals);
    let kkt = kkt_residual(game, &z, &duals_eq, &row_duals);
    Solution {
        z,
        duals_eq,
        row_duals,
        kkt_residual: kkt,
        iterations,
        status,
        history,
        coupling_start: game.coupling_start(),
    }
}

fn row_stationarity(game: &GameQP, z: &[f64], row_duals: &[(f64, f64)]) -> DVector<f64> {
    let mut r = &game.hessian * DVector::from_column_slice(z) + &game.offset;
    for (row, &(zl, zu)) in game.rows.iter().zip(row_duals) {
        row.row.add_transpose_to(zu - zl, r.as_mut_slice());
    }
    r
}

/// Dynamics multipliers making the state components of the stationarity
/// residual vanish, given the row multipliers.
pub fn dynamics_duals(game: &GameQP, z: &[f64], row_duals: &[(f64, f64)]) -> Vec<f64> {
    let r = row_stationarity(game, z, row_duals);
    game.dynamics_multipliers(r.as_slice())
}

/// Largest of: stationarity `|F(z) + A_eq' nu + G' lambda|`, equality and
/// row violations, negative multipliers and complementarity products.
pub fn kkt_residual(game: &GameQP, z: &[f64], duals_eq: &[f64], row_duals: &[(f64, f64)]) -> f64 {
    let mut r = row_stationarity(game, z, row_duals);
    for (row, &nu) in game.equalities.iter().zip(duals_eq) {
        row.add_transpose_to(nu, r.as_mut_slice());
    }
    let mut worst = inf_norm(r.as_slice());
    for (row, b) in game.equalities.iter().zip(&game.eq_rhs) {
        worst = worst.max((row.dot(z) - b).abs());
    }
    for (row, &(zl, zu)) in game.rows.iter().zip(row_duals) {
        let v = row.row.dot(z);
        worst = worst.max(row.lo - v).max(v - row.hi).max(-zl).max(-zu);
        worst = worst.max((zl * (v - row.lo)).abs()).max((zu * (row.hi - v)).abs());
    }
    worst
}

/// `J_v(solution) - J_v(best response of v to the others)`.
///
/// The best response minimizes prosumer `v`'s horizon cost over its own
/// inputs, with the other prosumers' inputs fixed and the shared rows sliced
/// accordingly. Values at or below the tolerance certify the Nash property.
pub fn nash_check(game: &GameQP, sol: &Solution, v: usize, tol: f64) -> Result<f64> {
    let m = game.prosumers();
    if v >= m {
        return Err(Error::param(
            "prosumer",
            format!("index {v} out of range for {m} prosumers"),
        ));
    }
    if sol.z.len() != game.dim() {
        return Err(Error::dims("solution", game.dim(), sol.z.len()));
    }
    let cond = game.condense();
    let layout = &game.layout;
    let idx = layout.input_indices();
    let u: Vec<f64> = idx.iter().map(|&i| sol.z[i]).collect();
    let n = layout.horizon();
    let own = 2 * n * v..2 * n * (v + 1);
    let local = |j: usize| own.contains(&j).then(|| j - own.start);

    // J_v(u_v) = u_v'Q_vv u_v/2 + (Q_v,-v u_-v + c_v)'u_v + const; Q_vv is J_v's own curvature
    let q = &cond.hessian;
    let dim = own.len();
    let mut hessian = nalgebra::DMatrix::zeros(dim, dim);
    let mut linear = DVector::zeros(dim);
    for a in 0..dim {
        let ga = own.start + a;
        linear[a] = cond.linear[ga];
        for (b, &ub) in u.iter().enumerate() {
            match local(b) {
                Some(lb) => hessian[(a, lb)] = 0.5 * (q[(ga, b)] + q[(b, ga)]),
                None => linear[a] += q[(ga, b)] * ub,
            }
        }
    }
    let mut rows = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for (i, kind) in cond.kinds.iter().enumerate() {
        if kind.prosumer().is_some_and(|p| p != v) {
            continue;
        }
        let mut fixed = 0.0;
        let mut entries = Vec::new();
        for &(j, c) in &cond.rows[i].entries {
            match local(j) {
                Some(lj) => entries.push((lj, c)),
                None => fixed += c * u[j],
            }
        }
        if entries.is_empty() {
            continue;
        }
        rows.push(SparseRow::new(entries));
        lo.push(cond.lo[i] - fixed);
        hi.push(cond.hi[i] - fixed);
    }
    let problem = QpProblem {
        hessian,
        linear,
        rows,
        lo,
        hi,
    };
    let br = qp::solve(
        &problem,
        &QpSettings {
            tol: (0.01 * tol).clamp(1e-13, 1e-9),
            ..Default::default()
        },
    );
    if let QpStatus::Infeasible { max_violation } = br.status {
        return Err(Error::Infeasible { max_violation });
    }
    let mut u_br = u.clone();
    u_br[own.clone()].copy_from_slice(&br.x);
    let z_br = cond.expand(&u_br);
    Ok(game.player_cost(v, &sol.z) - game.player_cost(v, &z_br))
}
