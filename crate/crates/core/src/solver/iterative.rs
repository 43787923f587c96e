//! Primal-dual forward-backward iteration on the condensed game.
//!
//! The dynamics are eliminated, so the primal step is a pseudo-gradient step
//! followed by a projection onto the consumption and charging boxes. All
//! remaining rows (grid draw, shift and charge states, aggregate load) carry
//! multipliers updated by a projected dual step on the extrapolated primal:
//!
//! ```text
//!     u+      = proj_box(u - tau (F(u) + A' lambda))
//!     w       = lambda + sigma A (2 u+ - u)
//!     lambda+ = w - sigma proj_[lo,hi](w / sigma)
//! ```

use log::warn;
use nalgebra::DVector;

use super::{condensed_problem, finish, Solution, SolveStatus};
use crate::error::{Error, Result};
use crate::game::{GameQP, RowKind};
use crate::linalg::{dense_spectral_norm, rows_spectral_norm, SparseRow};

/// Consecutive iterations above the best residual so far treated as divergence.
const DIVERGENCE_WINDOW: usize = 100;
const POWER_ITERATIONS: usize = 50;

#[derive(Debug, Clone)]
pub struct IterativeOptions {
    pub tol: f64,
    /// Defaults to `100 N M`.
    pub max_iter: Option<usize>,
    /// Primal step; defaults to `1 / (|Q| + |A|^2 / sigma)`.
    pub step: Option<f64>,
    /// Dual step `sigma`.
    pub dual_step: f64,
    /// Starting point `(z, row multipliers)`.
    pub warm_start: Option<(Vec<f64>, Vec<(f64, f64)>)>,
    /// Iterations between full KKT checks.
    pub check_every: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        IterativeOptions {
            tol: 1e-6,
            max_iter: None,
            step: None,
            dual_step: 1.0,
            warm_start: None,
            check_every: 10,
        }
    }
}

struct Split {
    /// `(coordinate, lo, hi)` of the projected boxes.
    boxes: Vec<(usize, f64, f64)>,
    /// Indices (into the condensed rows) of the dualized rows.
    dual_rows: Vec<usize>,
}

fn split(kinds: &[RowKind], rows: &[SparseRow], lo: &[f64], hi: &[f64], dim: usize) -> Split {
    let mut lo_u = vec![f64::NEG_INFINITY; dim];
    let mut hi_u = vec![f64::INFINITY; dim];
    let mut dual_rows = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        match kind {
            RowKind::Consumption { .. } | RowKind::Charge { .. } if rows[i].entries.len() == 1 => {
                let (j, c) = rows[i].entries[0];
                let (a, b) = if c > 0.0 {
                    (lo[i] / c, hi[i] / c)
                } else {
                    (hi[i] / c, lo[i] / c)
                };
                lo_u[j] = lo_u[j].max(a);
                hi_u[j] = hi_u[j].min(b);
            }
            _ => dual_rows.push(i),
        }
    }
    Split {
        boxes: (0..dim).map(|j| (j, lo_u[j], hi_u[j])).collect(),
        dual_rows,
    }
}

/// v-GNE by a projected primal-dual pseudo-gradient iteration.
///
/// Works for asymmetric pricing as well (with a warning: convergence then
/// needs strong monotonicity and a small enough step). Reaching `max_iter`
/// is reported through `status`; sustained residual growth is an error.
pub fn solve_vgne_iterative(game: &GameQP, opts: &IterativeOptions) -> Result<Solution> {
    if !game.symmetric_pricing {
        warn!("asymmetric pricing: no potential, equilibrium uniqueness not guaranteed");
    }
    let cond = game.condense();
    let problem = condensed_problem(&cond);
    let nu = cond.input_dim();
    let q = &cond.hessian;
    let parts = split(&cond.kinds, &cond.rows, &cond.lo, &cond.hi, nu);
    let a: Vec<&SparseRow> = parts.dual_rows.iter().map(|&i| &cond.rows[i]).collect();
    let a_lo: Vec<f64> = parts.dual_rows.iter().map(|&i| cond.lo[i]).collect();
    let a_hi: Vec<f64> = parts.dual_rows.iter().map(|&i| cond.hi[i]).collect();
    let nd = a.len();

    let sigma = opts.dual_step;
    if !(sigma > 0.0) {
        return Err(Error::param("dual_step", "must be positive"));
    }
    let tau = match opts.step {
        Some(t) if t > 0.0 => t,
        Some(_) => return Err(Error::param("step", "must be positive")),
        None => {
            let owned: Vec<SparseRow> = a.iter().map(|r| (*r).clone()).collect();
            let norm_a = rows_spectral_norm(&owned, nu, POWER_ITERATIONS);
            1.0 / (dense_spectral_norm(q, POWER_ITERATIONS) + norm_a * norm_a / sigma)
        }
    };
    if game.monotonicity_modulus() <= 0.0 {
        warn!("pseudo-gradient is not strongly monotone on the feasible directions; convergence not guaranteed");
    }
    let max_iter = opts.max_iter.unwrap_or(100 * game.prosumers() * game.horizon());

    let project = |u: &mut [f64]| {
        for &(j, l, h) in &parts.boxes {
            u[j] = u[j].clamp(l, h);
        }
    };
    let apply_at = |lambda: &[f64], out: &mut [f64]| {
        for (r, &l) in a.iter().zip(lambda) {
            if l != 0.0 {
                r.add_transpose_to(l, out);
            }
        }
    };

    let idx = game.layout.input_indices();
    let (mut u, mut lambda) = match &opts.warm_start {
        Some((z, duals)) if z.len() == game.dim() && duals.len() == cond.rows.len() => (
            idx.iter().map(|&i| z[i]).collect::<Vec<f64>>(),
            parts
                .dual_rows
                .iter()
                .map(|&i| duals[i].1 - duals[i].0)
                .collect::<Vec<f64>>(),
        ),
        _ => (vec![0.0; nu], vec![0.0; nd]),
    };
    project(&mut u);

    // full multipliers for the KKT check: box multipliers from the stationarity sign at the bound
    let row_duals = |u: &[f64], lambda: &[f64]| -> Vec<(f64, f64)> {
        let mut g = (q * DVector::from_column_slice(u) + &cond.linear).as_slice().to_vec();
        apply_at(lambda, &mut g);
        let mut duals = vec![(0.0, 0.0); cond.rows.len()];
        for (k, &i) in parts.dual_rows.iter().enumerate() {
            duals[i] = if lambda[k] >= 0.0 {
                (0.0, lambda[k])
            } else {
                (-lambda[k], 0.0)
            };
        }
        for (i, kind) in cond.kinds.iter().enumerate() {
            if !matches!(kind, RowKind::Consumption { .. } | RowKind::Charge { .. }) || cond.rows[i].entries.len() != 1
            {
                continue;
            }
            let (j, c) = cond.rows[i].entries[0];
            let v = c * u[j];
            // stationarity: g_j + c (zu - zl) = 0
            let m = -g[j] / c;
            if m > 0.0 && v >= cond.hi[i] {
                duals[i] = (0.0, m);
            } else if m < 0.0 && v <= cond.lo[i] {
                duals[i] = (-m, 0.0);
            }
            g[j] += c * (duals[i].1 - duals[i].0);
        }
        duals
    };

    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = max_iter;
    let mut grad = vec![0.0; nu];
    let mut u_next = vec![0.0; nu];
    for it in 1..=max_iter {
        let fu = q * DVector::from_column_slice(&u) + &cond.linear;
        grad.copy_from_slice(fu.as_slice());
        apply_at(&lambda, &mut grad);
        for j in 0..nu {
            u_next[j] = u[j] - tau * grad[j];
        }
        project(&mut u_next);
        let mut step_sq = 0.0;
        let du: Vec<f64> = u_next.iter().zip(&u).map(|(a, b)| a - b).collect();
        for k in 0..nd {
            let extrapolated = 2.0 * a[k].dot(&u_next) - a[k].dot(&u);
            let w = lambda[k] + sigma * extrapolated;
            let next = w - sigma * (w / sigma).clamp(a_lo[k], a_hi[k]);
            let dl = next - lambda[k];
            step_sq += dl * dl / sigma;
            lambda[k] = next;
        }
        step_sq += du.iter().map(|d| d * d).sum::<f64>() / tau;
        std::mem::swap(&mut u, &mut u_next);

        let residual = step_sq.sqrt();
        if !residual.is_finite() {
            return Err(Error::Diverged {
                iterations: it,
                residual,
            });
        }
        if residual > best {
            stalled += 1;
            if stalled >= DIVERGENCE_WINDOW {
                return Err(Error::Diverged {
                    iterations: it,
                    residual,
                });
            }
        } else {
            best = residual;
            stalled = 0;
        }
        history.push(residual);

        if it % opts.check_every.max(1) == 0 || it == 1 || it == max_iter {
            let duals = row_duals(&u, &lambda);
            if problem.kkt_residual(&u, &duals) <= opts.tol {
                status = SolveStatus::Converged;
                iterations = it;
                break;
            }
        }
    }
    let duals = row_duals(&u, &lambda);
    let mut sol = finish(game, &cond, &u, duals, iterations, status, history);
    if sol.status == SolveStatus::Converged && sol.kkt_residual > opts.tol {
        sol.status = SolveStatus::MaxIterations;
    }
    Ok(sol)
}
