//! Equilibrium of the game with constant parameters held forever.
//!
//! A steady state `(x, u)` satisfies `x = A x + B u + d`, i.e. `e = e_ref`
//! and `(1 - alpha) q = beta s`. Among those, the equilibrium minimizes the
//! one-step potential subject to the device, state and aggregate limits.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::game::WindowStep;
use crate::linalg::SparseRow;
use crate::model::{validate_fleet, ProsumerParams, ProsumerState};
use crate::qp::{self, QpProblem, QpSettings, QpStatus};
use crate::Error;

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub x_bar: Vec<ProsumerState>,
    /// `(e, s)` per prosumer.
    pub u_bar: Vec<(f64, f64)>,
    pub feasible: bool,
    /// `(lower, upper)` multiplier of the aggregate-load row.
    pub coupling_dual: (f64, f64),
    /// Smallest achievable largest violation when infeasible, else zero.
    pub max_violation: f64,
}

const E: usize = 0;
const S: usize = 1;
const ZETA: usize = 2;
const Q: usize = 3;

/// Steady-state equilibrium for parameters `step` held constant.
///
/// Infeasibility is reported through `feasible`, not as an error.
pub fn solve_steady_state(params: &[ProsumerParams], step: &WindowStep) -> Result<SteadyState> {
    let m = params.len();
    if m == 0 {
        return Err(Error::param("params", "at least one prosumer required"));
    }
    validate_fleet(params)?;
    crate::game::ScenarioWindow::new(vec![step.clone()]).validate(params)?;
    if !step.rates.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::AsymmetricPricing);
    }
    let rho1 = step.rates[0].rho1;
    let n = 4 * m;
    let idx = |v: usize, var: usize| 4 * v + var;

    let mut hessian = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    let g_total = step.total_generation();
    for v in 0..m {
        for w in 0..m {
            let c = if v == w { 2.0 * rho1 } else { rho1 };
            for a in [E, S] {
                for b in [E, S] {
                    hessian[(idx(v, a), idx(w, b))] = c;
                }
            }
        }
        let lin = rho1 * (step.l_passive - g_total - step.generation[v]) + step.rates[v].rho2;
        linear[idx(v, E)] = lin;
        linear[idx(v, S)] = lin;
        hessian[(idx(v, ZETA), idx(v, ZETA))] = 2.0 * step.weights[v].gamma1;
        hessian[(idx(v, Q), idx(v, Q))] = 2.0 * step.weights[v].gamma2;
    }

    let mut rows = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut push = |entries: Vec<(usize, f64)>, l: f64, h: f64| {
        rows.push(SparseRow::new(entries));
        lo.push(l);
        hi.push(h);
    };
    for (v, p) in params.iter().enumerate() {
        let (s_lo, s_hi) = p.battery.input_bounds();
        let g = step.generation[v];
        push(vec![(idx(v, E), 1.0)], p.flex.e_min, p.flex.e_max);
        push(vec![(idx(v, S), 1.0)], s_lo, s_hi);
        push(vec![(idx(v, E), 1.0), (idx(v, S), 1.0)], g, p.flex.l_max + g);
        let (z_lo, z_hi) = step.zeta_bounds[v];
        push(vec![(idx(v, ZETA), 1.0)], z_lo, z_hi);
        push(vec![(idx(v, Q), 1.0)], 0.0, p.battery.q_max);
        let e_ref = step.e_ref[v];
        push(vec![(idx(v, E), 1.0)], e_ref, e_ref);
        push(
            vec![(idx(v, Q), 1.0 - p.battery.alpha), (idx(v, S), -p.battery.beta)],
            0.0,
            0.0,
        );
    }
    let shift = step.l_passive - g_total;
    let coupling: Vec<(usize, f64)> = (0..m).flat_map(|v| [(idx(v, E), 1.0), (idx(v, S), 1.0)]).collect();
    push(coupling, step.l_min - shift, step.l_max - shift);

    let problem = QpProblem {
        hessian,
        linear,
        rows,
        lo,
        hi,
    };
    let sol = qp::solve(&problem, &QpSettings::default());
    let (feasible, max_violation) = match sol.status {
        QpStatus::Infeasible { max_violation } => (false, max_violation),
        QpStatus::Optimal => (true, 0.0),
        QpStatus::MaxIterations => {
            return Err(Error::MaxIterations {
                iterations: sol.iterations,
                residual: sol.residual,
            })
        }
    };
    let x = &sol.x;
    let coupling_dual = *sol.duals.last().expect("coupling row");

    Ok(SteadyState {
        x_bar: (0..m)
            .map(|v| ProsumerState::new(x[idx(v, ZETA)], x[idx(v, Q)]))
            .collect(),
        u_bar: (0..m).map(|v| (x[idx(v, E)], x[idx(v, S)])).collect(),
        feasible,
        coupling_dual: (coupling_dual.0, coupling_dual.1),
        max_violation,
    })
}
