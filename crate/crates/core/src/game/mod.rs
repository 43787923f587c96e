//! Assembly of the horizon-coupled prosumer game into affine-quadratic data.
//!
//! The pseudo-gradient of the game is the affine map `F(z) = H z + f`. Row
//! block `v` of `F` is the gradient of prosumer `v`'s horizon cost with
//! respect to its own inputs and states. For an input coordinate of step `k`
//! this is `rho1(L_k + l_k) + rho2`; for states it is `2 gamma zeta`,
//! `2 gamma q`. When all prosumers face the same rates `H` is symmetric and
//! `P(z) = z'Hz/2 + f'z + c0` is an exact potential of the game.
//!
//! The feasible set is a polytope: `2MN` dynamics equalities plus two-sided
//! rows `lo <= g'z <= hi` for device limits and the shared aggregate-load
//! limits (the coupling rows, one per step).

pub mod audit;
mod condense;
mod layout;
mod window;

pub use condense::{AffineExpr, CondensedGame};
pub use layout::{Layout, Variable};
pub use window::{ScenarioWindow, WindowStep};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SparseRow;
use crate::model::{self, ComfortWeights, ProsumerParams, ProsumerState};

/// Tolerance used when checking the initial state against its box.
const STATE_TOL: f64 = 1e-9;

/// What a two-sided inequality row constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Consumption {
        prosumer: usize,
        step: usize,
    },
    Charge {
        prosumer: usize,
        step: usize,
    },
    /// `0 <= e + s - g <= l_max`
    GridDraw {
        prosumer: usize,
        step: usize,
    },
    /// Shift state at the end of step `step - 1`, `step` in 1..=N.
    Shift {
        prosumer: usize,
        step: usize,
    },
    Soc {
        prosumer: usize,
        step: usize,
    },
    /// Aggregate load limit of step `step`.
    Coupling {
        step: usize,
    },
}

impl RowKind {
    pub fn prosumer(&self) -> Option<usize> {
        match *self {
            RowKind::Consumption { prosumer, .. }
            | RowKind::Charge { prosumer, .. }
            | RowKind::GridDraw { prosumer, .. }
            | RowKind::Shift { prosumer, .. }
            | RowKind::Soc { prosumer, .. } => Some(prosumer),
            RowKind::Coupling { .. } => None,
        }
    }

    pub fn is_coupling(&self) -> bool {
        matches!(self, RowKind::Coupling { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedRow {
    pub kind: RowKind,
    pub row: SparseRow,
    pub lo: f64,
    pub hi: f64,
}

impl BoundedRow {
    pub fn violation(&self, z: &[f64]) -> f64 {
        let v = self.row.dot(z);
        (self.lo - v).max(v - self.hi).max(0.0)
    }
}

/// The assembled generalized game for one initial state and parameter window.
#[derive(Debug, Clone)]
pub struct GameQP {
    pub layout: Layout,
    /// `H`, the Jacobian of the pseudo-gradient.
    pub hessian: DMatrix<f64>,
    /// `f`, the pseudo-gradient at `z = 0`.
    pub offset: DVector<f64>,
    /// Potential value at `z = 0` (meaningful under symmetric pricing).
    pub constant: f64,
    /// Dynamics rows, two per prosumer and step: shift row then charge row.
    pub equalities: Vec<SparseRow>,
    pub eq_rhs: Vec<f64>,
    /// Device rows per prosumer, followed by `N` coupling rows.
    pub rows: Vec<BoundedRow>,
    pub x0: Vec<ProsumerState>,
    pub params: Vec<ProsumerParams>,
    pub window: ScenarioWindow,
    pub symmetric_pricing: bool,
}

/// Builds the game for initial states `x0`, fleet `params` and parameter window `window`.
pub fn assemble(x0: &[ProsumerState], params: &[ProsumerParams], window: &ScenarioWindow) -> Result<GameQP> {
    let m = params.len();
    let n = window.horizon();
    let layout = Layout::new(m, n)?;
    if x0.len() != m {
        return Err(Error::dims("initial states", m, x0.len()));
    }
    model::validate_fleet(params)?;
    window.validate(params)?;
    for (v, (x, p)) in x0.iter().zip(params).enumerate() {
        if !(x.q >= -STATE_TOL && x.q <= p.battery.q_max + STATE_TOL) || !x.zeta.is_finite() {
            return Err(Error::InconsistentBounds {
                location: format!("initial state of prosumer {} (index {v})", p.id),
                lo: 0.0,
                hi: p.battery.q_max,
            });
        }
    }

    let dim = layout.dim();
    let mut hessian = DMatrix::zeros(dim, dim);
    let mut offset = DVector::zeros(dim);

    for (k, st) in window.steps.iter().enumerate() {
        let total_gen = st.total_generation();
        for v in 0..m {
            let rho1 = st.rates[v].rho1;
            for w in 0..m {
                let c = if v == w { 2.0 * rho1 } else { rho1 };
                for a in [layout.e(v, k), layout.s(v, k)] {
                    for b in [layout.e(w, k), layout.s(w, k)] {
                        hessian[(a, b)] = c;
                    }
                }
            }
            let lin = rho1 * (st.l_passive - total_gen - st.generation[v]) + st.rates[v].rho2;
            offset[layout.e(v, k)] = lin;
            offset[layout.s(v, k)] = lin;
        }
    }
    for v in 0..m {
        for k in 1..=n {
            if let Some(w) = state_weight(window, v, k) {
                hessian[(layout.zeta(v, k), layout.zeta(v, k))] = 2.0 * w.gamma1;
                hessian[(layout.q(v, k), layout.q(v, k))] = 2.0 * w.gamma2;
            }
        }
    }

    let mut equalities = Vec::with_capacity(2 * m * n);
    let mut eq_rhs = Vec::with_capacity(2 * m * n);
    for (v, p) in params.iter().enumerate() {
        let alpha = p.battery.alpha;
        let beta = p.battery.beta;
        for k in 0..n {
            let e_ref = window.steps[k].e_ref[v];
            // zeta_{k+1} - zeta_k - e_k = -e_ref_k
            let mut zr = vec![(layout.zeta(v, k + 1), 1.0), (layout.e(v, k), -1.0)];
            let mut zb = -e_ref;
            // q_{k+1} - alpha q_k - beta s_k = 0
            let mut qr = vec![(layout.q(v, k + 1), 1.0), (layout.s(v, k), -beta)];
            let mut qb = 0.0;
            if k == 0 {
                zb += x0[v].zeta;
                qb += alpha * x0[v].q;
            } else {
                zr.push((layout.zeta(v, k), -1.0));
                qr.push((layout.q(v, k), -alpha));
            }
            equalities.push(SparseRow::new(zr).compact());
            eq_rhs.push(zb);
            equalities.push(SparseRow::new(qr).compact());
            eq_rhs.push(qb);
        }
    }

    let mut rows = Vec::with_capacity(5 * m * n + n);
    for (v, p) in params.iter().enumerate() {
        let (s_lo, s_hi) = p.battery.input_bounds();
        for k in 0..n {
            let st = &window.steps[k];
            let g = st.generation[v];
            rows.push(BoundedRow {
                kind: RowKind::Consumption { prosumer: v, step: k },
                row: SparseRow::new(vec![(layout.e(v, k), 1.0)]),
                lo: p.flex.e_min,
                hi: p.flex.e_max,
            });
            rows.push(BoundedRow {
                kind: RowKind::Charge { prosumer: v, step: k },
                row: SparseRow::new(vec![(layout.s(v, k), 1.0)]),
                lo: s_lo,
                hi: s_hi,
            });
            rows.push(BoundedRow {
                kind: RowKind::GridDraw { prosumer: v, step: k },
                row: SparseRow::new(vec![(layout.e(v, k), 1.0), (layout.s(v, k), 1.0)]),
                lo: g,
                hi: p.flex.l_max + g,
            });
        }
        for k in 1..=n {
            let (lo, hi) = window.steps[k - 1].zeta_bounds[v];
            rows.push(BoundedRow {
                kind: RowKind::Shift { prosumer: v, step: k },
                row: SparseRow::new(vec![(layout.zeta(v, k), 1.0)]),
                lo,
                hi,
            });
            rows.push(BoundedRow {
                kind: RowKind::Soc { prosumer: v, step: k },
                row: SparseRow::new(vec![(layout.q(v, k), 1.0)]),
                lo: 0.0,
                hi: p.battery.q_max,
            });
        }
    }
    for (k, st) in window.steps.iter().enumerate() {
        let entries = (0..m)
            .flat_map(|v| [(layout.e(v, k), 1.0), (layout.s(v, k), 1.0)])
            .collect();
        let shift = st.l_passive - st.total_generation();
        rows.push(BoundedRow {
            kind: RowKind::Coupling { step: k },
            row: SparseRow::new(entries),
            lo: st.l_min - shift,
            hi: st.l_max - shift,
        });
    }

    let mut game = GameQP {
        layout,
        hessian,
        offset,
        constant: 0.0,
        equalities,
        eq_rhs,
        rows,
        x0: x0.to_vec(),
        params: params.to_vec(),
        window: window.clone(),
        symmetric_pricing: window.symmetric_pricing(),
    };
    if game.symmetric_pricing {
        game.constant = game.potential_from_stage_terms(&vec![0.0; dim]);
    }
    Ok(game)
}

/// Weights applied to the state reached after `k` steps, if that state is penalized.
fn state_weight(window: &ScenarioWindow, v: usize, k: usize) -> Option<ComfortWeights> {
    let n = window.horizon();
    if k < n {
        Some(window.steps[k].weights[v])
    } else if k == n && window.terminal_cost {
        Some(window.steps[n - 1].weights[v])
    } else {
        None
    }
}

impl GameQP {
    pub fn prosumers(&self) -> usize {
        self.layout.prosumers()
    }

    pub fn horizon(&self) -> usize {
        self.layout.horizon()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Index of the first coupling row in `rows`.
    pub fn coupling_start(&self) -> usize {
        self.rows.len() - self.horizon()
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::dims("decision vector", self.dim(), z.len()));
        }
        Ok(())
    }

    /// `F(z) = H z + f`.
    pub fn pseudo_gradient(&self, z: &[f64]) -> Result<DVector<f64>> {
        self.check_len(z)?;
        Ok(&self.hessian * DVector::from_column_slice(z) + &self.offset)
    }

    /// `z'Hz/2 + f'z + c0`; only defined when every prosumer faces the same rates.
    pub fn potential_value(&self, z: &[f64]) -> Result<f64> {
        if !self.symmetric_pricing {
            return Err(Error::AsymmetricPricing);
        }
        self.check_len(z)?;
        let zv = DVector::from_column_slice(z);
        Ok(0.5 * zv.dot(&(&self.hessian * &zv)) + self.offset.dot(&zv) + self.constant)
    }

    /// The potential written out step by step from loads and states:
    /// `sum_k [ rho1/2 sum_v l_v^2 + rho1/2 (L^A)^2 + rho1 L^P L^A + sum_v rho2 l_v ] + state costs`.
    ///
    /// Independent of `H`/`f`; used for the constant term and as a check.
    pub fn potential_from_stage_terms(&self, z: &[f64]) -> f64 {
        let (loads, _) = self.loads(z);
        let states = self.state_trajectories(z);
        let mut total = 0.0;
        for (k, st) in self.window.steps.iter().enumerate() {
            let rho1 = st.rates[0].rho1;
            let active: f64 = loads[k].iter().sum();
            total += 0.5 * rho1 * active * active + rho1 * st.l_passive * active;
            for v in 0..self.prosumers() {
                let l = loads[k][v];
                total += 0.5 * rho1 * l * l + st.rates[v].rho2 * l;
            }
        }
        for v in 0..self.prosumers() {
            for (k, x) in states[v].iter().enumerate() {
                if let Some(w) = self.state_cost_weight(v, k) {
                    total += w.gamma1 * x.zeta * x.zeta + w.gamma2 * x.q * x.q;
                }
            }
        }
        total
    }

    /// Weights on `x_k` (k in 0..=N) in the horizon cost, `None` if unpenalized.
    pub fn state_cost_weight(&self, v: usize, k: usize) -> Option<ComfortWeights> {
        if k == 0 {
            Some(self.window.steps[0].weights[v])
        } else {
            state_weight(&self.window, v, k)
        }
    }

    /// Local loads `l[k][v]` and aggregate loads `L[k]` implied by `z`.
    pub fn loads(&self, z: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let l = &self.layout;
        let mut local = Vec::with_capacity(self.horizon());
        let mut aggregate = Vec::with_capacity(self.horizon());
        for (k, st) in self.window.steps.iter().enumerate() {
            let row: Vec<f64> = (0..self.prosumers())
                .map(|v| model::local_load(z[l.e(v, k)], z[l.s(v, k)], st.generation[v]))
                .collect();
            aggregate.push(model::aggregate_load(&row, st.l_passive));
            local.push(row);
        }
        (local, aggregate)
    }

    /// State trajectories `x_0..=x_N` per prosumer as read from `z` (with `x_0` from the data).
    pub fn state_trajectories(&self, z: &[f64]) -> Vec<Vec<ProsumerState>> {
        let l = &self.layout;
        (0..self.prosumers())
            .map(|v| {
                std::iter::once(self.x0[v])
                    .chain((1..=self.horizon()).map(|k| ProsumerState::new(z[l.zeta(v, k)], z[l.q(v, k)])))
                    .collect()
            })
            .collect()
    }

    /// Horizon cost of prosumer `v`, evaluated from stage costs.
    pub fn player_cost(&self, v: usize, z: &[f64]) -> f64 {
        let (local, aggregate) = self.loads(z);
        let states = &self.state_trajectories(z)[v];
        let mut cost = 0.0;
        for (k, st) in self.window.steps.iter().enumerate() {
            cost += model::stage_cost_weighted(states[k], local[k][v], aggregate[k], &st.rates[v], &st.weights[v]);
        }
        if let Some(w) = state_weight(&self.window, v, self.horizon()) {
            let x = states[self.horizon()];
            cost += w.gamma1 * x.zeta * x.zeta + w.gamma2 * x.q * x.q;
        }
        cost
    }

    /// Largest violation of any equality or inequality row.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let eq = self
            .equalities
            .iter()
            .zip(&self.eq_rhs)
            .map(|(r, b)| (r.dot(z) - b).abs())
            .fold(0.0, f64::max);
        self.rows.iter().map(|r| r.violation(z)).fold(eq, f64::max)
    }

    /// First input `(e_0, s_0)` of every prosumer.
    pub fn first_inputs(&self, z: &[f64]) -> Vec<(f64, f64)> {
        (0..self.prosumers())
            .map(|v| (z[self.layout.e(v, 0)], z[self.layout.s(v, 0)]))
            .collect()
    }

    /// Multipliers `nu` of the dynamics rows solving `A_eq' nu = -r` on the
    /// state coordinates, where `r = F(z) + G' lambda` is the stationarity
    /// residual without the dynamics term. Solved by backward recursion over
    /// each prosumer's chain of states.
    pub fn dynamics_multipliers(&self, residual: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let n = self.horizon();
        let mut nu = vec![0.0; 2 * self.prosumers() * n];
        for (v, p) in self.params.iter().enumerate() {
            let row = |k: usize| 2 * (v * n + k);
            // column zeta_j: nu_zeta[j-1] - nu_zeta[j] = -r (the second term only for j < N)
            // column q_j:    nu_q[j-1] - alpha nu_q[j] = -r
            let mut next_zeta = 0.0;
            let mut next_q = 0.0;
            for j in (1..=n).rev() {
                let nz = -residual[l.zeta(v, j)] + next_zeta;
                let nq = -residual[l.q(v, j)] + p.battery.alpha * next_q;
                nu[row(j - 1)] = nz;
                nu[row(j - 1) + 1] = nq;
                next_zeta = nz;
                next_q = nq;
            }
        }
        nu
    }

    /// Input-only reformulation with the states eliminated through the dynamics.
    pub fn condense(&self) -> CondensedGame {
        CondensedGame::new(self)
    }

    /// Smallest eigenvalue of the symmetric part of the condensed Hessian:
    /// the strong-monotonicity modulus of `F` on dynamics-consistent directions.
    pub fn monotonicity_modulus(&self) -> f64 {
        let q = self.condense().hessian;
        let sym = (&q + q.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

#[cfg(test)]
pub(crate) mod tests;
