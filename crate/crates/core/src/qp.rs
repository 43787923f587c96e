//! Dense convex QP solver for problems of the form
//!
//! ```text
//!     minimize    x'Qx/2 + c'x
//!     subject to  lo <= a_i'x <= hi    (i = 1..m, sides may be infinite)
//! ```
//!
//! Rows with `lo == hi` are treated as equalities. The method is a
//! Mehrotra predictor-corrector interior point on the slack formulation,
//! followed by an active-set polish that solves the equality-constrained
//! KKT system of the identified active set. When the interior point does not
//! converge an elastic problem (minimize the largest violation) certifies
//! infeasibility.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::linalg::{inf_norm, SparseRow};

const STEP_TO_BOUNDARY: f64 = 0.995;
const NEIGHBORHOOD: f64 = 1e-2;
const STALL_ITERATIONS: usize = 4;
const POLISH_ROUNDS: usize = 10;
const REFINEMENT_STEPS: usize = 6;

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub rows: Vec<SparseRow>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    /// Target for primal, dual and complementarity residuals (absolute, inf-norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Initial primal point; zeros when absent.
    pub x_init: Option<Vec<f64>>,
    /// Lower bound on the initial slacks and multipliers.
    pub initial_slack: f64,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-10,
            max_iter: 120,
            x_init: None,
            initial_slack: 1.0,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    /// The smallest achievable largest row violation is `max_violation`.
    Infeasible {
        max_violation: f64,
    },
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Nonnegative multipliers `(lower, upper)` per row.
    pub duals: Vec<(f64, f64)>,
    pub status: QpStatus,
    pub iterations: usize,
    /// KKT residual of the returned point (inf-norm, absolute).
    pub residual: f64,
    pub polished: bool,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// Stationarity, primal feasibility, dual sign and complementarity, as one inf-norm.
    pub fn kkt_residual(&self, x: &[f64], duals: &[(f64, f64)]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let mut grad = &self.hessian * &xv + &self.linear;
        let mut worst = 0.0f64;
        for (i, r) in self.rows.iter().enumerate() {
            let (zl, zu) = duals[i];
            r.add_transpose_to(zu - zl, grad.as_mut_slice());
            let v = r.dot(x);
            worst = worst.max(self.lo[i] - v).max(v - self.hi[i]);
            worst = worst.max(-zl).max(-zu);
            if self.lo[i].is_finite() {
                worst = worst.max((zl * (v - self.lo[i])).abs());
            } else {
                worst = worst.max(zl.abs());
            }
            if self.hi[i].is_finite() {
                worst = worst.max((zu * (self.hi[i] - v)).abs());
            } else {
                worst = worst.max(zu.abs());
            }
        }
        worst.max(inf_norm(grad.as_slice()))
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let v = r.dot(x);
                (self.lo[i] - v).max(v - self.hi[i]).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.hessian * &xv)) + self.linear.dot(&xv)
    }
}

fn is_equality(lo: f64, hi: f64) -> bool {
    lo.is_finite() && hi.is_finite() && (hi - lo).abs() <= 1e-12 * (1.0 + lo.abs().max(hi.abs()))
}

/// Factorization of `K = Q + sum d_i a_i a_i' + reg I` together with the
/// Schur complement of the equality rows.
struct Newton {
    chol: Cholesky<f64, Dyn>,
    /// `K^{-1} E'` columns.
    kinv_et: Vec<DVector<f64>>,
    schur: Option<Cholesky<f64, Dyn>>,
}

impl Newton {
    fn factor(base: &DMatrix<f64>, ineq: &[(usize, f64)], rows: &[SparseRow], eq: &[usize]) -> Option<Newton> {
        let mut k = base.clone();
        for &(i, d) in ineq {
            let r = &rows[i].entries;
            for &(a, ca) in r {
                for &(b, cb) in r {
                    k[(a, b)] += d * ca * cb;
                }
            }
        }
        for i in 0..k.nrows() {
            k[(i, i)] += 1e-14 * k[(i, i)].abs().max(1.0);
        }
        let chol = k.cholesky()?;
        let n = base.nrows();
        let kinv_et: Vec<DVector<f64>> = eq
            .iter()
            .map(|&i| {
                let mut e = DVector::zeros(n);
                rows[i].add_transpose_to(1.0, e.as_mut_slice());
                chol.solve(&e)
            })
            .collect();
        let schur = if eq.is_empty() {
            None
        } else {
            let p = eq.len();
            let mut s = DMatrix::zeros(p, p);
            for (a, &ia) in eq.iter().enumerate() {
                for (b, col) in kinv_et.iter().enumerate() {
                    s[(a, b)] = rows[ia].dot(col.as_slice());
                }
            }
            let sym = (&s + s.transpose()) * 0.5;
            let sscale = sym.diagonal().iter().fold(1e-300f64, |m, v| m.max(v.abs()));
            let mut sym = sym;
            for i in 0..p {
                sym[(i, i)] += 1e-14 * sscale;
            }
            Some(sym.cholesky()?)
        };
        Some(Newton { chol, kinv_et, schur })
    }

    /// Solves `[K E'; E 0] [dx; dy] = [rx; ry]`.
    fn solve(&self, rows: &[SparseRow], eq: &[usize], rx: &DVector<f64>, ry: &[f64]) -> (DVector<f64>, Vec<f64>) {
        let kinv_r = self.chol.solve(rx);
        match &self.schur {
            None => (kinv_r, vec![]),
            Some(s) => {
                let rhs = DVector::from_iterator(
                    eq.len(),
                    eq.iter().zip(ry).map(|(&i, &b)| rows[i].dot(kinv_r.as_slice()) - b),
                );
                let dy = s.solve(&rhs);
                let mut dx = kinv_r;
                for (col, &y) in self.kinv_et.iter().zip(dy.iter()) {
                    dx.axpy(-y, col, 1.0);
                }
                (dx, dy.as_slice().to_vec())
            }
        }
    }
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    y: Vec<f64>,
    wl: Vec<f64>,
    zl: Vec<f64>,
    wu: Vec<f64>,
    zu: Vec<f64>,
}

struct Residuals {
    rd: DVector<f64>,
    re: Vec<f64>,
    rl: Vec<f64>,
    ru: Vec<f64>,
    mu: f64,
    primal: f64,
    dual: f64,
}

pub fn solve(problem: &QpProblem, settings: &QpSettings) -> QpSolution {
    let mut sol = interior_point(problem, settings);
    if settings.polish {
        if let Some(p) = polish(problem, &sol) {
            if sol.status == QpStatus::Optimal && p.residual <= sol.residual {
                sol = p;
            } else if sol.status != QpStatus::Optimal && p.residual <= settings.tol {
                // the interior point stalled close to the solution; the active set was right
                sol = p;
            }
        }
    }
    if sol.status != QpStatus::Optimal {
        let floor = min_max_violation(problem, settings);
        if floor > settings.tol.max(1e-9) * 10.0 {
            sol.status = QpStatus::Infeasible { max_violation: floor };
        }
    }
    sol
}

fn interior_point(problem: &QpProblem, settings: &QpSettings) -> QpSolution {
    let n = problem.dim();
    let m = problem.rows.len();
    let rows = &problem.rows;
    let mut eq = Vec::new();
    let mut eq_rhs = Vec::new();
    let mut has_lo = vec![false; m];
    let mut has_hi = vec![false; m];
    for i in 0..m {
        if problem.lo[i] > problem.hi[i] {
            let v = problem.lo[i] - problem.hi[i];
            return QpSolution {
                x: vec![0.0; n],
                duals: vec![(0.0, 0.0); m],
                status: QpStatus::Infeasible { max_violation: 0.5 * v },
                iterations: 0,
                residual: f64::INFINITY,
                polished: false,
            };
        }
        if is_equality(problem.lo[i], problem.hi[i]) {
            eq.push(i);
            eq_rhs.push(0.5 * (problem.lo[i] + problem.hi[i]));
        } else {
            has_lo[i] = problem.lo[i].is_finite();
            has_hi[i] = problem.hi[i].is_finite();
        }
    }
    let n_compl = has_lo.iter().filter(|&&b| b).count() + has_hi.iter().filter(|&&b| b).count();

    let theta = settings.initial_slack.max(1e-8);
    let x = match &settings.x_init {
        Some(x0) if x0.len() == n => DVector::from_column_slice(x0),
        _ => DVector::zeros(n),
    };
    let xs = x.as_slice();
    let mut it = Iterate {
        y: vec![0.0; eq.len()],
        wl: (0..m)
            .map(|i| {
                if has_lo[i] {
                    (rows[i].dot(xs) - problem.lo[i]).max(theta)
                } else {
                    0.0
                }
            })
            .collect(),
        wu: (0..m)
            .map(|i| {
                if has_hi[i] {
                    (problem.hi[i] - rows[i].dot(xs)).max(theta)
                } else {
                    0.0
                }
            })
            .collect(),
        zl: (0..m).map(|i| if has_lo[i] { theta } else { 0.0 }).collect(),
        zu: (0..m).map(|i| if has_hi[i] { theta } else { 0.0 }).collect(),
        x,
    };

    let residuals = |it: &Iterate| -> Residuals {
        let xs = it.x.as_slice();
        let mut rd = &problem.hessian * &it.x + &problem.linear;
        for (&i, &y) in eq.iter().zip(&it.y) {
            rows[i].add_transpose_to(y, rd.as_mut_slice());
        }
        let mut rl = vec![0.0; m];
        let mut ru = vec![0.0; m];
        let mut compl = 0.0;
        let mut primal = 0.0f64;
        for i in 0..m {
            if !(has_lo[i] || has_hi[i]) {
                continue;
            }
            let v = rows[i].dot(xs);
            rows[i].add_transpose_to(it.zu[i] - it.zl[i], rd.as_mut_slice());
            if has_lo[i] {
                rl[i] = v - it.wl[i] - problem.lo[i];
                compl += it.wl[i] * it.zl[i];
                primal = primal.max(rl[i].abs());
            }
            if has_hi[i] {
                ru[i] = v + it.wu[i] - problem.hi[i];
                compl += it.wu[i] * it.zu[i];
                primal = primal.max(ru[i].abs());
            }
        }
        let re: Vec<f64> = eq.iter().zip(&eq_rhs).map(|(&i, &b)| rows[i].dot(xs) - b).collect();
        primal = primal.max(inf_norm(&re));
        let dual = inf_norm(rd.as_slice());
        Residuals {
            rd,
            re,
            rl,
            ru,
            mu: if n_compl > 0 { compl / n_compl as f64 } else { 0.0 },
            primal,
            dual,
        }
    };

    let mut status = QpStatus::MaxIterations;
    let mut iterations = 0;
    let mut best_merit = f64::INFINITY;
    let mut stalled = 0;
    let mut best: Option<(f64, Iterate)> = None;
    for iter in 0..settings.max_iter {
        iterations = iter;
        let r = residuals(&it);
        let max_compl = (0..m)
            .map(|i| {
                let a = if has_lo[i] { it.wl[i] * it.zl[i] } else { 0.0 };
                let b = if has_hi[i] { it.wu[i] * it.zu[i] } else { 0.0 };
                a.max(b)
            })
            .fold(0.0, f64::max);
        if r.primal <= settings.tol && r.dual <= settings.tol && max_compl <= settings.tol {
            status = QpStatus::Optimal;
            break;
        }
        // the Newton systems lose accuracy once mu is tiny; leave the rest to the polish
        let merit = r.primal.max(r.dual).max(max_compl);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, it.clone()));
        }
        if merit < best_merit * 0.5 {
            best_merit = merit;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_ITERATIONS {
                break;
            }
        }
        let dual_size = it.zl.iter().chain(&it.zu).fold(0.0f64, |a, &b| a.max(b));
        if !dual_size.is_finite() || dual_size > 1e14 {
            break;
        }

        let d: Vec<(usize, f64)> = (0..m)
            .filter(|&i| has_lo[i] || has_hi[i])
            .map(|i| {
                let mut d = 0.0;
                if has_lo[i] {
                    d += it.zl[i] / it.wl[i];
                }
                if has_hi[i] {
                    d += it.zu[i] / it.wu[i];
                }
                (i, d)
            })
            .collect();
        let Some(newton) = Newton::factor(&problem.hessian, &d, rows, &eq) else {
            break;
        };

        let direction = |target_l: &[f64], target_u: &[f64]| {
            // target_* are the desired complementarity right-hand sides rho
            let mut rx = -&r.rd;
            for i in 0..m {
                let mut coef = 0.0;
                if has_lo[i] {
                    coef += (target_l[i] - it.zl[i] * r.rl[i]) / it.wl[i];
                }
                if has_hi[i] {
                    coef -= (target_u[i] + it.zu[i] * r.ru[i]) / it.wu[i];
                }
                if coef != 0.0 {
                    rows[i].add_transpose_to(coef, rx.as_mut_slice());
                }
            }
            let ry: Vec<f64> = r.re.iter().map(|v| -v).collect();
            let (dx, dy) = newton.solve(rows, &eq, &rx, &ry);
            let mut dwl = vec![0.0; m];
            let mut dzl = vec![0.0; m];
            let mut dwu = vec![0.0; m];
            let mut dzu = vec![0.0; m];
            for i in 0..m {
                if !(has_lo[i] || has_hi[i]) {
                    continue;
                }
                let adx = rows[i].dot(dx.as_slice());
                if has_lo[i] {
                    dwl[i] = adx + r.rl[i];
                    dzl[i] = (target_l[i] - it.zl[i] * dwl[i]) / it.wl[i];
                }
                if has_hi[i] {
                    dwu[i] = -r.ru[i] - adx;
                    dzu[i] = (target_u[i] - it.zu[i] * dwu[i]) / it.wu[i];
                }
            }
            (dx, dy, dwl, dzl, dwu, dzu)
        };

        let max_step = |dwl: &[f64], dzl: &[f64], dwu: &[f64], dzu: &[f64]| {
            let mut a = 1.0f64;
            for i in 0..m {
                if has_lo[i] {
                    if dwl[i] < 0.0 {
                        a = a.min(-it.wl[i] / dwl[i]);
                    }
                    if dzl[i] < 0.0 {
                        a = a.min(-it.zl[i] / dzl[i]);
                    }
                }
                if has_hi[i] {
                    if dwu[i] < 0.0 {
                        a = a.min(-it.wu[i] / dwu[i]);
                    }
                    if dzu[i] < 0.0 {
                        a = a.min(-it.zu[i] / dzu[i]);
                    }
                }
            }
            a
        };

        // predictor
        let tl: Vec<f64> = (0..m)
            .map(|i| if has_lo[i] { -it.wl[i] * it.zl[i] } else { 0.0 })
            .collect();
        let tu: Vec<f64> = (0..m)
            .map(|i| if has_hi[i] { -it.wu[i] * it.zu[i] } else { 0.0 })
            .collect();
        let (_, _, awl, azl, awu, azu) = direction(&tl, &tu);
        let a_aff = max_step(&awl, &azl, &awu, &azu);
        let mut mu_aff = 0.0;
        for i in 0..m {
            if has_lo[i] {
                mu_aff += (it.wl[i] + a_aff * awl[i]) * (it.zl[i] + a_aff * azl[i]);
            }
            if has_hi[i] {
                mu_aff += (it.wu[i] + a_aff * awu[i]) * (it.zu[i] + a_aff * azu[i]);
            }
        }
        let mu_aff = if n_compl > 0 { mu_aff / n_compl as f64 } else { 0.0 };
        let sigma = if r.mu > 0.0 {
            (mu_aff / r.mu).powi(3).clamp(0.0, 1.0)
        } else {
            0.0
        };

        // corrector
        let target = sigma * r.mu;
        let tl: Vec<f64> = (0..m)
            .map(|i| {
                if has_lo[i] {
                    target - it.wl[i] * it.zl[i] - awl[i] * azl[i]
                } else {
                    0.0
                }
            })
            .collect();
        let tu: Vec<f64> = (0..m)
            .map(|i| {
                if has_hi[i] {
                    target - it.wu[i] * it.zu[i] - awu[i] * azu[i]
                } else {
                    0.0
                }
            })
            .collect();
        let (dx, dy, dwl, dzl, dwu, dzu) = direction(&tl, &tu);
        let mut alpha = (STEP_TO_BOUNDARY * max_step(&dwl, &dzl, &dwu, &dzu)).min(1.0);
        // stay in a wide neighborhood of the central path: w_i z_i >= NEIGHBORHOOD mu
        let products = |a: f64| {
            let mut min = f64::INFINITY;
            let mut sum = 0.0;
            for i in 0..m {
                if has_lo[i] {
                    let p = (it.wl[i] + a * dwl[i]) * (it.zl[i] + a * dzl[i]);
                    min = min.min(p);
                    sum += p;
                }
                if has_hi[i] {
                    let p = (it.wu[i] + a * dwu[i]) * (it.zu[i] + a * dzu[i]);
                    min = min.min(p);
                    sum += p;
                }
            }
            (min, sum / n_compl.max(1) as f64)
        };
        for _ in 0..30 {
            let (min, mean) = products(alpha);
            if min >= NEIGHBORHOOD * mean {
                break;
            }
            alpha *= 0.8;
        }

        it.x.axpy(alpha, &dx, 1.0);
        for (y, d) in it.y.iter_mut().zip(&dy) {
            *y += alpha * d;
        }
        for i in 0..m {
            if has_lo[i] {
                it.wl[i] += alpha * dwl[i];
                it.zl[i] += alpha * dzl[i];
            }
            if has_hi[i] {
                it.wu[i] += alpha * dwu[i];
                it.zu[i] += alpha * dzu[i];
            }
        }
        iterations = iter + 1;
    }

    if status != QpStatus::Optimal {
        if let Some((_, b)) = best {
            it = b;
        }
    }
    let mut duals: Vec<(f64, f64)> = (0..m).map(|i| (it.zl[i], it.zu[i])).collect();
    for (&i, &y) in eq.iter().zip(&it.y) {
        duals[i] = if y >= 0.0 { (0.0, y) } else { (-y, 0.0) };
    }
    let x = it.x.as_slice().to_vec();
    let residual = problem.kkt_residual(&x, &duals);
    QpSolution {
        x,
        duals,
        status,
        iterations,
        residual,
        polished: false,
    }
}

/// Side a row is held at in the polish.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Lower,
    Upper,
    Equal,
}

/// Re-solves the equality-constrained QP on the active set identified by the
/// interior point, then corrects the set (dropping rows whose multiplier has
/// the wrong sign, adding violated rows) for a few rounds. Returns the best
/// point found, or `None` if no active set could be factored.
fn polish(problem: &QpProblem, sol: &QpSolution) -> Option<QpSolution> {
    let m = problem.rows.len();
    let mut active: Vec<Option<Side>> = (0..m)
        .map(|i| {
            if is_equality(problem.lo[i], problem.hi[i]) {
                return Some(Side::Equal);
            }
            let (zl, zu) = sol.duals[i];
            let v = problem.rows[i].dot(&sol.x);
            if problem.lo[i].is_finite() && zl > (v - problem.lo[i]) {
                Some(Side::Lower)
            } else if problem.hi[i].is_finite() && zu > (problem.hi[i] - v) {
                Some(Side::Upper)
            } else {
                None
            }
        })
        .collect();
    let mut best: Option<QpSolution> = None;
    let mut x_start = sol.x.clone();
    for _ in 0..POLISH_ROUNDS {
        let Some(cand) = solve_on_active_set(problem, &active, &x_start, sol.iterations) else {
            break;
        };
        let scale = 1e-12 * (1.0 + inf_norm(&cand.x));
        let mut changed = false;
        for i in 0..m {
            let v = problem.rows[i].dot(&cand.x);
            match active[i] {
                Some(Side::Lower) if cand.duals[i].0 < -scale => {
                    active[i] = None;
                    changed = true;
                }
                Some(Side::Upper) if cand.duals[i].1 < -scale => {
                    active[i] = None;
                    changed = true;
                }
                None if v < problem.lo[i] - scale => {
                    active[i] = Some(Side::Lower);
                    changed = true;
                }
                None if v > problem.hi[i] + scale => {
                    active[i] = Some(Side::Upper);
                    changed = true;
                }
                _ => {}
            }
        }
        x_start = cand.x.clone();
        if best.as_ref().is_none_or(|b| cand.residual < b.residual) {
            best = Some(cand);
        }
        if !changed {
            break;
        }
    }
    best
}

fn solve_on_active_set(
    problem: &QpProblem,
    active: &[Option<Side>],
    x_start: &[f64],
    iterations: usize,
) -> Option<QpSolution> {
    let n = problem.dim();
    let m = problem.rows.len();
    let idx: Vec<usize> = (0..m).filter(|&i| active[i].is_some()).collect();
    let target = |i: usize| match active[i] {
        Some(Side::Lower) => problem.lo[i],
        Some(Side::Upper) => problem.hi[i],
        _ => 0.5 * (problem.lo[i] + problem.hi[i]),
    };

    // regularized factorization + iterative refinement on the exact KKT system
    let scale = problem.hessian.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let delta = 1e-9 * scale;
    let mut k = problem.hessian.clone();
    for i in 0..n {
        k[(i, i)] += delta;
    }
    let chol = k.cholesky()?;
    let p = idx.len();
    let kinv_at: Vec<DVector<f64>> = idx
        .iter()
        .map(|&i| {
            let mut e = DVector::zeros(n);
            problem.rows[i].add_transpose_to(1.0, e.as_mut_slice());
            chol.solve(&e)
        })
        .collect();
    let mut s = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            s[(a, b)] = problem.rows[idx[a]].dot(kinv_at[b].as_slice());
        }
    }
    // duplicated active rows make S singular; a relative shift keeps it factorable
    let s_scale = s.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shift = delta.max(1e-12 * s_scale);
    for a in 0..p {
        s[(a, a)] += shift;
    }
    let s = ((&s + s.transpose()) * 0.5).cholesky()?;
    let solve_reg = |rx: &DVector<f64>, ry: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        // [K A'; A -shift I][x; y] = [rx; ry]
        let kr = chol.solve(rx);
        let rhs = DVector::from_iterator(p, (0..p).map(|a| problem.rows[idx[a]].dot(kr.as_slice()) - ry[a]));
        let y = s.solve(&rhs);
        let mut x = kr;
        for (col, &ya) in kinv_at.iter().zip(y.iter()) {
            x.axpy(-ya, col, 1.0);
        }
        (x, y)
    };
    let mut x = DVector::from_column_slice(x_start);
    let mut y = DVector::<f64>::zeros(p);
    let b = DVector::from_iterator(p, idx.iter().map(|&i| target(i)));
    for _ in 0..REFINEMENT_STEPS {
        // residual of the unregularized system [Q A'; A 0]
        let mut r1 = -(&problem.hessian * &x + &problem.linear);
        for (a, &i) in idx.iter().enumerate() {
            problem.rows[i].add_transpose_to(-y[a], r1.as_mut_slice());
        }
        let r2 = DVector::from_iterator(p, (0..p).map(|a| b[a] - problem.rows[idx[a]].dot(x.as_slice())));
        if inf_norm(r1.as_slice()).max(inf_norm(r2.as_slice())) < 1e-15 * scale {
            break;
        }
        let (dx, dy) = solve_reg(&r1, &r2);
        x += dx;
        y += dy;
    }
    let mut duals = vec![(0.0, 0.0); m];
    for (a, &i) in idx.iter().enumerate() {
        let ya = y[a];
        duals[i] = match active[i] {
            Some(Side::Upper) => (0.0, ya),
            Some(Side::Lower) => (-ya, 0.0),
            _ if ya >= 0.0 => (0.0, ya),
            _ => (-ya, 0.0),
        };
    }
    let x = x.as_slice().to_vec();
    let residual = problem.kkt_residual(&x, &duals);
    Some(QpSolution {
        x,
        duals,
        status: QpStatus::Optimal,
        iterations,
        residual,
        polished: true,
    })
}

/// Smallest `t >= 0` such that every row holds within `t`; solved as an
/// elastic QP with a tiny proximal term.
pub fn min_max_violation(problem: &QpProblem, settings: &QpSettings) -> f64 {
    let n = problem.dim();
    let mut hessian = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        hessian[(i, i)] = 1e-8;
    }
    let mut linear = DVector::zeros(n + 1);
    linear[n] = 1.0;
    let mut rows = Vec::with_capacity(2 * problem.rows.len() + 1);
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for (i, r) in problem.rows.iter().enumerate() {
        if problem.lo[i].is_finite() {
            let mut e = r.entries.clone();
            e.push((n, 1.0));
            rows.push(SparseRow::new(e));
            lo.push(problem.lo[i]);
            hi.push(f64::INFINITY);
        }
        if problem.hi[i].is_finite() {
            let mut e = r.entries.clone();
            e.push((n, -1.0));
            rows.push(SparseRow::new(e));
            lo.push(f64::NEG_INFINITY);
            hi.push(problem.hi[i]);
        }
    }
    rows.push(SparseRow::new(vec![(n, 1.0)]));
    lo.push(0.0);
    hi.push(f64::INFINITY);
    let elastic = QpProblem {
        hessian,
        linear,
        rows,
        lo,
        hi,
    };
    let sol = interior_point(
        &elastic,
        &QpSettings {
            tol: 1e-10,
            max_iter: settings.max_iter.max(80),
            x_init: None,
            initial_slack: 1.0,
            polish: false,
        },
    );
    // the achieved violation of the primal point is a valid upper bound
    problem
        .max_violation(&sol.x[..n])
        .min(sol.x[n].max(0.0).max(problem.max_violation(&sol.x[..n])))
}
