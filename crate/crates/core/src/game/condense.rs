use nalgebra::{DMatrix, DVector};

use super::{GameQP, RowKind};
use crate::linalg::SparseRow;

/// `constant + sum coeff * u[index]`
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineExpr {
    pub fn eval(&self, u: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * u[j]).sum::<f64>()
    }
}

/// The game over inputs only: `z = T u + t0` with states given by the dynamics.
///
/// `hessian = T' H T`, `linear = T' (H t0 + f)`, and every row of the game is
/// mapped to a row over `u` with shifted bounds (same order as `GameQP::rows`).
#[derive(Debug, Clone)]
pub struct CondensedGame {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub rows: Vec<SparseRow>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub kinds: Vec<RowKind>,
    /// Affine expression of every full coordinate in terms of `u`.
    pub map: Vec<AffineExpr>,
}

impl CondensedGame {
    pub(super) fn new(game: &GameQP) -> Self {
        let l = &game.layout;
        let n = l.horizon();
        let dim = l.dim();
        let nu = l.input_dim();

        let mut map = vec![AffineExpr::default(); dim];
        for (v, p) in game.params.iter().enumerate() {
            for k in 0..n {
                map[l.e(v, k)] = AffineExpr {
                    constant: 0.0,
                    terms: vec![(l.input_e(v, k), 1.0)],
                };
                map[l.s(v, k)] = AffineExpr {
                    constant: 0.0,
                    terms: vec![(l.input_s(v, k), 1.0)],
                };
            }
            let mut zeta = AffineExpr {
                constant: game.x0[v].zeta,
                terms: vec![],
            };
            let mut q = AffineExpr {
                constant: game.x0[v].q,
                terms: vec![],
            };
            for k in 1..=n {
                zeta.constant -= game.window.steps[k - 1].e_ref[v];
                zeta.terms.push((l.input_e(v, k - 1), 1.0));
                q.constant *= p.battery.alpha;
                q.terms.iter_mut().for_each(|t| t.1 *= p.battery.alpha);
                q.terms.push((l.input_s(v, k - 1), p.battery.beta));
                map[l.zeta(v, k)] = zeta.clone();
                map[l.q(v, k)] = q.clone();
            }
        }

        let mut hessian = DMatrix::zeros(nu, nu);
        for j in 0..dim {
            for i in 0..dim {
                let h = game.hessian[(i, j)];
                if h == 0.0 {
                    continue;
                }
                for &(a, ta) in &map[i].terms {
                    for &(b, tb) in &map[j].terms {
                        hessian[(a, b)] += h * ta * tb;
                    }
                }
            }
        }

        let t0 = DVector::from_iterator(dim, map.iter().map(|m| m.constant));
        let g = &game.hessian * &t0 + &game.offset;
        let mut linear = DVector::zeros(nu);
        for (i, m) in map.iter().enumerate() {
            for &(a, c) in &m.terms {
                linear[a] += c * g[i];
            }
        }

        let mut rows = Vec::with_capacity(game.rows.len());
        let mut lo = Vec::with_capacity(game.rows.len());
        let mut hi = Vec::with_capacity(game.rows.len());
        let mut kinds = Vec::with_capacity(game.rows.len());
        for r in &game.rows {
            let mut entries = Vec::new();
            let mut shift = 0.0;
            for &(i, c) in &r.row.entries {
                shift += c * map[i].constant;
                entries.extend(map[i].terms.iter().map(|&(a, t)| (a, c * t)));
            }
            rows.push(SparseRow::new(entries).compact());
            lo.push(r.lo - shift);
            hi.push(r.hi - shift);
            kinds.push(r.kind);
        }

        CondensedGame {
            hessian,
            linear,
            rows,
            lo,
            hi,
            kinds,
            map,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hessian.nrows()
    }

    /// `z = T u + t0`.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        self.map.iter().map(|m| m.eval(u)).collect()
    }

    /// Condensed pseudo-gradient `T' F(T u + t0)`.
    pub fn gradient(&self, u: &[f64]) -> DVector<f64> {
        &self.hessian * DVector::from_column_slice(u) + &self.linear
    }

    /// `T' y` for a full-space vector `y`.
    pub fn pull_back(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim()];
        for (m, &yi) in self.map.iter().zip(y) {
            for &(a, c) in &m.terms {
                out[a] += c * yi;
            }
        }
        out
    }
}
