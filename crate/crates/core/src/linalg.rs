//! Small dense/sparse helpers shared by the assembly and the solvers.

use nalgebra::{DMatrix, DVector};

/// A sparse row vector as `(column, coefficient)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
}

impl SparseRow {
    pub fn new(entries: Vec<(usize, f64)>) -> Self {
        SparseRow { entries }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// `y += scale * row^T`
    pub fn add_transpose_to(&self, scale: f64, y: &mut [f64]) {
        for &(j, a) in &self.entries {
            y[j] += scale * a;
        }
    }

    /// Merges duplicate columns and drops exact zeros.
    pub fn compact(mut self) -> Self {
        self.entries.sort_by_key(|&(j, _)| j);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.entries.len());
        for (j, a) in self.entries {
            match out.last_mut() {
                Some((lj, la)) if *lj == j => *la += a,
                _ => out.push((j, a)),
            }
        }
        out.retain(|&(_, a)| a != 0.0);
        SparseRow { entries: out }
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, a)| a * a).sum()
    }
}

pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest singular value of `op` (given as `x -> A x` and `y -> A^T y`) by
/// power iteration on `A^T A`, from a fixed deterministic start.
pub fn spectral_norm<F, G>(cols: usize, iterations: usize, apply: F, apply_t: G) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if cols == 0 {
        return 0.0;
    }
    let mut x: Vec<f64> = (0..cols).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let mut sigma = 0.0;
    for _ in 0..iterations {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let ax = apply(&x);
        sigma = ax.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = apply_t(&ax);
    }
    sigma
}

/// Spectral norm of a dense matrix by power iteration.
pub fn dense_spectral_norm(a: &DMatrix<f64>, iterations: usize) -> f64 {
    spectral_norm(
        a.ncols(),
        iterations,
        |x| (a * DVector::from_column_slice(x)).as_slice().to_vec(),
        |y| (a.tr_mul(&DVector::from_column_slice(y))).as_slice().to_vec(),
    )
}

/// Spectral norm of a stack of sparse rows by power iteration.
pub fn rows_spectral_norm(rows: &[SparseRow], cols: usize, iterations: usize) -> f64 {
    spectral_norm(
        cols,
        iterations,
        |x| rows.iter().map(|r| r.dot(x)).collect(),
        |y| {
            let mut out = vec![0.0; cols];
            for (r, &yi) in rows.iter().zip(y) {
                r.add_transpose_to(yi, &mut out);
            }
            out
        },
    )
}
