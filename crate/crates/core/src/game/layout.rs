use std::ops::Range;

use crate::error::{Error, Result};

/// Which physical quantity a coordinate of the stacked decision vector holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    /// Consumption `e_k`, k in 0..N.
    Consumption,
    /// Charging input `s_k`, k in 0..N.
    Charge,
    /// Energy-shift state `zeta_k`, k in 1..=N.
    Shift,
    /// State of charge `q_k`, k in 1..=N.
    Soc,
}

/// Flat index map of the stacked decision vector.
///
/// Per prosumer the block is `(e_0, s_0, ..., e_{N-1}, s_{N-1}, zeta_1, q_1, ..., zeta_N, q_N)`,
/// prosumers concatenated in fleet order. Initial states are data, not decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    prosumers: usize,
    horizon: usize,
}

impl Layout {
    pub fn new(prosumers: usize, horizon: usize) -> Result<Self> {
        if prosumers == 0 {
            return Err(Error::param("M", "at least one active prosumer is required"));
        }
        if horizon == 0 {
            return Err(Error::param("N", "horizon must be at least one step"));
        }
        Ok(Layout { prosumers, horizon })
    }

    pub fn prosumers(&self) -> usize {
        self.prosumers
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        4 * self.prosumers * self.horizon
    }

    /// Length of the input-only (condensed) vector.
    pub fn input_dim(&self) -> usize {
        2 * self.prosumers * self.horizon
    }

    pub fn block(&self, v: usize) -> Range<usize> {
        let w = 4 * self.horizon;
        v * w..(v + 1) * w
    }

    pub fn e(&self, v: usize, k: usize) -> usize {
        debug_assert!(v < self.prosumers && k < self.horizon);
        4 * self.horizon * v + 2 * k
    }

    pub fn s(&self, v: usize, k: usize) -> usize {
        self.e(v, k) + 1
    }

    /// Index of `zeta_k` for k in 1..=N.
    pub fn zeta(&self, v: usize, k: usize) -> usize {
        debug_assert!(v < self.prosumers && k >= 1 && k <= self.horizon);
        4 * self.horizon * v + 2 * self.horizon + 2 * (k - 1)
    }

    pub fn q(&self, v: usize, k: usize) -> usize {
        self.zeta(v, k) + 1
    }

    /// Condensed index of `e_k` for prosumer `v`.
    pub fn input_e(&self, v: usize, k: usize) -> usize {
        2 * self.horizon * v + 2 * k
    }

    pub fn input_s(&self, v: usize, k: usize) -> usize {
        self.input_e(v, k) + 1
    }

    /// Inverse of the index maps: `(prosumer, variable, step)`.
    pub fn decode(&self, index: usize) -> (usize, Variable, usize) {
        assert!(index < self.dim(), "index {index} out of range");
        let w = 4 * self.horizon;
        let v = index / w;
        let r = index % w;
        if r < 2 * self.horizon {
            let var = if r.is_multiple_of(2) {
                Variable::Consumption
            } else {
                Variable::Charge
            };
            (v, var, r / 2)
        } else {
            let r = r - 2 * self.horizon;
            let var = if r.is_multiple_of(2) {
                Variable::Shift
            } else {
                Variable::Soc
            };
            (v, var, r / 2 + 1)
        }
    }

    pub fn index(&self, v: usize, var: Variable, k: usize) -> usize {
        match var {
            Variable::Consumption => self.e(v, k),
            Variable::Charge => self.s(v, k),
            Variable::Shift => self.zeta(v, k),
            Variable::Soc => self.q(v, k),
        }
    }

    /// Full-vector indices of the input coordinates, in condensed order.
    pub fn input_indices(&self) -> Vec<usize> {
        (0..self.prosumers)
            .flat_map(|v| (0..self.horizon).flat_map(move |k| [self.e(v, k), self.s(v, k)]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_layout_order() {
        let l = Layout::new(1, 1).unwrap();
        assert_eq!(l.dim(), 4);
        assert_eq!((l.e(0, 0), l.s(0, 0), l.zeta(0, 1), l.q(0, 1)), (0, 1, 2, 3));
    }

    #[test]
    fn second_prosumer_offset() {
        let l = Layout::new(2, 3).unwrap();
        assert_eq!(l.dim(), 24);
        assert_eq!(l.e(1, 0), 12);
    }

    #[test]
    fn desk_scale_dimension() {
        assert_eq!(Layout::new(10, 24).unwrap().dim(), 960);
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(Layout::new(0, 3).is_err());
        assert!(Layout::new(3, 0).is_err());
    }

    #[test]
    fn index_maps_are_bijective() {
        for (m, n) in [(1, 1), (2, 3), (3, 5), (4, 1)] {
            let l = Layout::new(m, n).unwrap();
            let mut hit = vec![false; l.dim()];
            for v in 0..m {
                for k in 0..n {
                    for idx in [l.e(v, k), l.s(v, k), l.zeta(v, k + 1), l.q(v, k + 1)] {
                        assert!(!hit[idx]);
                        hit[idx] = true;
                    }
                }
            }
            assert!(hit.iter().all(|&h| h));
            for i in 0..l.dim() {
                let (v, var, k) = l.decode(i);
                assert_eq!(l.index(v, var, k), i);
            }
        }
    }
}
