//! Dense-box dynamic programming over `(state, z)` with `z` in a lattice.
//!
//! Each state carries a dense box of masses; after every step entries below
//! [`PRUNE_THRESHOLD`] in absolute value are dropped (their total is tracked)
//! and the box is trimmed to the bounding box of the surviving support.

use crate::error::{Error, Result};

pub const PRUNE_THRESHOLD: f64 = 1e-16;
/// Default cap on `states x cells`.
pub const DEFAULT_BUDGET: u64 = 20_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLaw {
    states: usize,
    dim: usize,
    lo: Vec<i64>,
    shape: Vec<usize>,
    mass: Vec<f64>,
    pruned: f64,
}

/// Per-transition increments and weights for one DP step, row-major in `(a, b)`.
pub struct StepKernel<'a> {
    /// `P(a,b)`; zero marks a forbidden transition.
    pub p: &'a [f64],
    /// `dim` integers per transition.
    pub increments: &'a [i64],
    /// Optional extra weight per transition.
    pub weights: Option<&'a [f64]>,
}

impl LatticeLaw {
    /// Mass `init[a]` at `z = 0` in state `a`.
    pub fn start(init: &[f64], dim: usize) -> Self {
        LatticeLaw {
            states: init.len(),
            dim,
            lo: vec![0; dim],
            shape: vec![1; dim],
            mass: init.to_vec(),
            pruned: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn cells(&self) -> usize {
        self.shape.iter().product()
    }

    /// Lower corner of the stored box.
    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total absolute mass discarded by pruning so far.
    pub fn pruned_mass(&self) -> f64 {
        self.pruned
    }

    pub fn total_mass(&self) -> f64 {
        crate::par::pairwise_sum(&self.mass)
    }

    fn strides(shape: &[usize]) -> Vec<usize> {
        let mut s = vec![1; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * shape[i + 1];
        }
        s
    }

    /// Coordinates of the cell with linear index `idx`.
    pub fn coords(&self, idx: usize) -> Vec<i64> {
        let strides = Self::strides(&self.shape);
        let mut rem = idx;
        strides
            .iter()
            .zip(&self.lo)
            .map(|(&s, &lo)| {
                let q = rem / s;
                rem %= s;
                lo + q as i64
            })
            .collect()
    }

    fn index_of(&self, z: &[i64]) -> Option<usize> {
        let strides = Self::strides(&self.shape);
        let mut idx = 0;
        for i in 0..self.dim {
            let off = z[i] - self.lo[i];
            if off < 0 || off as usize >= self.shape[i] {
                return None;
            }
            idx += off as usize * strides[i];
        }
        Some(idx)
    }

    /// Mass in state `s` at lattice point `z`.
    pub fn mass_at(&self, s: usize, z: &[i64]) -> f64 {
        self.index_of(z).map_or(0.0, |i| self.mass[s * self.cells() + i])
    }

    /// Per-state masses at `z`.
    pub fn restrict_at(&self, z: &[i64]) -> Vec<f64> {
        (0..self.states).map(|s| self.mass_at(s, z)).collect()
    }

    /// Mass at `z` summed over states.
    pub fn marginal_at(&self, z: &[i64]) -> f64 {
        self.restrict_at(z).iter().sum()
    }

    /// `sum_s g(s) mass(s, z)` for every cell of the box.
    pub fn contract(&self, g: &[f64]) -> Vec<f64> {
        let cells = self.cells();
        let mut out = vec![0.0; cells];
        for (s, &w) in g.iter().enumerate() {
            if w != 0.0 {
                for (o, m) in out.iter_mut().zip(&self.mass[s * cells..(s + 1) * cells]) {
                    *o += w * m;
                }
            }
        }
        out
    }

    /// Marginal over end states.
    pub fn marginal(&self) -> Vec<f64> {
        self.contract(&vec![1.0; self.states])
    }

    /// Per-state total mass.
    pub fn state_totals(&self) -> Vec<f64> {
        let cells = self.cells();
        (0..self.states).map(|s| crate::par::pairwise_sum(&self.mass[s * cells..(s + 1) * cells])).collect()
    }

    /// `mass'(b, z + v(a,b)) += mass(a, z) P(a,b) w(a,b)`.
    pub fn step(&mut self, k: &StepKernel<'_>, budget: u64) -> Result<()> {
        let n = self.states;
        let d = self.dim;
        let mut vmin = vec![i64::MAX; d];
        let mut vmax = vec![i64::MIN; d];
        for i in 0..n * n {
            if k.p[i] != 0.0 {
                for j in 0..d {
                    vmin[j] = vmin[j].min(k.increments[i * d + j]);
                    vmax[j] = vmax[j].max(k.increments[i * d + j]);
                }
            }
        }
        let new_shape: Vec<usize> =
            (0..d).map(|j| self.shape[j] + (vmax[j] - vmin[j]) as usize).collect();
        let new_cells: usize = new_shape.iter().product();
        let required = (new_cells as u64).saturating_mul(n as u64);
        if required > budget {
            return Err(Error::BudgetExceeded { required, budget });
        }
        let new_strides = Self::strides(&new_shape);
        let old_cells = self.cells();
        let old_strides = Self::strides(&self.shape);
        // old linear index -> new linear index of the same coordinate shifted by -vmin
        let base: Vec<usize> = (0..old_cells)
            .map(|c| {
                let mut rem = c;
                let mut idx = 0;
                for j in 0..d {
                    let q = rem / old_strides[j];
                    rem %= old_strides[j];
                    idx += q * new_strides[j];
                }
                idx
            })
            .collect();
        let offsets: Vec<usize> = (0..n * n)
            .map(|i| (0..d).map(|j| (k.increments[i * d + j] - vmin[j]) as usize * new_strides[j]).sum())
            .collect();
        let mut next = vec![0.0; n * new_cells];
        for a in 0..n {
            let src = &self.mass[a * old_cells..(a + 1) * old_cells];
            for b in 0..n {
                let i = a * n + b;
                let mut w = k.p[i];
                if w == 0.0 {
                    continue;
                }
                if let Some(ws) = k.weights {
                    w *= ws[i];
                    if w == 0.0 {
                        continue;
                    }
                }
                let dst = &mut next[b * new_cells..(b + 1) * new_cells];
                let off = offsets[i];
                for (c, &m) in src.iter().enumerate() {
                    if m != 0.0 {
                        dst[base[c] + off] += m * w;
                    }
                }
            }
        }
        for j in 0..d {
            self.lo[j] += vmin[j];
        }
        self.shape = new_shape;
        self.mass = next;
        self.prune_and_trim();
        Ok(())
    }

    fn prune_and_trim(&mut self) {
        let d = self.dim;
        let cells = self.cells();
        let strides = Self::strides(&self.shape);
        let mut lo_idx = self.shape.clone();
        let mut hi_idx = vec![0usize; d];
        let mut any = false;
        for s in 0..self.states {
            for c in 0..cells {
                let m = &mut self.mass[s * cells + c];
                if *m == 0.0 {
                    continue;
                }
                if m.abs() < PRUNE_THRESHOLD {
                    self.pruned += m.abs();
                    *m = 0.0;
                    continue;
                }
                any = true;
                let mut rem = c;
                for j in 0..d {
                    let q = rem / strides[j];
                    rem %= strides[j];
                    lo_idx[j] = lo_idx[j].min(q);
                    hi_idx[j] = hi_idx[j].max(q);
                }
            }
        }
        if !any {
            self.shape = vec![1; d];
            self.mass = vec![0.0; self.states];
            return;
        }
        let new_shape: Vec<usize> = (0..d).map(|j| hi_idx[j] - lo_idx[j] + 1).collect();
        if new_shape == self.shape {
            return;
        }
        let new_cells: usize = new_shape.iter().product();
        let new_strides = Self::strides(&new_shape);
        let mut packed = vec![0.0; self.states * new_cells];
        for nc in 0..new_cells {
            let mut rem = nc;
            let mut old = 0;
            for j in 0..d {
                let q = rem / new_strides[j];
                rem %= new_strides[j];
                old += (q + lo_idx[j]) * strides[j];
            }
            for s in 0..self.states {
                packed[s * new_cells + nc] = self.mass[s * cells + old];
            }
        }
        for j in 0..d {
            self.lo[j] += lo_idx[j] as i64;
        }
        self.shape = new_shape;
        self.mass = packed;
    }

    /// Nonzero marginal entries as `(z, mass)` in box order.
    pub fn support(&self) -> Vec<(Vec<i64>, f64)> {
        self.marginal()
            .into_iter()
            .enumerate()
            .filter(|(_, m)| *m != 0.0)
            .map(|(i, m)| (self.coords(i), m))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_walk() {
        let p = [0.5, 0.5, 0.5, 0.5];
        let inc = [1, -1, 1, -1];
        let mut law = LatticeLaw::start(&[0.5, 0.5], 1);
        for _ in 0..4 {
            law.step(&StepKernel { p: &p, increments: &inc, weights: None }, DEFAULT_BUDGET).unwrap();
        }
        let support = law.support();
        let expected = [(-4, 1.0), (-2, 4.0), (0, 6.0), (2, 4.0), (4, 1.0)];
        assert_eq!(support.len(), 5);
        for ((z, m), (ez, em)) in support.iter().zip(expected) {
            assert_eq!(z[0], ez);
            assert!((m - em / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let p = [1.0];
        let inc = [0, 1];
        let mut law = LatticeLaw::start(&[1.0], 2);
        let k = StepKernel { p: &p, increments: &inc, weights: None };
        law.step(&k, 10).unwrap();
        assert_eq!(law.cells(), 1);
        let p2 = [0.5, 0.5, 0.5, 0.5];
        let inc2 = [0, 0, 5, 5, 0, 0, 5, 5];
        let mut law = LatticeLaw::start(&[0.5, 0.5], 2);
        let err = law.step(&StepKernel { p: &p2, increments: &inc2, weights: None }, 10).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { required: 72, budget: 10 }));
    }

    #[test]
    fn weighted_step_and_restrict() {
        let p = [0.5, 0.5, 0.5, 0.5];
        let inc = [0, 1, 0, 1];
        let w = [2.0, 0.0, 2.0, 0.0];
        let mut law = LatticeLaw::start(&[0.5, 0.5], 1);
        law.step(&StepKernel { p: &p, increments: &inc, weights: Some(&w) }, DEFAULT_BUDGET).unwrap();
        assert_eq!(law.restrict_at(&[0]), vec![1.0, 0.0]);
        assert_eq!(law.restrict_at(&[1]), vec![0.0, 0.0]);
    }
}
