//! Locally constant cocycles `tau(x) = v(x_0, x_1)`, their drift, aperiodicity
//! lattice and Green-Kubo covariance.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sft::{GibbsMarkovMeasure, SubshiftSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CocycleMode {
    Lattice,
    Real,
}

/// Depth-2 cocycle with values in `Z^d` (lattice mode) or `R^d` (real mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleSpec {
    dim: usize,
    alphabet: usize,
    mode: CocycleMode,
    real: Vec<f64>,
    int: Vec<i64>,
}

impl CocycleSpec {
    /// Lattice cocycle from `f(a, b)`; forbidden transitions get zero.
    pub fn lattice(spec: &SubshiftSpec, dim: usize, f: impl Fn(usize, usize) -> Vec<i64>) -> Result<Self> {
        check_dim(dim)?;
        let n = spec.alphabet_size();
        let mut int = vec![0i64; n * n * dim];
        for (a, b) in spec.edges() {
            let v = f(a, b);
            if v.len() != dim {
                return Err(Error::Invalid(format!("cocycle value at ({a},{b}) has wrong dimension")));
            }
            int[(a * n + b) * dim..(a * n + b + 1) * dim].copy_from_slice(&v);
        }
        let real = int.iter().map(|&x| x as f64).collect();
        Ok(CocycleSpec { dim, alphabet: n, mode: CocycleMode::Lattice, real, int })
    }

    /// One-dimensional lattice cocycle from an `A x A` table.
    pub fn lattice_1d(spec: &SubshiftSpec, table: &[Vec<i64>]) -> Result<Self> {
        check_table(spec, table.len(), table.iter().map(Vec::len))?;
        Self::lattice(spec, 1, |a, b| vec![table[a][b]])
    }

    pub fn real(spec: &SubshiftSpec, dim: usize, f: impl Fn(usize, usize) -> Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let n = spec.alphabet_size();
        let mut real = vec![0.0; n * n * dim];
        for (a, b) in spec.edges() {
            let v = f(a, b);
            if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("bad cocycle value at ({a},{b})")));
            }
            real[(a * n + b) * dim..(a * n + b + 1) * dim].copy_from_slice(&v);
        }
        Ok(CocycleSpec { dim, alphabet: n, mode: CocycleMode::Real, real, int: Vec::new() })
    }

    pub fn zero(spec: &SubshiftSpec, dim: usize) -> Self {
        Self::lattice(spec, dim, |_, _| vec![0; dim]).expect("valid dimension")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn mode(&self) -> CocycleMode {
        self.mode
    }

    pub fn is_lattice(&self) -> bool {
        self.mode == CocycleMode::Lattice
    }

    #[inline]
    pub fn value(&self, a: usize, b: usize) -> &[f64] {
        let i = (a * self.alphabet + b) * self.dim;
        &self.real[i..i + self.dim]
    }

    /// Integer value; panics in real mode.
    #[inline]
    pub fn lattice_value(&self, a: usize, b: usize) -> &[i64] {
        let i = (a * self.alphabet + b) * self.dim;
        &self.int[i..i + self.dim]
    }

    pub(crate) fn require_lattice(&self) -> Result<()> {
        if self.is_lattice() {
            Ok(())
        } else {
            Err(Error::Unsupported("operation needs a lattice cocycle".into()))
        }
    }

    pub(crate) fn check_measure(&self, m: &GibbsMarkovMeasure) -> Result<()> {
        if m.alphabet_size() != self.alphabet {
            return Err(Error::Invalid("cocycle and measure alphabets differ".into()));
        }
        Ok(())
    }

    /// Largest Euclidean norm of a value on an allowed transition.
    pub fn max_norm(&self, spec: &SubshiftSpec) -> f64 {
        spec.edges()
            .map(|(a, b)| self.value(a, b).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Componentwise range of integer values over allowed transitions.
    pub fn lattice_range(&self, spec: &SubshiftSpec) -> (Vec<i64>, Vec<i64>) {
        let mut lo = vec![i64::MAX; self.dim];
        let mut hi = vec![i64::MIN; self.dim];
        for (a, b) in spec.edges() {
            for (i, &x) in self.lattice_value(a, b).iter().enumerate() {
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
            }
        }
        (lo, hi)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("cocycle dimension {dim}")))
    }
}

fn check_table(spec: &SubshiftSpec, rows: usize, cols: impl Iterator<Item = usize>) -> Result<()> {
    let n = spec.alphabet_size();
    if rows != n || cols.into_iter().any(|c| c != n) {
        return Err(Error::Invalid("cocycle table must be A x A".into()));
    }
    Ok(())
}

/// Mean displacement `mu(tau) = sum pi(a) P(a,b) v(a,b)`.
pub fn drift(m: &GibbsMarkovMeasure, c: &CocycleSpec) -> Result<Vec<f64>> {
    c.check_measure(m)?;
    let mut out = vec![0.0; c.dim];
    for (a, b) in m.spec().edges() {
        let w = m.pi()[a] * m.p(a, b);
        for (o, x) in out.iter_mut().zip(c.value(a, b)) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Asymptotic covariance `sum_n Cov(tau_0, tau_n)` of the centred cocycle.
///
/// With `g(a) = sum_b P(a,b) vbar(a,b)` and the fundamental matrix
/// `Z = (I - P + 1 pi)^{-1}`, the one-sided tail is
/// `C1 = sum_{a,b} pi(a)P(a,b) vbar(a,b) (Z g)(b)^T` and the result is
/// `C0 + C1 + C1^T`.
pub fn gk_covariance_tau(m: &GibbsMarkovMeasure, c: &CocycleSpec) -> Result<DMatrix<f64>> {
    let sigma = covariance_matrix(m, c)?;
    let eig = SymmetricEigen::new(sigma.clone());
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("dimension at least one");
    let scale = sigma.trace().abs().max(1.0);
    if lmin <= 1e-12 * scale {
        let direction = eig.eigenvectors.column(imin).iter().copied().collect();
        return Err(Error::DegenerateCovariance { direction, matrix: sigma.as_slice().to_vec() });
    }
    Ok(sigma)
}

/// Same as [`gk_covariance_tau`] without the positivity check.
pub fn covariance_matrix(m: &GibbsMarkovMeasure, c: &CocycleSpec) -> Result<DMatrix<f64>> {
    let mu = drift(m, c)?;
    let n = m.alphabet_size();
    let d = c.dim;
    let centred = |a: usize, b: usize| -> DVector<f64> {
        DVector::from_iterator(d, c.value(a, b).iter().zip(&mu).map(|(x, m)| x - m))
    };
    let mut fundamental = DMatrix::<f64>::identity(n, n);
    for a in 0..n {
        for b in 0..n {
            fundamental[(a, b)] += m.pi()[b] - m.p(a, b);
        }
    }
    let z = fundamental
        .try_inverse()
        .ok_or_else(|| Error::Invalid("fundamental matrix is singular".into()))?;
    let mut g = DMatrix::<f64>::zeros(n, d);
    for (a, b) in m.spec().edges() {
        let v = centred(a, b);
        for k in 0..d {
            g[(a, k)] += m.p(a, b) * v[k];
        }
    }
    let u = z * g;
    let mut c0 = DMatrix::<f64>::zeros(d, d);
    let mut c1 = DMatrix::<f64>::zeros(d, d);
    for (a, b) in m.spec().edges() {
        let w = m.pi()[a] * m.p(a, b);
        let v = centred(a, b);
        c0 += w * &v * v.transpose();
        c1 += w * &v * u.row(b);
    }
    let sigma = &c0 + &c1 + c1.transpose();
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Sublattice of `Z^d` generated by differences of equal-length closed-walk
/// sums (walk lengths up to `2A`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AperiodicityReport {
    /// Echelon basis of the generated subgroup.
    pub basis: Vec<Vec<i64>>,
    /// Index of the subgroup in `Z^d`, `None` if it has lower rank.
    pub index: Option<u64>,
}

impl AperiodicityReport {
    pub fn is_aperiodic(&self) -> bool {
        self.index == Some(1)
    }

    /// Covolume of the generated lattice, used as the LLT cell volume.
    pub fn cell_volume(&self) -> Option<f64> {
        self.index.map(|i| i as f64)
    }
}

/// Hard cap on distinct walk sums tracked per (start, end, length).
const WALK_SUM_CAP: usize = 200_000;

pub fn aperiodicity(spec: &SubshiftSpec, c: &CocycleSpec) -> Result<AperiodicityReport> {
    c.require_lattice()?;
    let n = spec.alphabet_size();
    let d = c.dim;
    let mut lattice = Echelon::new(d);
    let mut reference: Vec<Option<Vec<i64>>> = vec![None; 2 * n + 1];
    for start in 0..n {
        // reach[b] = sums of walks start -> b of the current length
        let mut reach: Vec<HashSet<Vec<i64>>> = vec![HashSet::new(); n];
        reach[start].insert(vec![0; d]);
        for len in 1..=2 * n {
            let mut next: Vec<HashSet<Vec<i64>>> = vec![HashSet::new(); n];
            for a in 0..n {
                for s in &reach[a] {
                    for b in (0..n).filter(|&b| spec.allowed(a, b)) {
                        let v: Vec<i64> = s.iter().zip(c.lattice_value(a, b)).map(|(x, y)| x + y).collect();
                        next[b].insert(v);
                    }
                }
            }
            if next.iter().map(HashSet::len).sum::<usize>() > WALK_SUM_CAP {
                return Err(Error::BudgetExceeded {
                    required: next.iter().map(|s| s.len() as u64).sum(),
                    budget: WALK_SUM_CAP as u64,
                });
            }
            reach = next;
            for s in &reach[start] {
                let first = reference[len].get_or_insert_with(|| s.clone());
                let diff: Vec<i128> = s.iter().zip(first.iter()).map(|(x, y)| (x - y) as i128).collect();
                lattice.insert(diff)?;
            }
        }
    }
    Ok(lattice.report())
}

/// Integer row echelon form maintained by extended-gcd row operations.
struct Echelon {
    dim: usize,
    rows: Vec<Vec<i128>>,
}

impl Echelon {
    fn new(dim: usize) -> Self {
        Echelon { dim, rows: Vec::new() }
    }

    fn pivot(row: &[i128]) -> Option<usize> {
        row.iter().position(|&x| x != 0)
    }

    fn insert(&mut self, mut v: Vec<i128>) -> Result<()> {
        loop {
            let Some(p) = Self::pivot(&v) else { return Ok(()) };
            match self.rows.iter().position(|r| Self::pivot(r) == Some(p)) {
                None => {
                    if v[p] < 0 {
                        v.iter_mut().for_each(|x| *x = -*x);
                    }
                    self.rows.push(v);
                    self.rows.sort_by_key(|r| Self::pivot(r));
                    self.reduce();
                    return Ok(());
                }
                Some(i) => {
                    let r = self.rows[i].clone();
                    let (g, x, y) = ext_gcd(r[p], v[p]);
                    let (rp, vp) = (r[p] / g, v[p] / g);
                    let mut new_row = Vec::with_capacity(self.dim);
                    let mut rest = Vec::with_capacity(self.dim);
                    for k in 0..self.dim {
                        new_row.push(checked(x.checked_mul(r[k]), y.checked_mul(v[k]))?);
                        rest.push(checked(rp.checked_mul(v[k]), (-vp).checked_mul(r[k]))?);
                    }
                    if new_row[p] < 0 {
                        new_row.iter_mut().for_each(|x| *x = -*x);
                    }
                    self.rows[i] = new_row;
                    v = rest;
                }
            }
        }
    }

    /// Reduces entries above each pivot so numbers stay small.
    fn reduce(&mut self) {
        for i in 0..self.rows.len() {
            let p = Self::pivot(&self.rows[i]).expect("nonzero row");
            let piv = self.rows[i][p];
            for j in 0..i {
                let q = self.rows[j][p].div_euclid(piv);
                if q != 0 {
                    let ri = self.rows[i].clone();
                    for (x, y) in self.rows[j].iter_mut().zip(&ri) {
                        *x -= q * y;
                    }
                }
            }
        }
    }

    fn report(&self) -> AperiodicityReport {
        let index = if self.rows.len() == self.dim {
            let prod: i128 = self.rows.iter().map(|r| r[Self::pivot(r).unwrap()]).product();
            u64::try_from(prod.abs()).ok()
        } else {
            None
        };
        let basis = self.rows.iter().map(|r| r.iter().map(|&x| x as i64).collect()).collect();
        AperiodicityReport { basis, index }
    }
}

fn checked(a: Option<i128>, b: Option<i128>) -> Result<i128> {
    a.zip(b)
        .and_then(|(a, b)| a.checked_add(b))
        .ok_or_else(|| Error::OutOfRange("lattice basis entry".into()))
}

/// Returns `(g, x, y)` with `g = gcd(a, b) > 0` and `a x + b y = g`.
pub(crate) fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i128, 0i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sft::{build_gibbs, Potential};
    use approx::assert_abs_diff_eq;

    fn signs() -> (GibbsMarkovMeasure, CocycleSpec) {
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        let c = CocycleSpec::lattice_1d(m.spec(), &[vec![1, -1], vec![1, -1]]).unwrap();
        (m, c)
    }

    #[test]
    fn drift_examples() {
        let (m, c) = signs();
        assert_abs_diff_eq!(drift(&m, &c).unwrap()[0], 0.0, epsilon = 1e-15);
        let b = CocycleSpec::lattice_1d(m.spec(), &[vec![0, 1], vec![0, 1]]).unwrap();
        assert_abs_diff_eq!(drift(&m, &b).unwrap()[0], 0.5, epsilon = 1e-15);
        assert_eq!(drift(&m, &CocycleSpec::zero(m.spec(), 2)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn iid_signs_have_unit_variance() {
        let (m, c) = signs();
        assert_abs_diff_eq!(gk_covariance_tau(&m, &c).unwrap()[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_cocycle_is_degenerate() {
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        let err = gk_covariance_tau(&m, &CocycleSpec::zero(m.spec(), 1)).unwrap_err();
        assert!(matches!(err, Error::DegenerateCovariance { .. }));
    }

    #[test]
    fn coboundary_direction_is_named() {
        // tau = (h(b) - h(a), signs) is a coboundary in the first coordinate
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        let c = CocycleSpec::lattice(m.spec(), 2, |a, b| vec![b as i64 - a as i64, 1 - 2 * b as i64]).unwrap();
        match gk_covariance_tau(&m, &c) {
            Err(Error::DegenerateCovariance { direction, .. }) => {
                assert_abs_diff_eq!(direction[0].abs(), 1.0, epsilon = 1e-9);
            }
            other => panic!("expected degenerate covariance, got {other:?}"),
        }
    }

    #[test]
    fn aperiodicity_lattices() {
        let (m, c) = signs();
        assert_eq!(aperiodicity(m.spec(), &c).unwrap().index, Some(2));
        let golden = SubshiftSpec::golden_mean();
        let c = CocycleSpec::lattice_1d(&golden, &[vec![1, 1], vec![0, 0]]).unwrap();
        assert!(aperiodicity(&golden, &c).unwrap().is_aperiodic());
        let constant = CocycleSpec::lattice_1d(&golden, &[vec![1, 1], vec![1, 0]]).unwrap();
        assert_eq!(aperiodicity(&golden, &constant).unwrap().index, None);
        let zero = CocycleSpec::zero(&golden, 1);
        assert_eq!(aperiodicity(&golden, &zero).unwrap().index, None);
    }

    #[test]
    fn aperiodicity_in_two_dimensions() {
        let spec = SubshiftSpec::full(3);
        let c = CocycleSpec::lattice(&spec, 2, |_, b| match b {
            0 => vec![1, 0],
            1 => vec![0, 1],
            _ => vec![0, 0],
        })
        .unwrap();
        let r = aperiodicity(&spec, &c).unwrap();
        assert!(r.is_aperiodic(), "{r:?}");
        // values summing to zero confine tau_N to a coset of an index-3 lattice
        let c3 = CocycleSpec::lattice(&spec, 2, |_, b| match b {
            0 => vec![1, 0],
            1 => vec![0, 1],
            _ => vec![-1, -1],
        })
        .unwrap();
        assert_eq!(aperiodicity(&spec, &c3).unwrap().index, Some(3));
        let c2 = CocycleSpec::lattice(&spec, 2, |_, b| match b {
            0 => vec![2, 0],
            1 => vec![0, 2],
            _ => vec![0, 0],
        })
        .unwrap();
        assert_eq!(aperiodicity(&spec, &c2).unwrap().index, Some(4));
    }

    #[test]
    fn golden_covariance_positive() {
        let spec = SubshiftSpec::golden_mean();
        let m = build_gibbs(&spec, &Potential::zero(&spec)).unwrap();
        let c = CocycleSpec::lattice_1d(&spec, &[vec![1, 1], vec![0, 0]]).unwrap();
        assert!(gk_covariance_tau(&m, &c).unwrap()[(0, 0)] > 0.0);
    }

    #[test]
    fn ext_gcd_identity() {
        for (a, b) in [(12, 18), (-4, 6), (7, 0), (0, -5), (35, 64)] {
            let (g, x, y) = ext_gcd(a, b);
            assert_eq!(a * x + b * y, g);
            assert!(g > 0);
        }
    }
}
