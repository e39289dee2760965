//! Fixed-point torus arithmetic, integer matrices and trigonometric polynomials.
//!
//! A torus coordinate `u: u64` stands for `u / 2^64`; wrapping arithmetic is
//! exact arithmetic mod 1 on that grid.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_64: f64 = 18_446_744_073_709_551_616.0;

/// Fixed-point representative of `x mod 1`.
pub fn to_fixed(x: f64) -> u64 {
    let f = x - x.floor();
    let v = f * TWO_64;
    if v >= TWO_64 {
        0
    } else {
        v as u64
    }
}

pub fn to_real(u: u64) -> f64 {
    u as f64 / TWO_64
}

/// `exp(2 pi i u / 2^64)`.
#[inline]
pub fn cis_fixed(u: u64) -> Complex64 {
    // signed reading keeps the angle in [-pi, pi) for better accuracy
    let angle = (u as i64) as f64 / TWO_64 * TAU;
    Complex64::from_polar(1.0, angle)
}

/// Square integer matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix {
    n: usize,
    entries: Vec<i64>,
}

impl IntMatrix {
    pub fn new(rows: &[Vec<i64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("integer matrix must be square and nonempty".into()));
        }
        Ok(IntMatrix { n, entries: rows.concat() })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries.chunks(self.n).map(<[i64]>::to_vec).collect()
    }

    pub fn identity(n: usize) -> Self {
        IntMatrix { n, entries: (0..n * n).map(|i| (i / n == i % n) as i64).collect() }
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        IntMatrix { n, entries: (0..n * n).map(|i| self.get(i % n, i / n)).collect() }
    }

    pub fn trace(&self) -> i64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn determinant(&self) -> i128 {
        let g = |i, j| self.get(i, j) as i128;
        match self.n {
            1 => g(0, 0),
            2 => g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0),
            3 => {
                g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                    + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
            }
            _ => {
                let m = nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64);
                m.determinant().round() as i128
            }
        }
    }

    /// Inverse of a unimodular matrix (sizes 1 to 3).
    pub fn unimodular_inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if det.abs() != 1 {
            return Err(Error::Invalid(format!("matrix determinant {det} is not +-1")));
        }
        let n = self.n;
        let d = det as i64;
        let g = |i: usize, j: usize| self.get(i, j);
        let entries = match n {
            1 => vec![d * g(0, 0)],
            2 => vec![d * g(1, 1), -d * g(0, 1), -d * g(1, 0), d * g(0, 0)],
            3 => {
                let mut inv = vec![0i64; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        // cofactor of (j, i)
                        let r: Vec<usize> = (0..3).filter(|&x| x != j).collect();
                        let c: Vec<usize> = (0..3).filter(|&x| x != i).collect();
                        let minor = g(r[0], c[0]) * g(r[1], c[1]) - g(r[0], c[1]) * g(r[1], c[0]);
                        let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                        inv[i * 3 + j] = d * sign * minor;
                    }
                }
                inv
            }
            _ => return Err(Error::Unsupported("inverse for matrices larger than 3x3".into())),
        };
        Ok(IntMatrix { n, entries })
    }

    /// Eigenvalue moduli, used to test hyperbolicity.
    pub fn eigenvalue_moduli(&self) -> Vec<f64> {
        let m = nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64);
        m.complex_eigenvalues().iter().map(|z| z.norm()).collect()
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.eigenvalue_moduli().iter().all(|r| (r - 1.0).abs() > 1e-9)
    }

    /// `M y` on the fixed-point torus.
    pub fn apply_wrapping(&self, y: &[u64]) -> Vec<u64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                (0..n).fold(0u64, |acc, j| acc.wrapping_add((self.get(i, j) as u64).wrapping_mul(y[j])))
            })
            .collect()
    }

    fn mul_wrapping(&self, other: &IntMatrix) -> IntMatrix {
        let n = self.n;
        let mut entries = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] =
                    (0..n).fold(0i64, |acc, k| acc.wrapping_add(self.get(i, k).wrapping_mul(other.get(k, j))));
            }
        }
        IntMatrix { n, entries }
    }

    /// `M^e` with wrapping arithmetic, exact modulo `2^64`.
    pub fn pow_wrapping(&self, mut e: u64) -> IntMatrix {
        let mut result = IntMatrix::identity(self.n);
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_wrapping(&base);
            }
            base = base.mul_wrapping(&base);
            e >>= 1;
        }
        result
    }

    /// `M k` in exact integers; `None` on overflow.
    pub fn apply_checked(&self, k: &[i128]) -> Option<Vec<i128>> {
        let n = self.n;
        (0..n)
            .map(|i| {
                (0..n).try_fold(0i128, |acc, j| acc.checked_add((self.get(i, j) as i128).checked_mul(k[j])?))
            })
            .collect()
    }
}

/// Finite Fourier series `sum_k b_k exp(2 pi i <k, y>)` on `T^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, Complex64>,
}

impl TrigPoly {
    pub fn new(dim: usize, terms: impl IntoIterator<Item = (Vec<i64>, Complex64)>) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (k, b) in terms {
            if k.len() != dim {
                return Err(Error::Invalid(format!("frequency {k:?} has wrong dimension (torus dimension {dim})")));
            }
            if !(b.re.is_finite() && b.im.is_finite()) {
                return Err(Error::Invalid("non-finite Fourier coefficient".into()));
            }
            *coeffs.entry(k).or_insert(Complex64::new(0.0, 0.0)) += b;
        }
        coeffs.retain(|_, b| *b != Complex64::new(0.0, 0.0));
        Ok(TrigPoly { dim, coeffs })
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, [(vec![0; dim], Complex64::new(c, 0.0))]).expect("valid")
    }

    pub fn character(k: Vec<i64>) -> Self {
        let dim = k.len();
        Self::new(dim, [(k, Complex64::new(1.0, 0.0))]).expect("valid")
    }

    /// `amp cos(2 pi <k, y>)`.
    pub fn cos(k: Vec<i64>, amp: f64) -> Self {
        let neg = k.iter().map(|x| -x).collect();
        let dim = k.len();
        Self::new(dim, [(k, Complex64::new(amp / 2.0, 0.0)), (neg, Complex64::new(amp / 2.0, 0.0))]).expect("valid")
    }

    /// `amp sin(2 pi <k, y>)`.
    pub fn sin(k: Vec<i64>, amp: f64) -> Self {
        let neg = k.iter().map(|x| -x).collect();
        let dim = k.len();
        Self::new(dim, [(k, Complex64::new(0.0, -amp / 2.0)), (neg, Complex64::new(0.0, amp / 2.0))]).expect("valid")
    }

    /// Fourier truncation of the sawtooth `{y} - 1/2` on `T^1`:
    /// `b_k = i / (2 pi k)` for `0 < |k| <= harmonics`.
    pub fn sawtooth(harmonics: usize) -> Self {
        let terms = (1..=harmonics as i64).flat_map(|k| {
            let b = Complex64::new(0.0, 1.0 / (TAU * k as f64));
            [(vec![k], b), (vec![-k], -b)]
        });
        Self::new(1, terms).expect("valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn coefficient(&self, k: &[i64]) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// `nu(B)`, the Haar mean.
    pub fn mean(&self) -> Complex64 {
        self.coefficient(&vec![0; self.dim])
    }

    pub fn without_mean(&self) -> Self {
        let zero = vec![0; self.dim];
        TrigPoly { dim: self.dim, coeffs: self.coeffs.iter().filter(|(k, _)| **k != zero).map(|(k, b)| (k.clone(), *b)).collect() }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        TrigPoly::new(self.dim, self.coeffs.iter().map(|(k, b)| (k.clone(), b * s))).expect("valid")
    }

    pub fn add(&self, other: &TrigPoly) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Invalid("torus dimensions differ".into()));
        }
        TrigPoly::new(self.dim, self.coeffs.iter().chain(other.coeffs.iter()).map(|(k, b)| (k.clone(), *b)))
    }

    /// `b_{-k} = conj(b_k)` for every `k`.
    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(|(k, b)| {
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            (self.coefficient(&neg) - b.conj()).norm() <= 1e-14 * (1.0 + b.norm())
        })
    }

    /// `nu(|B|^2)` by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.values().map(|b| b.norm_sqr()).sum()
    }

    pub fn eval(&self, y: &[u64]) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(k, b)| {
                let phase = k.iter().zip(y).fold(0u64, |acc, (&ki, &yi)| acc.wrapping_add((ki as u64).wrapping_mul(yi)));
                b * cis_fixed(phase)
            })
            .sum()
    }

    pub fn eval_real(&self, y: &[f64]) -> Complex64 {
        let fixed: Vec<u64> = y.iter().map(|&x| to_fixed(x)).collect();
        self.eval(&fixed)
    }
}

/// Real part of a trigonometric polynomial, evaluated quickly.
///
/// One-dimensional polynomials with many harmonics are tabulated on a grid of
/// `2^20` points (one inverse FFT) with linear interpolation; everything else
/// is summed directly.
#[derive(Debug, Clone)]
pub enum FastEval {
    Direct(TrigPoly),
    Table(Vec<f64>),
}

const TABLE_BITS: u32 = 20;
const TABLE_MIN_TERMS: usize = 64;

impl FastEval {
    pub fn new(poly: &TrigPoly) -> Self {
        if poly.dim() != 1 || poly.len() < TABLE_MIN_TERMS {
            return FastEval::Direct(poly.clone());
        }
        let size = 1usize << TABLE_BITS;
        if poly.terms().any(|(k, _)| k[0].unsigned_abs() as usize >= size / 2) {
            return FastEval::Direct(poly.clone());
        }
        // table[j] = Re sum_k b_k e(k j / size), one inverse DFT
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (k, b) in poly.terms() {
            buf[k[0].rem_euclid(size as i64) as usize] += b;
        }
        rustfft::FftPlanner::new().plan_fft_inverse(size).process(&mut buf);
        let mut table: Vec<f64> = buf.iter().map(|z| z.re).collect();
        table.push(table[0]);
        FastEval::Table(table)
    }

    #[inline]
    pub fn eval(&self, y: &[u64]) -> f64 {
        match self {
            FastEval::Direct(p) => p.eval(y).re,
            FastEval::Table(t) => {
                let u = y[0];
                let i = (u >> (64 - TABLE_BITS)) as usize;
                let frac = (u << TABLE_BITS) as f64 / TWO_64;
                t[i] + (t[i + 1] - t[i]) * frac
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fixed_point_roundtrip() {
        for x in [0.0, 0.25, 0.999, -0.25] {
            let r = to_real(to_fixed(x));
            assert_abs_diff_eq!(r, x - x.floor(), epsilon = 1e-15);
        }
    }

    #[test]
    fn cat_map_inverse() {
        let b = IntMatrix::new(&[vec![2, 1], vec![1, 1]]).unwrap();
        let inv = b.unimodular_inverse().unwrap();
        let y = vec![123_456_789u64, 987_654_321_000];
        assert_eq!(inv.apply_wrapping(&b.apply_wrapping(&y)), y);
        assert!(b.is_hyperbolic());
        assert!(!IntMatrix::new(&[vec![1, 1], vec![0, 1]]).unwrap().is_hyperbolic());
        assert_eq!(b.pow_wrapping(3).apply_wrapping(&y), b.apply_wrapping(&b.apply_wrapping(&b.apply_wrapping(&y))));
    }

    #[test]
    fn three_by_three_inverse() {
        let m = IntMatrix::new(&[vec![1, 1, 0], vec![1, 2, 1], vec![0, 1, 2]]).unwrap();
        assert_eq!(m.determinant(), 1);
        let inv = m.unimodular_inverse().unwrap();
        let y = vec![5u64, 1 << 40, u64::MAX - 7];
        assert_eq!(m.apply_wrapping(&inv.apply_wrapping(&y)), y);
    }

    #[test]
    fn trig_evaluation() {
        let c = TrigPoly::cos(vec![1, 0], 1.0);
        assert!(c.is_real());
        assert_abs_diff_eq!(c.eval_real(&[0.25, 0.3]).re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.eval_real(&[0.5, 0.3]).re, -1.0, epsilon = 1e-15);
        let s = TrigPoly::sin(vec![1], 2.0);
        assert_abs_diff_eq!(s.eval_real(&[0.25]).re, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.eval_real(&[0.25]).im, 0.0, epsilon = 1e-15);
        assert_eq!(c.mean(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn sawtooth_approximates_fractional_part() {
        let p = TrigPoly::sawtooth(512);
        assert!(p.is_real());
        for y in [0.1, 0.3, 0.7] {
            assert_abs_diff_eq!(p.eval_real(&[y]).re, y - 0.5, epsilon = 2e-3);
        }
        let fast = FastEval::new(&p);
        assert!(matches!(fast, FastEval::Table(_)));
        for y in [0.1234, 0.5001, 0.987] {
            assert_abs_diff_eq!(fast.eval(&[to_fixed(y)]), p.eval_real(&[y]).re, epsilon = 1e-6);
        }
    }
}
