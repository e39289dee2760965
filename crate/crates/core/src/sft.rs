//! Subshifts of finite type and their Gibbs measures.
//!
//! A depth-2 potential on a primitive SFT determines a Gibbs measure that is
//! exactly the stationary Markov measure built from the Perron eigendata of
//! the weighted transition matrix `L(a,b) = 1[a->b] exp(phi(a,b))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Relative residual at which the power iteration stops.
pub const PERRON_TOLERANCE: f64 = 1e-13;
/// Iteration cap for the power iteration.
pub const PERRON_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubshiftSpec {
    alphabet: usize,
    allowed: Vec<bool>,
}

impl SubshiftSpec {
    /// Builds a subshift from a 0/1 transition matrix, rejecting non-primitive ones.
    pub fn new(transitions: &[Vec<u8>]) -> Result<Self> {
        let a = transitions.len();
        if a == 0 {
            return Err(Error::Invalid("alphabet must be nonempty".into()));
        }
        let mut allowed = Vec::with_capacity(a * a);
        for row in transitions {
            if row.len() != a {
                return Err(Error::Invalid("transition matrix must be square".into()));
            }
            for &t in row {
                match t {
                    0 => allowed.push(false),
                    1 => allowed.push(true),
                    _ => return Err(Error::Invalid("transition entries must be 0 or 1".into())),
                }
            }
        }
        let spec = SubshiftSpec { alphabet: a, allowed };
        for i in 0..a {
            let row = (0..a).any(|j| spec.allowed(i, j));
            let col = (0..a).any(|j| spec.allowed(j, i));
            if !row || !col {
                return Err(Error::Invalid(format!("symbol {i} has an empty row or column")));
            }
        }
        if !spec.is_primitive() {
            return Err(Error::NotPrimitive);
        }
        Ok(spec)
    }

    /// The full shift on `alphabet` symbols.
    pub fn full(alphabet: usize) -> Self {
        SubshiftSpec { alphabet, allowed: vec![true; alphabet * alphabet] }
    }

    /// The golden-mean shift: the word `11` is forbidden.
    pub fn golden_mean() -> Self {
        SubshiftSpec { alphabet: 2, allowed: vec![true, true, true, false] }
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    #[inline]
    pub fn allowed(&self, a: usize, b: usize) -> bool {
        self.allowed[a * self.alphabet + b]
    }

    /// All allowed transitions in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.alphabet;
        (0..n * n).filter(move |&i| self.allowed[i]).map(move |i| (i / n, i % n))
    }

    pub fn transitions(&self) -> Vec<Vec<u8>> {
        (0..self.alphabet)
            .map(|a| (0..self.alphabet).map(|b| self.allowed(a, b) as u8).collect())
            .collect()
    }

    /// Primitivity via Wielandt's bound: `M^((A-1)^2+1)` must be positive.
    pub fn is_primitive(&self) -> bool {
        let n = self.alphabet;
        let exponent = (n - 1) * (n - 1) + 1;
        let power = bool_matrix_power(&self.allowed, n, exponent);
        power.iter().all(|&x| x)
    }
}

fn bool_matrix_mul(x: &[bool], y: &[bool], n: usize) -> Vec<bool> {
    let mut out = vec![false; n * n];
    for i in 0..n {
        for k in 0..n {
            if x[i * n + k] {
                for j in 0..n {
                    out[i * n + j] |= y[k * n + j];
                }
            }
        }
    }
    out
}

fn bool_matrix_power(m: &[bool], n: usize, mut e: usize) -> Vec<bool> {
    let mut result: Vec<bool> = (0..n * n).map(|i| i / n == i % n).collect();
    let mut base = m.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            result = bool_matrix_mul(&result, &base, n);
        }
        base = bool_matrix_mul(&base, &base, n);
        e >>= 1;
    }
    result
}

/// Locally constant potential depending on two consecutive symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    alphabet: usize,
    values: Vec<f64>,
}

impl Potential {
    pub fn zero(spec: &SubshiftSpec) -> Self {
        Potential { alphabet: spec.alphabet, values: vec![0.0; spec.alphabet * spec.alphabet] }
    }

    pub fn from_fn(spec: &SubshiftSpec, f: impl Fn(usize, usize) -> f64) -> Self {
        let n = spec.alphabet;
        let values = (0..n * n)
            .map(|i| if spec.allowed[i] { f(i / n, i % n) } else { 0.0 })
            .collect();
        Potential { alphabet: n, values }
    }

    /// Potential from a full matrix; entries on forbidden transitions are ignored.
    pub fn from_matrix(spec: &SubshiftSpec, matrix: &[Vec<f64>]) -> Result<Self> {
        if matrix.len() != spec.alphabet || matrix.iter().any(|r| r.len() != spec.alphabet) {
            return Err(Error::Invalid("potential must be an A x A matrix".into()));
        }
        if spec.edges().any(|(a, b)| !matrix[a][b].is_finite()) {
            return Err(Error::Invalid("potential must be finite on allowed transitions".into()));
        }
        Ok(Self::from_fn(spec, |a, b| matrix[a][b]))
    }

    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.alphabet + b]
    }
}

/// Stationary Markov measure realising the Gibbs measure of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsMarkovMeasure {
    spec: SubshiftSpec,
    p: Vec<f64>,
    pi: Vec<f64>,
    log_pressure: f64,
}

impl GibbsMarkovMeasure {
    pub fn spec(&self) -> &SubshiftSpec {
        &self.spec
    }

    pub fn alphabet_size(&self) -> usize {
        self.spec.alphabet
    }

    #[inline]
    pub fn p(&self, a: usize, b: usize) -> f64 {
        self.p[a * self.spec.alphabet + b]
    }

    /// Row-major transition matrix.
    pub fn transition_matrix(&self) -> &[f64] {
        &self.p
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn log_pressure(&self) -> f64 {
        self.log_pressure
    }

    /// Uniform Bernoulli measure on the full shift.
    pub fn uniform_full_shift(alphabet: usize) -> Self {
        let spec = SubshiftSpec::full(alphabet);
        build_gibbs(&spec, &Potential::zero(&spec)).expect("full shift is primitive")
    }

    /// Largest deviation from the measure invariants; used by tests and reports.
    pub fn invariant_error(&self) -> f64 {
        let n = self.spec.alphabet;
        let mut err: f64 = 0.0;
        for a in 0..n {
            let s: f64 = (0..n).map(|b| self.p(a, b)).sum();
            err = err.max((s - 1.0).abs());
            for b in 0..n {
                if self.spec.allowed(a, b) != (self.p(a, b) > 0.0) {
                    err = f64::INFINITY;
                }
            }
        }
        for b in 0..n {
            let s: f64 = (0..n).map(|a| self.pi[a] * self.p(a, b)).sum();
            err = err.max((s - self.pi[b]).abs());
        }
        err.max((self.pi.iter().sum::<f64>() - 1.0).abs())
    }
}

struct Perron {
    value: f64,
    vector: Vec<f64>,
}

fn power_iteration(matrix: &[f64], n: usize, transpose: bool) -> Result<Perron> {
    let apply = |v: &[f64], out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n)
                .map(|j| if transpose { matrix[j * n + i] } else { matrix[i * n + j] } * v[j])
                .sum();
        }
    };
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=PERRON_MAX_ITERATIONS {
        apply(&v, &mut w);
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let lambda = v.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() / vv;
        let r: f64 = v.iter().zip(&w).map(|(x, y)| (y - lambda * x).powi(2)).sum::<f64>().sqrt();
        residual = r / (lambda.abs() * vv.sqrt());
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (x, y) in v.iter_mut().zip(&w) {
            *x = y / norm;
        }
        if residual < PERRON_TOLERANCE && it > 1 {
            return Ok(Perron { value: lambda, vector: v });
        }
    }
    Err(Error::NoConvergence { iterations: PERRON_MAX_ITERATIONS, residual })
}

/// Gibbs measure of `phi` on `spec` via Ruelle-Perron-Frobenius eigendata.
pub fn build_gibbs(spec: &SubshiftSpec, phi: &Potential) -> Result<GibbsMarkovMeasure> {
    if phi.alphabet != spec.alphabet {
        return Err(Error::Invalid("potential and subshift alphabets differ".into()));
    }
    if !spec.is_primitive() {
        return Err(Error::NotPrimitive);
    }
    let n = spec.alphabet;
    let l: Vec<f64> = (0..n * n)
        .map(|i| if spec.allowed[i] { phi.values[i].exp() } else { 0.0 })
        .collect();
    let right = power_iteration(&l, n, false)?;
    let left = power_iteration(&l, n, true)?;
    let lambda = right.value;
    let h = right.vector;
    let mut p = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            p[a * n + b] = l[a * n + b] * h[b] / (lambda * h[a]);
        }
        let s: f64 = p[a * n..(a + 1) * n].iter().sum();
        for x in &mut p[a * n..(a + 1) * n] {
            *x /= s;
        }
    }
    let mut pi: Vec<f64> = left.vector.iter().zip(&h).map(|(x, y)| x * y).collect();
    let total: f64 = pi.iter().sum();
    for x in &mut pi {
        *x /= total;
    }
    Ok(GibbsMarkovMeasure { spec: spec.clone(), p, pi, log_pressure: lambda.ln() })
}

/// Measure of the cylinder fixed by `word`; forbidden words have measure zero.
pub fn cylinder_measure(m: &GibbsMarkovMeasure, word: &[usize]) -> Result<f64> {
    let (&first, _) = word.split_first().ok_or(Error::EmptyWord)?;
    let n = m.alphabet_size();
    if word.iter().any(|&s| s >= n) {
        return Err(Error::OutOfRange("symbol".into()));
    }
    Ok(word.windows(2).fold(m.pi[first], |acc, w| acc * m.p(w[0], w[1])))
}

/// Inverse-CDF sampler for the Markov chain of a Gibbs measure.
#[derive(Debug, Clone)]
pub struct MarkovSampler {
    n: usize,
    initial: Vec<f64>,
    rows: Vec<f64>,
}

impl MarkovSampler {
    pub fn new(m: &GibbsMarkovMeasure) -> Self {
        let n = m.alphabet_size();
        let cumulative = |xs: &[f64]| {
            let mut acc = 0.0;
            xs.iter()
                .map(|x| {
                    acc += x;
                    acc
                })
                .collect::<Vec<_>>()
        };
        let initial = cumulative(&m.pi);
        let rows = (0..n).flat_map(|a| cumulative(&m.p[a * n..(a + 1) * n])).collect();
        MarkovSampler { n, initial, rows }
    }

    fn pick(cdf: &[f64], u: f64) -> usize {
        let total = cdf[cdf.len() - 1];
        let target = u * total;
        cdf.iter().position(|&c| target < c).unwrap_or(cdf.len() - 1)
    }

    #[inline]
    pub fn initial<R: Rng>(&self, rng: &mut R) -> usize {
        Self::pick(&self.initial, rng.gen::<f64>())
    }

    #[inline]
    pub fn next<R: Rng>(&self, rng: &mut R, a: usize) -> usize {
        Self::pick(&self.rows[a * self.n..(a + 1) * self.n], rng.gen::<f64>())
    }
}

/// Stationary path of the given length, fully determined by `seed`.
pub fn sample_path(m: &GibbsMarkovMeasure, length: usize, seed: u64) -> Vec<usize> {
    let sampler = MarkovSampler::new(m);
    let mut rng: StreamRng = rng::stream(seed, rng::purpose::PATH, 0);
    let mut path = Vec::with_capacity(length);
    if length == 0 {
        return path;
    }
    let mut a = sampler.initial(&mut rng);
    path.push(a);
    for _ in 1..length {
        a = sampler.next(&mut rng, a);
        path.push(a);
    }
    path
}

/// Largest ratio `mu(C'C'') / (mu(C') mu(C''))` over cylinders of length at
/// most `max_len` (the empty cylinder included).
///
/// For a Markov measure the ratio depends only on the last symbol of `C'` and
/// the first symbol of `C''`, and equals `P(a,b) / pi(b)`.
pub fn quasi_independence_constant(m: &GibbsMarkovMeasure, max_len: usize) -> Result<f64> {
    if max_len < 2 {
        return Err(Error::OutOfRange("max_len (must be at least 2)".into()));
    }
    Ok(m.spec
        .edges()
        .map(|(a, b)| m.p(a, b) / m.pi[b])
        .fold(1.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_two_shift_is_uniform() {
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        for a in 0..2 {
            for b in 0..2 {
                assert_abs_diff_eq!(m.p(a, b), 0.5, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(m.pi()[a], 0.5, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m.log_pressure(), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn rank_one_weights_give_bernoulli_measure() {
        let spec = SubshiftSpec::full(2);
        let w = [0.3, 0.7];
        let m = build_gibbs(&spec, &Potential::from_fn(&spec, |_, b| f64::ln(w[b]))).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_abs_diff_eq!(m.p(a, b), w[b], epsilon = 1e-12);
            }
            assert_abs_diff_eq!(m.pi()[a], w[a], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m.log_pressure(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_primitive() {
        assert!(matches!(SubshiftSpec::new(&[vec![0, 1], vec![1, 0]]), Err(Error::NotPrimitive)));
        assert!(SubshiftSpec::new(&[vec![1, 1], vec![0, 0]]).is_err());
        // primitive with exponent 5 > alphabet size
        assert!(SubshiftSpec::new(&[vec![1, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]).is_ok());
    }

    #[test]
    fn cylinder_edge_cases() {
        let m = build_gibbs(&SubshiftSpec::golden_mean(), &Potential::zero(&SubshiftSpec::golden_mean())).unwrap();
        assert!(matches!(cylinder_measure(&m, &[]), Err(Error::EmptyWord)));
        assert_eq!(cylinder_measure(&m, &[1, 1]).unwrap(), 0.0);
        assert_eq!(cylinder_measure(&m, &[1]).unwrap(), m.pi()[1]);
        let u = GibbsMarkovMeasure::uniform_full_shift(2);
        assert_abs_diff_eq!(cylinder_measure(&u, &[0, 1]).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = GibbsMarkovMeasure::uniform_full_shift(3);
        assert_eq!(sample_path(&m, 50, 11), sample_path(&m, 50, 11));
        assert_ne!(sample_path(&m, 50, 11), sample_path(&m, 50, 12));
        let golden = build_gibbs(&SubshiftSpec::golden_mean(), &Potential::zero(&SubshiftSpec::golden_mean())).unwrap();
        let path = sample_path(&golden, 2000, 3);
        assert!(path.windows(2).all(|w| !(w[0] == 1 && w[1] == 1)));
    }

    #[test]
    fn quasi_independence_for_product_measure_is_one() {
        let m = GibbsMarkovMeasure::uniform_full_shift(3);
        assert_abs_diff_eq!(quasi_independence_constant(&m, 4).unwrap(), 1.0, epsilon = 1e-12);
        assert!(quasi_independence_constant(&m, 1).is_err());
    }
}
