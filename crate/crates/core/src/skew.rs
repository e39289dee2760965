//! Skew products `F(x, y) = (f(x), G_{tau(x)} y)`: bases, fiber actions,
//! product observables and orbit iteration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cocycle::CocycleSpec;
use crate::error::{Error, Result};
use crate::sft::{GibbsMarkovMeasure, SubshiftSpec};
use crate::torus::{cis_fixed, to_fixed, IntMatrix, TrigPoly};

/// Base dynamics. Torus bases are coded by a symbolic partition so that
/// cocycles and base observables stay depth-2 functions of symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaseSystem {
    Sft(GibbsMarkovMeasure),
    /// Hyperbolic toral automorphism of `T^2`, coded by quadrants (4 symbols).
    CatMap(IntMatrix),
    /// `x -> 2x mod 1`, coded by binary digits; identical in law to the
    /// uniform full 2-shift.
    Doubling,
}

impl BaseSystem {
    pub fn cat_map(matrix: IntMatrix) -> Result<Self> {
        if matrix.size() != 2 || matrix.determinant().abs() != 1 || matrix.trace().abs() <= 2 {
            return Err(Error::Invalid("cat map needs a 2x2 matrix with |det| = 1 and |trace| > 2".into()));
        }
        Ok(BaseSystem::CatMap(matrix))
    }

    /// Alphabet of the symbolic coding.
    pub fn coding(&self) -> SubshiftSpec {
        match self {
            BaseSystem::Sft(m) => m.spec().clone(),
            BaseSystem::CatMap(_) => SubshiftSpec::full(4),
            BaseSystem::Doubling => SubshiftSpec::full(2),
        }
    }

    /// The Markov measure when the base is (equivalent to) a subshift.
    pub fn markov(&self) -> Option<GibbsMarkovMeasure> {
        match self {
            BaseSystem::Sft(m) => Some(m.clone()),
            BaseSystem::Doubling => Some(GibbsMarkovMeasure::uniform_full_shift(2)),
            BaseSystem::CatMap(_) => None,
        }
    }

    /// Quadrant symbol of a torus point.
    pub fn quadrant(x: &[u64]) -> usize {
        (((x[0] >> 63) << 1) | (x[1] >> 63)) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FiberAction {
    /// `G_t y = y + sum_j alpha_j t_j` on `T^m`; `alpha` is `m x d` row-major.
    Translation { m: usize, d: usize, alpha: Vec<f64> },
    /// `G_n y = B^n y` on `T^m`, a `Z`-action (`d = 1`).
    Automorphism { b: IntMatrix, b_inv: IntMatrix },
}

impl FiberAction {
    pub fn translation(m: usize, d: usize, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != m * d || d == 0 || d > m {
            return Err(Error::Invalid("translation needs an m x d frequency matrix with d <= m".into()));
        }
        let mat = nalgebra::DMatrix::from_row_slice(m, d, &alpha);
        if mat.rank(1e-12) < d {
            return Err(Error::Invalid("translation frequencies must have full rank".into()));
        }
        Ok(FiberAction::Translation { m, d, alpha })
    }

    /// Rotation of the circle by `alpha`.
    pub fn rotation(alpha: f64) -> Self {
        FiberAction::Translation { m: 1, d: 1, alpha: vec![alpha] }
    }

    pub fn automorphism(b: IntMatrix) -> Result<Self> {
        if !b.is_hyperbolic() {
            return Err(Error::Invalid("fiber automorphism must be hyperbolic".into()));
        }
        let b_inv = b.unimodular_inverse()?;
        Ok(FiberAction::Automorphism { b, b_inv })
    }

    /// Torus dimension `m`.
    pub fn torus_dim(&self) -> usize {
        match self {
            FiberAction::Translation { m, .. } => *m,
            FiberAction::Automorphism { b, .. } => b.size(),
        }
    }

    /// Action dimension `d`.
    pub fn action_dim(&self) -> usize {
        match self {
            FiberAction::Translation { d, .. } => *d,
            FiberAction::Automorphism { .. } => 1,
        }
    }

    /// `<k, alpha t>` for a translation, reduced mod 1 when `t` is integral.
    fn translation_phase(&self, k: &[i64], t: &[f64]) -> f64 {
        let FiberAction::Translation { m, d, alpha } = self else { unreachable!() };
        let mut s = 0.0;
        for j in 0..*d {
            let kj: f64 = (0..*m).map(|i| k[i] as f64 * alpha[i * d + j]).sum();
            if t[j].fract() == 0.0 {
                s += (kj - kj.floor()) * t[j];
            } else {
                s += kj * t[j];
            }
        }
        s
    }

    /// `alpha^T k` mod 1, the effective frequency of a character under the flow.
    pub fn dual_frequency(&self, k: &[i64]) -> Result<Vec<f64>> {
        match self {
            FiberAction::Translation { m, d, alpha } => Ok((0..*d)
                .map(|j| {
                    let x: f64 = (0..*m).map(|i| k[i] as f64 * alpha[i * d + j]).sum();
                    x - x.floor()
                })
                .collect()),
            FiberAction::Automorphism { .. } => Err(Error::Unsupported("dual frequency of an automorphism".into())),
        }
    }

    /// `G_t y` for a real time (translations) or an integer time.
    pub fn apply(&self, y: &[u64], t: &[f64]) -> Result<Vec<u64>> {
        match self {
            FiberAction::Translation { m, d, alpha } => {
                if t.len() != *d {
                    return Err(Error::Invalid("time has wrong dimension".into()));
                }
                Ok((0..*m)
                    .map(|i| {
                        let shift: f64 = (0..*d).map(|j| alpha[i * d + j] * t[j]).sum();
                        y[i].wrapping_add(to_fixed(shift))
                    })
                    .collect())
            }
            FiberAction::Automorphism { .. } => {
                if t.len() != 1 || t[0].fract() != 0.0 {
                    return Err(Error::Invalid("automorphism acts by integer times".into()));
                }
                Ok(self.apply_lattice(y, &[t[0] as i64]))
            }
        }
    }

    /// `G_t y` for integer `t`, exact on the fixed-point grid.
    pub fn apply_lattice(&self, y: &[u64], t: &[i64]) -> Vec<u64> {
        match self {
            FiberAction::Translation { m, d, alpha } => (0..*m)
                .map(|i| {
                    (0..*d).fold(y[i], |acc, j| {
                        acc.wrapping_add(to_fixed(alpha[i * d + j]).wrapping_mul(t[j] as u64))
                    })
                })
                .collect(),
            FiberAction::Automorphism { b, b_inv } => {
                let n = t[0];
                let mat = if n >= 0 { b } else { b_inv };
                mat.pow_wrapping(n.unsigned_abs()).apply_wrapping(y)
            }
        }
    }

    /// Character transport: `e_k(G_t y) = phase * e_{k'}(y)`. Returns
    /// `(k', phase)`; `None` if the transported frequency overflows `i128`.
    pub fn transport(&self, k: &[i64], t: &[i64]) -> Option<(Vec<i128>, Complex64)> {
        match self {
            FiberAction::Translation { .. } => {
                let tf: Vec<f64> = t.iter().map(|&x| x as f64).collect();
                let ph = self.translation_phase(k, &tf);
                Some((k.iter().map(|&x| x as i128).collect(), Complex64::from_polar(1.0, std::f64::consts::TAU * ph)))
            }
            FiberAction::Automorphism { b, b_inv } => {
                let n = t[0];
                let mat = if n >= 0 { b.transpose() } else { b_inv.transpose() };
                let mut v: Vec<i128> = k.iter().map(|&x| x as i128).collect();
                for _ in 0..n.unsigned_abs() {
                    v = mat.apply_checked(&v)?;
                }
                Some((v, Complex64::new(1.0, 0.0)))
            }
        }
    }
}

/// Depth-2 base factor `A(x) = a(x_0, x_1)` on the symbolic coding, or a
/// trigonometric polynomial in the base point for torus bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasePart {
    Constant(f64),
    /// Row-major `A x A` table.
    Symbolic { alphabet: usize, values: Vec<f64> },
    Trig(TrigPoly),
}

impl BasePart {
    pub fn symbolic(table: &[Vec<f64>]) -> Result<Self> {
        let n = table.len();
        if n == 0 || table.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("base observable table must be A x A".into()));
        }
        Ok(BasePart::Symbolic { alphabet: n, values: table.concat() })
    }

    /// `a(x_0)`, depending on the current symbol only.
    pub fn by_symbol(values: &[f64]) -> Self {
        let n = values.len();
        BasePart::Symbolic { alphabet: n, values: (0..n * n).map(|i| values[i / n]).collect() }
    }

    /// Table of `a(a, b)`; `None` for torus trigonometric parts.
    pub fn table(&self, alphabet: usize) -> Result<Vec<f64>> {
        match self {
            BasePart::Constant(c) => Ok(vec![*c; alphabet * alphabet]),
            BasePart::Symbolic { alphabet: n, values } if *n == alphabet => Ok(values.clone()),
            BasePart::Symbolic { .. } => Err(Error::Invalid("base observable alphabet mismatch".into())),
            BasePart::Trig(_) => Err(Error::Unsupported("trigonometric base observable on a symbolic base".into())),
        }
    }

    /// `mu(A)` under a Markov measure.
    pub fn mean(&self, m: &GibbsMarkovMeasure) -> Result<f64> {
        let t = self.table(m.alphabet_size())?;
        let n = m.alphabet_size();
        Ok(m.spec().edges().map(|(a, b)| m.pi()[a] * m.p(a, b) * t[a * n + b]).sum())
    }
}

/// One product term `A(x) B(y)` with complex weight folded into `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub base: BasePart,
    pub fiber: TrigPoly,
}

/// Finite sum of product observables `H = sum_i A_i(x) B_i(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    terms: Vec<ProductTerm>,
}

impl Observable {
    pub fn product(base: BasePart, fiber: TrigPoly) -> Self {
        Observable { terms: vec![ProductTerm { base, fiber }] }
    }

    pub fn sum(terms: Vec<ProductTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Invalid("observable needs at least one term".into()));
        }
        if terms.windows(2).any(|w| w[0].fiber.dim() != w[1].fiber.dim()) {
            return Err(Error::Invalid("fiber dimensions differ between terms".into()));
        }
        Ok(Observable { terms })
    }

    /// The constant function `c`.
    pub fn constant(torus_dim: usize, c: f64) -> Self {
        Self::product(BasePart::Constant(1.0), TrigPoly::constant(torus_dim, c))
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn torus_dim(&self) -> usize {
        self.terms[0].fiber.dim()
    }

    /// Every term has `b_0 = 0`, so `int H dnu = 0` for every `x`.
    pub fn zero_fiber_mean(&self) -> bool {
        self.terms.iter().all(|t| t.fiber.mean() == Complex64::new(0.0, 0.0))
    }

    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|t| t.fiber.is_real() && !matches!(&t.base, BasePart::Trig(p) if !p.is_real()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Observable {
            terms: self
                .terms
                .iter()
                .map(|t| ProductTerm { base: t.base.clone(), fiber: t.fiber.scaled(Complex64::new(s, 0.0)) })
                .collect(),
        }
    }

    /// `zeta(H) = sum_i mu(A_i) nu(B_i)` for Markov bases.
    pub fn mean(&self, m: &GibbsMarkovMeasure) -> Result<Complex64> {
        self.terms.iter().try_fold(Complex64::new(0.0, 0.0), |acc, t| Ok(acc + t.fiber.mean() * t.base.mean(m)?))
    }

    /// Evaluates `H` from the coding transition `(a, b)`, the base torus point
    /// (if any) and the fiber point.
    pub fn eval(&self, a: usize, b: usize, alphabet: usize, x: Option<&[u64]>, y: &[u64]) -> Complex64 {
        self.terms
            .iter()
            .map(|t| {
                let av = match &t.base {
                    BasePart::Constant(c) => Complex64::new(*c, 0.0),
                    BasePart::Symbolic { values, .. } => Complex64::new(values[a * alphabet + b], 0.0),
                    BasePart::Trig(p) => x.map_or(Complex64::new(0.0, 0.0), |x| p.eval(x)),
                };
                av * t.fiber.eval(y)
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewSystem {
    pub base: BaseSystem,
    pub cocycle: CocycleSpec,
    pub fiber: FiberAction,
}

impl SkewSystem {
    pub fn new(base: BaseSystem, cocycle: CocycleSpec, fiber: FiberAction) -> Result<Self> {
        if cocycle.dim() != fiber.action_dim() {
            return Err(Error::Invalid(format!(
                "cocycle dimension {} differs from fiber action dimension {}",
                cocycle.dim(),
                fiber.action_dim()
            )));
        }
        if matches!(fiber, FiberAction::Automorphism { .. }) && !cocycle.is_lattice() {
            return Err(Error::Invalid("automorphism fibers need a lattice cocycle".into()));
        }
        if cocycle.alphabet_size() != base.coding().alphabet_size() {
            return Err(Error::Invalid("cocycle alphabet differs from the base coding".into()));
        }
        Ok(SkewSystem { base, cocycle, fiber })
    }

    pub fn markov(&self) -> Option<GibbsMarkovMeasure> {
        self.base.markov()
    }

    pub(crate) fn require_markov(&self) -> Result<GibbsMarkovMeasure> {
        self.markov().ok_or_else(|| Error::Unsupported("exact computation needs a symbolic base".into()))
    }

    pub fn check_observable(&self, h: &Observable) -> Result<()> {
        if h.torus_dim() != self.fiber.torus_dim() {
            return Err(Error::Invalid("observable torus dimension differs from the fiber".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasePoint {
    /// Symbol prefix `x_0 x_1 ...` (SFT or doubling base).
    Symbols(Vec<usize>),
    /// Fixed-point torus coordinates (cat map base).
    Torus(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub base: BasePoint,
    pub fiber: Vec<u64>,
}

/// `F^N(x, y) = (f^N x, G_{tau_N(x)} y)` together with `tau_N(x)`.
pub fn iterate(sys: &SkewSystem, point: &PhasePoint, n: usize) -> Result<(PhasePoint, Vec<f64>)> {
    let c = &sys.cocycle;
    let d = c.dim();
    let mut tau = vec![0.0; d];
    let mut tau_int = vec![0i64; d];
    let mut add = |a: usize, b: usize| {
        if c.is_lattice() {
            for (t, v) in tau_int.iter_mut().zip(c.lattice_value(a, b)) {
                *t += v;
            }
        } else {
            for (t, v) in tau.iter_mut().zip(c.value(a, b)) {
                *t += v;
            }
        }
    };
    let base = match (&sys.base, &point.base) {
        (BaseSystem::Sft(_) | BaseSystem::Doubling, BasePoint::Symbols(x)) => {
            if x.len() < n + 1 {
                return Err(Error::ShortPrefix { need: n + 1, have: x.len() });
            }
            let alphabet = c.alphabet_size();
            if x.iter().any(|&s| s >= alphabet) {
                return Err(Error::OutOfRange("symbol".into()));
            }
            for w in x[..=n].windows(2) {
                add(w[0], w[1]);
            }
            BasePoint::Symbols(x[n..].to_vec())
        }
        (BaseSystem::CatMap(mat), BasePoint::Torus(x)) => {
            let mut cur = x.clone();
            for _ in 0..n {
                let next = mat.apply_wrapping(&cur);
                add(BaseSystem::quadrant(&cur), BaseSystem::quadrant(&next));
                cur = next;
            }
            BasePoint::Torus(cur)
        }
        _ => return Err(Error::Invalid("base point does not match the base system".into())),
    };
    let fiber = if c.is_lattice() {
        tau = tau_int.iter().map(|&t| t as f64).collect();
        sys.fiber.apply_lattice(&point.fiber, &tau_int)
    } else {
        sys.fiber.apply(&point.fiber, &tau)?
    };
    Ok((PhasePoint { base, fiber }, tau))
}

/// `nu(B_1 * (B_2 o G_t))` for integer `t`.
pub fn fiber_correlation(fib: &FiberAction, b1: &TrigPoly, b2: &TrigPoly, t: &[i64]) -> Result<Complex64> {
    fiber_moment(fib, &[(b1, &vec![0; t.len()][..]), (b2, t)])
}

/// `nu(B_1 * (B_2 o G_t))` for a real time on a translation fiber.
pub fn fiber_correlation_real(fib: &FiberAction, b1: &TrigPoly, b2: &TrigPoly, t: &[f64]) -> Result<Complex64> {
    if !matches!(fib, FiberAction::Translation { .. }) {
        return Err(Error::Unsupported("real times need a translation fiber".into()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, b) in b2.terms() {
        let neg: Vec<i64> = k.iter().map(|x| -x).collect();
        let ph = fib.translation_phase(k, t);
        acc += b1.coefficient(&neg) * b * Complex64::from_polar(1.0, std::f64::consts::TAU * ph);
    }
    Ok(acc)
}

/// `nu(prod_j B_j o G_{t_j})` by character algebra.
pub fn fiber_moment(fib: &FiberAction, factors: &[(&TrigPoly, &[i64])]) -> Result<Complex64> {
    if factors.iter().any(|(b, _)| b.dim() != fib.torus_dim()) {
        return Err(Error::Invalid("trigonometric polynomial dimension differs from the fiber".into()));
    }
    // accumulate the transported product as a map from frequency to coefficient
    let m = fib.torus_dim();
    let mut acc: std::collections::BTreeMap<Vec<i128>, Complex64> = std::collections::BTreeMap::new();
    acc.insert(vec![0; m], Complex64::new(1.0, 0.0));
    for (poly, t) in factors {
        let mut transported = Vec::with_capacity(poly.len());
        for (k, b) in poly.terms() {
            match fib.transport(k, t) {
                Some((k2, ph)) => transported.push((k2, b * ph)),
                None => return Err(Error::OutOfRange(format!("transported frequency of {k:?} at time {t:?}"))),
            }
        }
        let mut next = std::collections::BTreeMap::new();
        for (k0, c0) in &acc {
            for (k1, c1) in &transported {
                let k: Option<Vec<i128>> = k0.iter().zip(k1).map(|(a, b)| a.checked_add(*b)).collect();
                let k = k.ok_or_else(|| Error::OutOfRange("frequency sum".into()))?;
                *next.entry(k).or_insert(Complex64::new(0.0, 0.0)) += c0 * c1;
            }
        }
        acc = next;
    }
    Ok(acc.get(&vec![0; m]).copied().unwrap_or(Complex64::new(0.0, 0.0)))
}

/// Small-divisor check for a lattice-time translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiophantineReport {
    pub flag: bool,
    /// `min dist(alpha^T k, Z^d) |k|^s` over `0 < |k|_inf <= H`.
    pub worst: f64,
    pub worst_k: Vec<i64>,
    /// Some divisor vanished to resolution (rational relation).
    pub resonance: bool,
}

/// Divisors below this count as exact resonances.
pub const RESONANCE_RESOLUTION: f64 = 1e-9;
/// Cap on the number of frequencies scanned.
const MAX_FREQUENCIES: u64 = 50_000_000;

/// Checks `dist(alpha^T k, Z^d) >= K |k|^{-s}` for `0 < |k|_inf <= H`,
/// the form the condition takes for integer-time translations.
pub fn is_diophantine(fib: &FiberAction, height: u64, s: f64, k_min: f64) -> Result<DiophantineReport> {
    let FiberAction::Translation { m, .. } = fib else {
        return Err(Error::Unsupported("Diophantine check needs a translation fiber".into()));
    };
    if height == 0 {
        return Err(Error::OutOfRange("height (must be at least 1)".into()));
    }
    let m = *m;
    let count = (2 * height + 1).checked_pow(m as u32).unwrap_or(u64::MAX);
    if count > MAX_FREQUENCIES {
        return Err(Error::BudgetExceeded { required: count, budget: MAX_FREQUENCIES });
    }
    let mut worst = f64::INFINITY;
    let mut worst_k = vec![0; m];
    let mut resonance = false;
    let h = height as i64;
    let mut k = vec![-h; m];
    loop {
        // only one of k, -k is needed; take the lexicographically positive one
        let first = k.iter().find(|&&x| x != 0);
        if first.is_some_and(|&x| x > 0) {
            let freq = fib.dual_frequency(&k)?;
            let dist = freq.iter().map(|f| f.min(1.0 - f).powi(2)).sum::<f64>().sqrt();
            let norm = k.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
            if dist < RESONANCE_RESOLUTION {
                resonance = true;
            }
            let v = dist * norm.powf(s);
            if v < worst {
                worst = v;
                worst_k = k.clone();
            }
        }
        let mut i = 0;
        loop {
            if i == m {
                return Ok(DiophantineReport { flag: !resonance && worst >= k_min, worst, worst_k, resonance });
            }
            if k[i] < h {
                k[i] += 1;
                break;
            }
            k[i] = -h;
            i += 1;
        }
    }
}

/// Sum `alpha = sum_{j=1}^{terms} base^{-j!}`, a truncated Liouville number.
pub fn liouville(base: f64, terms: u32) -> f64 {
    (1..=terms).map(|j| base.powf(-((1..=j).product::<u32>() as f64))).sum()
}

pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// `exp(2 pi i <k, y>)` helper for fixed-point points.
pub fn character(k: &[i64], y: &[u64]) -> Complex64 {
    cis_fixed(k.iter().zip(y).fold(0u64, |acc, (&ki, &yi)| acc.wrapping_add((ki as u64).wrapping_mul(yi))))
}
