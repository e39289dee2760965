//! Social partitions of time tuples and the `kappa` products that control
//! multiple-mixing bounds.
//!
//! Atoms hold 0-based positions into the tuple, so repeated times stay
//! distinguishable.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ENUMERATE: usize = 10;
pub const MAX_BOUND: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTuple(Vec<u64>);

impl TimeTuple {
    pub fn new(times: Vec<u64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Invalid("time tuple needs at least two entries".into()));
        }
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("time tuple must be non-decreasing".into()));
        }
        Ok(TimeTuple(times))
    }

    pub fn times(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `n_j - n_{j-1}` with `n_{-1} = 0` (0-based `j`).
    pub fn backward_gap(&self, j: usize) -> u64 {
        if j == 0 {
            self.0[0]
        } else {
            self.0[j] - self.0[j - 1]
        }
    }

    /// `n_{j+1} - n_j` with `n_s = n_0 + n_{s-1}` past the end (0-based `j`).
    pub fn forward_gap(&self, j: usize) -> u64 {
        let s = self.0.len();
        if j + 1 == s {
            self.0[0]
        } else {
            self.0[j + 1] - self.0[j]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SocialPartition {
    /// Atoms sorted internally and ordered by their minima.
    pub atoms: Vec<Vec<usize>>,
}

impl SocialPartition {
    pub fn new(mut atoms: Vec<Vec<usize>>) -> Result<Self> {
        for a in &mut atoms {
            a.sort_unstable();
        }
        atoms.sort_by_key(|a| a.first().copied());
        let s: usize = atoms.iter().map(Vec::len).sum();
        let mut seen = vec![false; s];
        for &i in atoms.iter().flatten() {
            if i >= s || seen[i] {
                return Err(Error::Invalid("atoms must partition 0..s".into()));
            }
            seen[i] = true;
        }
        if atoms.iter().any(|a| a.len() < 2) {
            return Err(Error::Invalid("every atom of a social partition has at least two elements".into()));
        }
        Ok(SocialPartition { atoms })
    }

    pub fn size(&self) -> usize {
        self.atoms.iter().map(Vec::len).sum()
    }

    pub fn is_pairing(&self) -> bool {
        self.atoms.iter().all(|a| a.len() == 2)
    }

    /// Block label of every position.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.size()];
        for (b, atom) in self.atoms.iter().enumerate() {
            for &i in atom {
                out[i] = b;
            }
        }
        out
    }

    /// `(12)(34)...` in 1-based notation.
    pub fn natural_pairing(m: usize) -> Result<Self> {
        if m % 2 != 0 || m == 0 {
            return Err(Error::Invalid("natural pairing needs a positive even size".into()));
        }
        Self::new((0..m / 2).map(|i| vec![2 * i, 2 * i + 1]).collect())
    }
}

impl std::fmt::Display for SocialPartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for a in &self.atoms {
            write!(f, "(")?;
            for (k, i) in a.iter().enumerate() {
                if k > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", i + 1)?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// All social partitions of `s` positions, in lexicographic order of their
/// restricted growth strings (atoms listed by minima).
pub fn enumerate_social(s: usize) -> Result<Vec<SocialPartition>> {
    if !(2..=MAX_ENUMERATE).contains(&s) {
        return Err(Error::OutOfRange(format!("s = {s}; need 2 <= s <= {MAX_ENUMERATE}")));
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; s];
    let mut counts = vec![0usize; s];
    fn rec(pos: usize, blocks: usize, rgs: &mut [usize], counts: &mut [usize], out: &mut Vec<SocialPartition>) {
        let s = rgs.len();
        // blocks still below size 2 need at least that many remaining slots
        let deficit: usize = counts[..blocks].iter().map(|&c| 2usize.saturating_sub(c)).sum();
        if deficit > s - pos {
            return;
        }
        if pos == s {
            let mut atoms = vec![Vec::new(); blocks];
            for (i, &b) in rgs.iter().enumerate() {
                atoms[b].push(i);
            }
            out.push(SocialPartition { atoms });
            return;
        }
        for b in 0..=blocks.min(s - 1) {
            rgs[pos] = b;
            counts[b] += 1;
            rec(pos + 1, blocks.max(b + 1), rgs, counts, out);
            counts[b] -= 1;
        }
    }
    rec(0, 0, &mut rgs, &mut counts, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeFixed {
    /// Forward fixed positions `F+` (not the smallest in their atom).
    pub forward_fixed: Vec<usize>,
    /// Backward fixed positions `F-` (not the largest in their atom).
    pub backward_fixed: Vec<usize>,
    /// Times of the forward free elements, one per atom.
    pub forward_free: Vec<u64>,
    /// Times of the backward free elements, one per atom.
    pub backward_free: Vec<u64>,
}

pub fn classify_free_fixed(p: &SocialPartition, t: &TimeTuple) -> Result<FreeFixed> {
    if p.size() != t.len() {
        return Err(Error::Invalid("partition and tuple sizes differ".into()));
    }
    let mut forward_fixed = Vec::new();
    let mut backward_fixed = Vec::new();
    let mut forward_free = Vec::new();
    let mut backward_free = Vec::new();
    for atom in &p.atoms {
        forward_free.push(t.times()[atom[0]]);
        backward_free.push(t.times()[*atom.last().expect("atoms are nonempty")]);
        forward_fixed.extend_from_slice(&atom[1..]);
        backward_fixed.extend_from_slice(&atom[..atom.len() - 1]);
    }
    forward_fixed.sort_unstable();
    backward_fixed.sort_unstable();
    Ok(FreeFixed { forward_fixed, backward_fixed, forward_free, backward_free })
}

/// Gap scale `L`. `L(0) = 1` is imposed for every rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GapRule {
    /// `scale * n^exponent`.
    Power { scale: f64, exponent: f64 },
    /// `L(n) = values[n - 1]`.
    Table { values: Vec<f64> },
}

impl GapRule {
    pub fn sqrt() -> Self {
        GapRule::Power { scale: 1.0, exponent: 0.5 }
    }

    pub fn linear() -> Self {
        GapRule::Power { scale: 1.0, exponent: 1.0 }
    }

    pub fn eval(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Ok(1.0);
        }
        let v = match self {
            GapRule::Power { scale, exponent } => scale * (n as f64).powf(*exponent),
            GapRule::Table { values } => *values
                .get(n as usize - 1)
                .ok_or_else(|| Error::OutOfRange(format!("gap {n} beyond the L table")))?,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Invalid(format!("L({n}) = {v} is not positive")));
        }
        Ok(v)
    }
}

/// Product of `L` over a multiset of gaps, taken in sorted gap order so
/// equal multisets give bit-identical products.
pub fn gap_product(gaps: &[u64], l: &GapRule) -> Result<f64> {
    let mut g = gaps.to_vec();
    g.sort_unstable();
    g.iter().try_fold(1.0, |acc, &n| Ok(acc * l.eval(n)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub plus: f64,
    pub minus: f64,
    /// `max(plus, minus)`.
    pub kappa: f64,
    /// Gap multisets of the direct products.
    pub plus_gaps: Vec<u64>,
    pub minus_gaps: Vec<u64>,
    /// Values from the quotient formulas.
    pub plus_quotient: f64,
    pub minus_quotient: f64,
    /// Both gap multisets coincide with the quotient cancellations.
    pub identity_holds: bool,
}

/// Removes `remove` from `all` as multisets; `None` if not contained.
fn multiset_quotient(all: &[u64], remove: &[u64]) -> Option<Vec<u64>> {
    let mut a = all.to_vec();
    a.sort_unstable();
    let mut r = remove.to_vec();
    r.sort_unstable();
    let mut out = Vec::with_capacity(a.len());
    let mut j = 0;
    for x in a {
        if j < r.len() && r[j] == x {
            j += 1;
        } else {
            match r.get(j) {
                Some(y) if *y < x => return None,
                _ => out.push(x),
            }
        }
    }
    (j == r.len()).then_some(out)
}

/// `kappa+ = prod_{n_j in F+} L(n_j - n_{j-1})` and
/// `kappa- = prod_{n_j in F-} L(n_{j+1} - n_j)`, together with the quotient
/// forms `prod_j L(n_j - n_{j-1}) / prod_atoms L(free gap)`.
pub fn kappa(p: &SocialPartition, t: &TimeTuple, l: &GapRule) -> Result<Kappa> {
    let ff = classify_free_fixed(p, t)?;
    let s = t.len();
    let plus_gaps: Vec<u64> = ff.forward_fixed.iter().map(|&j| t.backward_gap(j)).collect();
    let minus_gaps: Vec<u64> = ff.backward_fixed.iter().map(|&j| t.forward_gap(j)).collect();
    let all: Vec<u64> = (0..s).map(|j| t.backward_gap(j)).collect();
    let plus_free: Vec<u64> = p.atoms.iter().map(|a| t.backward_gap(a[0])).collect();
    let minus_free: Vec<u64> = p.atoms.iter().map(|a| t.forward_gap(*a.last().expect("nonempty"))).collect();
    let plus_q = multiset_quotient(&all, &plus_free)
        .ok_or_else(|| Error::Invalid("forward free gaps are not a sub-multiset".into()))?;
    let minus_q = multiset_quotient(&all, &minus_free)
        .ok_or_else(|| Error::Invalid("backward free gaps are not a sub-multiset".into()))?;
    let sorted = |v: &[u64]| {
        let mut v = v.to_vec();
        v.sort_unstable();
        v
    };
    let identity_holds = sorted(&plus_gaps) == plus_q && sorted(&minus_gaps) == minus_q;
    let plus = gap_product(&plus_gaps, l)?;
    let minus = gap_product(&minus_gaps, l)?;
    Ok(Kappa {
        plus,
        minus,
        kappa: plus.max(minus),
        plus_quotient: gap_product(&plus_q, l)?,
        minus_quotient: gap_product(&minus_q, l)?,
        plus_gaps,
        minus_gaps,
        identity_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaBound {
    /// `(min_P kappa(P))^{-d}`.
    pub bound: f64,
    pub min_kappa: f64,
    /// First minimizer in enumeration order.
    pub minimizer: SocialPartition,
    /// Number of partitions attaining the minimum.
    pub ties: usize,
}

pub fn min_kappa_bound(t: &TimeTuple, l: &GapRule, d: u32) -> Result<KappaBound> {
    if t.len() > MAX_BOUND {
        return Err(Error::OutOfRange(format!("s = {} exceeds {MAX_BOUND}", t.len())));
    }
    let mut best: Option<(f64, SocialPartition, usize)> = None;
    for p in enumerate_social(t.len())? {
        let k = kappa(&p, t, l)?.kappa;
        best = match best {
            None => Some((k, p, 1)),
            Some((b, bp, ties)) => match k.partial_cmp(&b) {
                Some(Ordering::Less) => Some((k, p, 1)),
                Some(Ordering::Equal) => Some((b, bp, ties + 1)),
                _ => Some((b, bp, ties)),
            },
        };
    }
    let (min_kappa, minimizer, ties) = best.expect("every s >= 2 has a social partition");
    Ok(KappaBound { bound: min_kappa.powi(-(d as i32)), min_kappa, minimizer, ties })
}

/// Largest forward and backward steps `(Gamma+, Gamma-)` of a partition.
pub fn gamma_steps(p: &SocialPartition, t: &TimeTuple) -> Result<(u64, u64)> {
    let ff = classify_free_fixed(p, t)?;
    let plus = ff.forward_fixed.iter().map(|&j| t.backward_gap(j)).max().unwrap_or(0);
    let minus = ff.backward_fixed.iter().map(|&j| t.forward_gap(j)).max().unwrap_or(0);
    Ok((plus, minus))
}

/// Forward fixed edges `[n_{j-1}, n_j]` and backward fixed edges
/// `[n_j, n_{j+1}]`, as time intervals.
pub fn fixed_edges(p: &SocialPartition, t: &TimeTuple) -> Result<(Vec<(u64, u64)>, Vec<(u64, u64)>)> {
    let ff = classify_free_fixed(p, t)?;
    let n = t.times();
    let mut fwd: Vec<(u64, u64)> = ff.forward_fixed.iter().map(|&j| (n[j - 1], n[j])).collect();
    let mut bwd: Vec<(u64, u64)> = ff.backward_fixed.iter().map(|&j| (n[j], n[j + 1])).collect();
    fwd.sort_unstable();
    bwd.sort_unstable();
    Ok((fwd, bwd))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingCheck {
    pub m: usize,
    pub pairings: usize,
    pub tuples: usize,
    /// For each non-natural pairing, a tuple on which its edge sets differ.
    pub witnesses: Vec<(SocialPartition, Vec<u64>)>,
    /// Pairings other than the natural one with equal edge sets on some tuple.
    pub counterexamples: Vec<(SocialPartition, Vec<u64>)>,
    pub holds: bool,
}

/// Default grid: strictly increasing tuples with entries below this.
pub const PAIRING_GRID: u64 = 12;

/// Checks over all pairings and all strictly increasing tuples drawn from
/// `0..grid` that equal forward and backward fixed edge sets force the
/// natural pairing.
pub fn natural_pairing_check(m: usize, grid: u64) -> Result<PairingCheck> {
    if m % 2 != 0 || !(2..=MAX_BOUND).contains(&m) {
        return Err(Error::OutOfRange(format!("m = {m}; need even 2 <= m <= {MAX_BOUND}")));
    }
    if grid < m as u64 {
        return Err(Error::Invalid("grid too small for strictly increasing tuples".into()));
    }
    let natural = SocialPartition::natural_pairing(m)?;
    let pairings: Vec<SocialPartition> = enumerate_social(m)?.into_iter().filter(|p| p.is_pairing()).collect();
    let tuples = increasing_tuples(m, grid);
    let mut witnesses = Vec::new();
    let mut counterexamples = Vec::new();
    for p in &pairings {
        if *p == natural {
            continue;
        }
        let mut witness = None;
        for tup in &tuples {
            let t = TimeTuple::new(tup.clone())?;
            let (f, b) = fixed_edges(p, &t)?;
            if f == b {
                counterexamples.push((p.clone(), tup.clone()));
                break;
            }
            if witness.is_none() {
                witness = Some(tup.clone());
            }
        }
        if let Some(w) = witness {
            witnesses.push((p.clone(), w));
        }
    }
    Ok(PairingCheck {
        m,
        pairings: pairings.len(),
        tuples: tuples.len(),
        holds: counterexamples.is_empty(),
        witnesses,
        counterexamples,
    })
}

fn increasing_tuples(m: usize, grid: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(m);
    fn rec(start: u64, m: usize, grid: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for v in start..grid {
            if grid - v < (m - cur.len()) as u64 {
                break;
            }
            cur.push(v);
            rec(v + 1, m, grid, cur, out);
            cur.pop();
        }
    }
    rec(0, m, grid, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(atoms: &[&[usize]]) -> SocialPartition {
        SocialPartition::new(atoms.iter().map(|a| a.to_vec()).collect()).unwrap()
    }

    #[test]
    fn small_enumerations() {
        assert_eq!(enumerate_social(2).unwrap(), vec![p(&[&[0, 1]])]);
        assert_eq!(enumerate_social(3).unwrap(), vec![p(&[&[0, 1, 2]])]);
        let four: Vec<String> = enumerate_social(4).unwrap().iter().map(|x| x.to_string()).collect();
        assert_eq!(four, ["(1 2 3 4)", "(1 2)(3 4)", "(1 3)(2 4)", "(1 4)(2 3)"]);
        assert!(enumerate_social(1).is_err());
        assert!(enumerate_social(11).is_err());
    }

    #[test]
    fn free_fixed_definitions() {
        let t = TimeTuple::new(vec![1, 2, 3, 4]).unwrap();
        let ff = classify_free_fixed(&p(&[&[0, 1], &[2, 3]]), &t).unwrap();
        assert_eq!(ff.forward_free, vec![1, 3]);
        assert_eq!(ff.forward_fixed, vec![1, 3]);
        let t3 = TimeTuple::new(vec![1, 2, 3]).unwrap();
        let ff = classify_free_fixed(&p(&[&[0, 1, 2]]), &t3).unwrap();
        assert_eq!(ff.forward_free, vec![1]);
        assert_eq!(ff.backward_free, vec![3]);
        assert_eq!(ff.forward_fixed, vec![1, 2]);
        assert_eq!(ff.backward_fixed, vec![0, 1]);
    }

    #[test]
    fn pair_kappa_is_l_of_gap() {
        let t = TimeTuple::new(vec![0, 49]).unwrap();
        let k = kappa(&p(&[&[0, 1]]), &t, &GapRule::sqrt()).unwrap();
        assert_eq!(k.plus, 7.0);
        assert!(k.identity_holds);
        assert_eq!(k.plus, k.plus_quotient);
        assert_eq!(k.minus, k.minus_quotient);
    }

    #[test]
    fn equal_gaps_count_fixed_elements() {
        let t = TimeTuple::new(vec![3, 6, 9, 12, 15, 18]).unwrap();
        let l = GapRule::Power { scale: 1.5, exponent: 0.7 };
        for part in enumerate_social(6).unwrap() {
            let k = kappa(&part, &t, &l).unwrap();
            let expected = gap_product(&vec![3; 6 - part.atoms.len()], &l).unwrap();
            assert_eq!(k.plus, expected);
        }
    }

    #[test]
    fn separated_pairs_minimize() {
        let t = TimeTuple::new(vec![0, 1, 10_000, 10_001]).unwrap();
        let b = min_kappa_bound(&t, &GapRule::sqrt(), 1).unwrap();
        assert_eq!(b.minimizer, p(&[&[0, 1], &[2, 3]]));
        assert_eq!(b.bound, 1.0);
    }

    #[test]
    fn undefined_gap_is_an_error() {
        let t = TimeTuple::new(vec![0, 5]).unwrap();
        let l = GapRule::Table { values: vec![1.0, 2.0] };
        assert!(kappa(&p(&[&[0, 1]]), &t, &l).is_err());
    }

    #[test]
    fn pairing_claim_small_cases() {
        let two = natural_pairing_check(2, 6).unwrap();
        assert!(two.holds && two.witnesses.is_empty());
        let four = natural_pairing_check(4, 10).unwrap();
        assert!(four.holds);
        assert_eq!(four.witnesses.len(), 2);
    }
}
