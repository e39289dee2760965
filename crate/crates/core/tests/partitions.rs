use std::collections::BTreeSet;

use ttlab_core::partitions::{
    enumerate_social, min_kappa_bound, natural_pairing_check, GapRule, SocialPartition, TimeTuple, PAIRING_GRID,
};

/// Social partitions of `0..s` obtained by canonicalising every labelling map.
fn brute_force(s: usize) -> BTreeSet<Vec<Vec<usize>>> {
    let mut out = BTreeSet::new();
    let total = s.pow(s as u32);
    let mut labels = vec![0; s];
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % s;
            c /= s;
        }
        let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); s];
        for (i, &l) in labels.iter().enumerate() {
            blocks[l].push(i);
        }
        let mut atoms: Vec<Vec<usize>> = blocks.into_iter().filter(|b| !b.is_empty()).collect();
        if atoms.iter().all(|a| a.len() >= 2) {
            atoms.sort();
            out.insert(atoms);
        }
    }
    out
}

#[test]
fn enumeration_matches_brute_force() {
    for s in 2..=7 {
        let ours: BTreeSet<Vec<Vec<usize>>> = enumerate_social(s).unwrap().into_iter().map(|p| p.atoms).collect();
        assert_eq!(ours, brute_force(s), "s = {s}");
    }
}

#[test]
fn counts_follow_the_known_sequence() {
    // set partitions without singletons
    let known = [1usize, 1, 4, 11, 41, 162, 715, 3425, 17722];
    for (s, &k) in (2..=10).zip(&known) {
        let parts = enumerate_social(s).unwrap();
        assert_eq!(parts.len(), k, "s = {s}");
        let distinct: BTreeSet<_> = parts.iter().map(|p| p.atoms.clone()).collect();
        assert_eq!(distinct.len(), k);
    }
    assert!(enumerate_social(11).is_err());
}

#[test]
fn four_point_partitions() {
    let parts: Vec<String> = enumerate_social(4).unwrap().iter().map(|p| p.to_string()).collect();
    let mut parts = parts;
    parts.sort();
    assert_eq!(parts, ["(1 2 3 4)", "(1 2)(3 4)", "(1 3)(2 4)", "(1 4)(2 3)"]);
}

#[test]
fn natural_pairing_is_singled_out_by_fixed_edges() {
    let two = natural_pairing_check(2, PAIRING_GRID).unwrap();
    assert!(two.holds && two.witnesses.is_empty() && two.pairings == 1);

    let four = natural_pairing_check(4, PAIRING_GRID).unwrap();
    assert!(four.holds);
    let mut witnessed: Vec<String> = four.witnesses.iter().map(|(p, _)| p.to_string()).collect();
    witnessed.sort();
    assert_eq!(witnessed, ["(1 3)(2 4)", "(1 4)(2 3)"]);

    for (m, grid) in [(6, PAIRING_GRID), (8, 11)] {
        let r = natural_pairing_check(m, grid).unwrap();
        assert!(r.holds && r.counterexamples.is_empty(), "m = {m}");
        assert_eq!(r.witnesses.len(), r.pairings - 1);
    }
}

fn tuple(gaps: &[u64]) -> TimeTuple {
    let mut acc = 0;
    TimeTuple::new(gaps.iter().map(|g| {
        acc += g;
        acc
    }).collect())
    .unwrap()
}

#[test]
fn kappa_bound_decreases_as_gaps_grow() {
    for l in [GapRule::sqrt(), GapRule::linear()] {
        for s in 2..=6 {
            // every gap vector in {0,1,3}^s, then each coordinate grown in turn
            let base = 3usize.pow(s as u32);
            for code in 0..base {
                let mut c = code;
                let gaps: Vec<u64> = (0..s).map(|_| {
                    let g = [0, 1, 3][c % 3];
                    c /= 3;
                    g
                }).collect();
                let b0 = min_kappa_bound(&tuple(&gaps), &l, 1).unwrap().bound;
                for j in 0..s {
                    let mut grown = gaps.clone();
                    grown[j] += 5;
                    let b1 = min_kappa_bound(&tuple(&grown), &l, 1).unwrap().bound;
                    assert!(b1 <= b0 * (1.0 + 1e-12), "s={s} gaps={gaps:?} j={j}");
                }
            }
        }
    }
}

#[test]
fn separated_pairs_minimise_kappa() {
    let big = 10_000;
    let t = TimeTuple::new(vec![0, 1, big, big + 1]).unwrap();
    let b = min_kappa_bound(&t, &GapRule::sqrt(), 2).unwrap();
    assert_eq!(b.minimizer, SocialPartition::new(vec![vec![0, 1], vec![2, 3]]).unwrap());
    assert!((b.bound - 1.0).abs() < 1e-12);
    let pair = min_kappa_bound(&TimeTuple::new(vec![3, 19]).unwrap(), &GapRule::sqrt(), 2).unwrap();
    assert!((pair.bound - 1.0 / 16.0).abs() < 1e-12);
}
