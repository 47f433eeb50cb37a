use std::collections::HashMap;

use liftlab::dist::{parity_biases, statistical_distance, vazirani_check, ProbVector, UniformSubset, VaziraniVariant};
use liftlab::exact::{self, ratio, Rational};
use liftlab::model::CoordSet;
use proptest::prelude::*;

/// `|S|·log q − H∞` straight from the tuples.
fn oracle_deficiency(tuples: &[Vec<u8>], q: usize, s: CoordSet) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
    for t in tuples {
        *counts.entry(s.iter().map(|i| t[i]).collect()).or_default() += 1;
    }
    let max = *counts.values().max().unwrap() as f64;
    s.len() as f64 * (q as f64).log2() + (max / tuples.len() as f64).log2()
}

fn subset_strategy() -> impl Strategy<Value = UniformSubset> {
    (1usize..=4, 2usize..=4).prop_flat_map(|(n, q)| {
        let space = q.pow(n as u32);
        prop::collection::vec(any::<bool>(), space).prop_map(move |keep| {
            let mut pts: Vec<u32> = (0..space as u32).filter(|&p| keep[p as usize]).collect();
            if pts.is_empty() {
                pts.push(0);
            }
            UniformSubset::from_points(n, q, pts).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn deficiency_facts(d in subset_strategy(), event_seed in any::<u64>(), s_mask in any::<u32>(), t_extra in any::<u32>()) {
        let full = CoordSet::full(d.n());
        let s = CoordSet(s_mask).intersect(full);
        let t = s.union(CoordSet(t_extra).intersect(full));
        let dm = d.deficiency_value(s);
        prop_assert!((dm - oracle_deficiency(&d.tuples(), d.alphabet_size(), s)).abs() < 1e-9);
        prop_assert!(dm >= -1e-9);
        prop_assert!(dm <= d.deficiency_value(t) + 1e-9);

        let pick = |p: u32| (p as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ event_seed;
        if let Ok((cond, prob)) = d.condition("event", |p| pick(p) % 3 != 0) {
            prop_assert!(cond.deficiency_value(s) <= dm - exact::log2(&prob) + 1e-9);
            prop_assert_eq!(prob, ratio(cond.len() as u64, d.len() as u64));
        }
    }

    #[test]
    fn statistical_distance_is_a_metric(a in prop::collection::vec(1u64..=9, 4), b in prop::collection::vec(1u64..=9, 4), c in prop::collection::vec(1u64..=9, 4)) {
        let pv = |w: &[u64]| {
            let t: u64 = w.iter().sum();
            ProbVector::new(w.iter().map(|&v| ratio(v, t)).collect()).unwrap()
        };
        let (a, b, c) = (pv(&a), pv(&b), pv(&c));
        let ab = statistical_distance(&a, &b).unwrap();
        prop_assert_eq!(ab.clone(), statistical_distance(&b, &a).unwrap());
        prop_assert!(ab <= statistical_distance(&a, &c).unwrap() + statistical_distance(&c, &b).unwrap());
        prop_assert_eq!(statistical_distance(&a, &a).unwrap(), exact::zero());
    }

    #[test]
    fn parity_bias_of_the_empty_set_is_one(w in prop::collection::vec(0u64..=5, 8)) {
        prop_assume!(w.iter().any(|&v| v > 0));
        let t: u64 = w.iter().sum();
        let z = ProbVector::new(w.iter().map(|&v| ratio(v, t)).collect()).unwrap();
        let b = parity_biases(&z);
        prop_assert_eq!(b[0].clone(), exact::one());
        prop_assert!(b.iter().all(|v| v <= &exact::one()));
    }
}

/// Uniform on `{0,1}^m` plus a small signed perturbation with denominator `2^m·k`.
fn near_uniform(m: usize, k: u64, seed: u64) -> ProbVector {
    let len = 1usize << m;
    let mut probs: Vec<Rational> = vec![ratio(1, len as u64); len];
    let mut state = seed | 1;
    for i in 0..len / 2 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let delta = ratio(state >> 62, len as u64 * k);
        let j = len - 1 - i;
        probs[i] += &delta;
        probs[j] -= &delta;
    }
    ProbVector::new(probs).unwrap()
}

#[test]
fn vazirani_implications_hold_on_constructed_distributions() {
    let mut hypotheses = [0usize; 2];
    for seed in 0..500u64 {
        let m = 1 + (seed % 6) as usize;
        let k = [4u64, 16, 64, 1024][(seed / 6 % 4) as usize];
        let z = near_uniform(m, k, seed);
        for eps in [0.05, 0.25, 0.5] {
            let r = vazirani_check(&z, VaziraniVariant::Pointwise { eps }).unwrap();
            assert!(!r.violated(), "pointwise m={m} k={k} seed={seed} eps={eps}");
            hypotheses[0] += r.hypothesis as usize;
        }
        for t in 1..=m {
            let r = vazirani_check(&z, VaziraniVariant::HighOrder { t }).unwrap();
            assert!(!r.violated(), "high-order m={m} k={k} seed={seed} t={t}");
            hypotheses[1] += r.hypothesis as usize;
        }
    }
    assert!(hypotheses.iter().all(|&h| h > 0), "{hypotheses:?}");
}
