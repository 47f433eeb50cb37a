use liftlab::exact::{self, ratio};
use liftlab::model::CoordSet;
use liftlab::safety::{recovery_prob_ok, zx_dist, Analyzer, Context};
use liftlab::suite::{safety_implications, safety_instance};
use proptest::prelude::*;

#[test]
fn classifier_implications_hold_on_seeded_instances() {
    let tally = safety_implications(0..1000).unwrap();
    assert_eq!(tally.violations(), 0, "{tally:?}");
    assert!(tally.exercised(), "{tally:?}");
}

/// `Pr[Y_J = y_J | Z_I = z_I]` by walking the support.
fn conditional(inst: &liftlab::suite::SafetyInstance, j: CoordSet, i: CoordSet, z: &[u8], y_j: &[u8]) -> Option<(u64, u64)> {
    let (mut hits, mut fiber) = (0u64, 0u64);
    for y in inst.y.tuples() {
        let zi: Vec<u8> = i.iter().map(|c| inst.gadget.eval(inst.x[c], y[c])).collect();
        if zi != z {
            continue;
        }
        fiber += 1;
        hits += (j.iter().map(|c| y[c]).collect::<Vec<_>>() == y_j) as u64;
    }
    (fiber > 0).then_some((hits, fiber))
}

#[test]
fn heaviness_matches_conditional_probabilities() {
    let mut checked = 0;
    for seed in 0..300 {
        let Some(inst) = safety_instance(seed).unwrap() else { continue };
        let full = CoordSet::full(inst.y.n());
        let an = Analyzer::new(Context::with_delta(&inst.gadget, &inst.constants, inst.delta), &inst.y, full).unwrap();
        for j in full.nonempty_subsets() {
            for i in full.minus(j).subsets() {
                for zm in 0..1u32 << i.len() {
                    let z: Vec<u8> = (0..i.len()).map(|b| (zm >> b & 1) as u8).collect();
                    let Ok(ws) = an.heaviness(&inst.x, j, i, &z) else {
                        assert!(conditional(&inst, j, i, &z, &[]).is_none());
                        continue;
                    };
                    let mass: liftlab::Rational = ws.iter().map(|w| w.prob.clone()).sum();
                    assert_eq!(mass, exact::one());
                    for w in ws {
                        let (hits, fiber) = conditional(&inst, j, i, &z, &w.y_j).unwrap();
                        assert_eq!(w.prob, ratio(hits, fiber));
                        assert_eq!(w.heavy, w.t > 1e-9);
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn raising_c_only_adds_heavy_values() {
    for seed in 0..200 {
        let Some(inst) = safety_instance(seed).unwrap() else { continue };
        let full = CoordSet::full(inst.y.n());
        let mut loose = inst.constants.clone();
        loose.c *= 4.0;
        let tight = Analyzer::new(Context::with_delta(&inst.gadget, &inst.constants, inst.delta), &inst.y, full).unwrap();
        let wide = Analyzer::new(Context::with_delta(&inst.gadget, &loose, inst.delta), &inst.y, full).unwrap();
        for j in full.nonempty_subsets() {
            let Ok(a) = tight.heaviness(&inst.x, j, CoordSet::EMPTY, &[]) else { continue };
            let b = wide.heaviness(&inst.x, j, CoordSet::EMPTY, &[]).unwrap();
            for (a, b) in a.iter().zip(&b) {
                assert_eq!(a.y_j, b.y_j);
                assert!(b.t >= a.t - 1e-9);
                assert!(!a.heavy || b.heavy);
            }
        }
    }
}

#[test]
fn zx_distribution_sums_to_one() {
    for seed in 0..100 {
        let Some(inst) = safety_instance(seed).unwrap() else { continue };
        let d = zx_dist(&inst.x, &inst.y, &inst.gadget).unwrap();
        assert_eq!(d.into_iter().sum::<liftlab::Rational>(), exact::one());
    }
}

proptest! {
    #[test]
    fn recovery_threshold_agrees_with_direct_comparison(num in 0u64..=1000, exponent in 0.0f64..8.0) {
        let p = ratio(num, 1000);
        let direct = exact::to_f64(&p) >= 1.0 - (-exponent).exp2();
        // Skip the knife edge where the two roundings may disagree.
        let gap = (exact::to_f64(&p) - (1.0 - (-exponent).exp2())).abs();
        prop_assume!(gap > 1e-6);
        prop_assert_eq!(recovery_prob_ok(&p, exponent, false), direct);
        prop_assert_eq!(recovery_prob_ok(&p, exponent, true), direct);
    }
}
