use liftlab::disc::{canonical_rectangle_opt, disc_exact, reduce_product, ProductDistribution};
use liftlab::exact::{self, ratio, Rational};
use liftlab::model::{make_gadget, Gadget, GadgetKind};
use num::Signed;
use proptest::prelude::*;

/// Every rectangle `A × B`, summed term by term.
fn naive_disc(g: &Gadget, mu: Option<&ProductDistribution>) -> Rational {
    let q = g.size();
    let (wx, wy): (Vec<Rational>, Vec<Rational>) = match mu {
        Some(m) => (m.mu_x.clone(), m.mu_y.clone()),
        None => (vec![ratio(1, q as u64); q], vec![ratio(1, q as u64); q]),
    };
    let mut best = exact::zero();
    for a in 0u32..1 << q {
        for b in 0u32..1 << q {
            let mut s = exact::zero();
            for u in (0..q).filter(|u| a >> u & 1 == 1) {
                for v in (0..q).filter(|v| b >> v & 1 == 1) {
                    let w = &wx[u] * &wy[v];
                    if g.eval(u as u8, v as u8) == 0 {
                        s += w;
                    } else {
                        s -= w;
                    }
                }
            }
            let s = s.abs();
            if s > best {
                best = s;
            }
        }
    }
    best
}

fn gadget_strategy() -> impl Strategy<Value = Gadget> {
    (2usize..=4, any::<u64>()).prop_map(|(q, seed)| make_gadget(GadgetKind::Random { seed }, q).unwrap())
}

fn simplex(q: usize) -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec(1u64..=3, q).prop_map(|w| {
        let total: u64 = w.iter().sum();
        w.into_iter().map(|v| ratio(v, total)).collect()
    })
}

#[test]
fn all_two_by_two_gadgets_match_rectangle_enumeration() {
    for table in 0u32..16 {
        let g = Gadget::from_fn(2, |u, v| (table >> (2 * u + v) & 1) as usize).unwrap();
        assert_eq!(disc_exact(&g, None).unwrap().disc, naive_disc(&g, None), "table {table:04b}");
    }
}

#[test]
fn inner_product_obeys_lindsey_window() {
    for q in [4usize, 8, 16] {
        let width = q.trailing_zeros();
        for d in 1..=width {
            let g = make_gadget(GadgetKind::InnerProduct { prefix: d }, q).unwrap();
            let delta = disc_exact(&g, None).unwrap().delta;
            let d = d as f64;
            assert!(d / 2.0 <= delta + 1e-9 && delta <= d + 1.0 + 1e-9, "q={q} d={d} Δ={delta}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_disc_matches_oracle(g in gadget_strategy()) {
        prop_assert_eq!(disc_exact(&g, None).unwrap().disc, naive_disc(&g, None));
    }

    #[test]
    fn weighted_disc_matches_oracle((g, mx, my) in (2usize..=4).prop_flat_map(|q| (
        any::<u64>().prop_map(move |s| make_gadget(GadgetKind::Random { seed: s }, q).unwrap()),
        simplex(q),
        simplex(q),
    ))) {
        let mu = ProductDistribution::new(mx, my).unwrap();
        prop_assert_eq!(disc_exact(&g, Some(&mu)).unwrap().disc, naive_disc(&g, Some(&mu)));
    }

    #[test]
    fn argmax_rectangle_attains_the_value(g in gadget_strategy()) {
        let r = disc_exact(&g, None).unwrap();
        let q = g.size() as u64;
        let mut s: i64 = 0;
        for &u in &r.argmax_rows {
            for &v in &r.argmax_cols {
                s += if g.eval(u as u8, v as u8) == 0 { 1 } else { -1 };
            }
        }
        prop_assert_eq!(ratio(s.unsigned_abs(), q * q), r.disc);
    }

    #[test]
    fn transpose_and_complement_preserve_disc(g in gadget_strategy()) {
        let d = disc_exact(&g, None).unwrap().disc;
        prop_assert_eq!(disc_exact(&g.transpose(), None).unwrap().disc, d.clone());
        prop_assert_eq!(disc_exact(&g.complement(), None).unwrap().disc, d);
    }

    #[test]
    fn reduction_never_exceeds_weighted_disc((g, mx, my) in (2usize..=4).prop_flat_map(|q| (
        any::<u64>().prop_map(move |s| make_gadget(GadgetKind::Random { seed: s }, q).unwrap()),
        simplex(q),
        simplex(q),
    ))) {
        let mu = ProductDistribution::new(mx, my).unwrap();
        let red = reduce_product(&g, &mu).unwrap();
        let canonical = canonical_rectangle_opt(&red, None).unwrap().disc;
        // Exact rational weights blow up without loss, so the bound is tight.
        prop_assert_eq!(canonical.clone(), disc_exact(&g, Some(&mu)).unwrap().disc);
        if red.l <= 12 {
            prop_assert_eq!(disc_exact(&red.g_prime, None).unwrap().disc, canonical);
        }
    }
}
