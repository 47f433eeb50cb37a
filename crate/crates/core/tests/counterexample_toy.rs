use std::collections::HashMap;

use liftlab::counterex::{analytic_verify, build_params, toy_instance_check, toy_params};
use liftlab::exact::ratio;

/// Bits of `v` as a `b`-long string, most significant first.
fn bits(v: usize, b: usize) -> Vec<u8> {
    (0..b).rev().map(|k| (v >> k & 1) as u8).collect()
}

/// Rebuilds the toy support from bit strings: coordinate `i < |I|` must have odd inner
/// product between its top `d` bits and the `i`-th `d`-bit cell of the last coordinate.
fn brute_support(b: usize, d: usize, i_size: usize, n: usize) -> Vec<Vec<usize>> {
    let q = 1usize << b;
    let mut out = Vec::new();
    for idx in 0..q.pow(n as u32) {
        let y: Vec<usize> = (0..n).map(|k| idx / q.pow((n - 1 - k) as u32) % q).collect();
        let last = bits(y[n - 1], b);
        let ok = (0..i_size).all(|i| {
            let head = bits(y[i], b);
            let cell = &last[i * d..(i + 1) * d];
            head[..d].iter().zip(cell).map(|(a, c)| a & c).sum::<u8>() % 2 == 1
        });
        if ok {
            out.push(y);
        }
    }
    out
}

#[test]
fn toy_reports_match_brute_force() {
    for (b, d, i_size, n) in [(4u64, 1u64, 2u64, 3u64), (4, 2, 2, 3), (3, 1, 2, 3), (2, 1, 2, 3)] {
        let r = toy_instance_check(&toy_params(b, d, i_size, n).unwrap()).unwrap();
        let (b, d, i_size, n) = (b as usize, d as usize, i_size as usize, n as usize);
        let support = brute_support(b, d, i_size, n);
        let q = 1usize << b;
        assert_eq!(r.support_size, support.len());
        assert_eq!(r.all_cells_prob, ratio(support.len() as u64, q.pow(n as u32) as u64));
        assert!(r.closed_form_matches);

        let mut last: HashMap<usize, u64> = HashMap::new();
        for y in &support {
            *last.entry(y[n - 1]).or_default() += 1;
        }
        let nonzero: Vec<usize> = (0..q).filter(|&v| (0..i_size).all(|i| bits(v, b)[i * d..(i + 1) * d].contains(&1))).collect();
        assert_eq!(r.nonzero_cell_values, nonzero.len());
        let min_last = nonzero.iter().map(|v| ratio(last.get(v).copied().unwrap_or(0), support.len() as u64)).min().unwrap();
        assert_eq!(r.min_last_prob, min_last);
        assert!(r.last_prob_bound_holds);
        assert!(r.witness_implication_holds);
        assert!(r.zero_prefix_leaking);
        assert!(r.verdict, "({b},{d},{i_size},{n})");
    }
}

#[test]
fn invalid_toy_parameters_are_rejected() {
    assert!(toy_params(4, 3, 2, 3).and_then(|p| toy_instance_check(&p)).is_err());
    assert!(toy_params(4, 1, 2, 2).and_then(|p| toy_instance_check(&p)).is_err());
    assert!(toy_params(9, 1, 2, 3).and_then(|p| toy_instance_check(&p)).is_err());
}

#[test]
fn analytic_chain_holds_for_large_b() {
    for b in [1000u64, 4096, 1_000_000] {
        let r = analytic_verify(&build_params(b).unwrap()).unwrap();
        assert!(r.verdict, "b={b}: {:?}", r.inequalities.iter().filter(|i| !i.holds).map(|i| &i.name).collect::<Vec<_>>());
        assert!(r.delta_lower <= r.delta_upper);
    }
    assert!(build_params(8).is_err());
}
