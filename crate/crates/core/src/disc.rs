//! Exact discrepancy and the reduction from product distributions to uniform ones.

use num::bigint::BigInt;
use num::integer::Integer;
use num::{One, Signed, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::exact::{self, ser_real, Rational};
use crate::model::Gadget;

/// Largest alphabet for the column-subset sweep.
pub const MAX_DISC_ALPHABET: usize = 22;
/// Largest alphabet for the canonical-rectangle enumeration.
pub const MAX_CANONICAL_ALPHABET: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    #[serde(serialize_with = "exact::ser_rational")]
    pub disc: Rational,
    /// `log2(1/disc)`.
    #[serde(serialize_with = "ser_real")]
    pub delta: f64,
    pub argmax_rows: Vec<usize>,
    pub argmax_cols: Vec<usize>,
}

impl DiscrepancyReport {
    fn new(disc: Rational, rows: Vec<usize>, cols: Vec<usize>) -> Self {
        let delta = -exact::log2(&disc);
        DiscrepancyReport { disc, delta: if delta == 0.0 { 0.0 } else { delta }, argmax_rows: rows, argmax_cols: cols }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProductDistribution {
    #[serde(serialize_with = "ser_rationals")]
    pub mu_x: Vec<Rational>,
    #[serde(serialize_with = "ser_rationals")]
    pub mu_y: Vec<Rational>,
}

fn ser_rationals<S: serde::Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(exact::format_rational))
}

impl ProductDistribution {
    pub fn new(mu_x: Vec<Rational>, mu_y: Vec<Rational>) -> Result<Self> {
        for (name, mu) in [("mu_x", &mu_x), ("mu_y", &mu_y)] {
            if mu.iter().any(|p| p.is_negative()) {
                return invalid(format!("{name} has a negative entry"));
            }
            let total: Rational = mu.iter().cloned().sum();
            if !total.is_one() {
                return invalid(format!("{name} sums to {}", exact::format_rational(&total)));
            }
        }
        if mu_x.len() != mu_y.len() || mu_x.is_empty() {
            return invalid("mu_x and mu_y must live on the same non-empty alphabet");
        }
        Ok(ProductDistribution { mu_x, mu_y })
    }

    pub fn uniform(q: usize) -> Self {
        let w = vec![exact::ratio(1, q as u64); q];
        ProductDistribution { mu_x: w.clone(), mu_y: w }
    }

    pub fn size(&self) -> usize {
        self.mu_x.len()
    }
}

/// Common-denominator integer form of a rational vector.
fn integer_weights(mu: &[Rational]) -> Result<(Vec<i128>, i128)> {
    let den = mu.iter().fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
    let nums: Option<Vec<i128>> = mu.iter().map(|p| (p.numer() * (&den / p.denom())).to_i128()).collect();
    match (nums, den.to_i128()) {
        (Some(n), Some(d)) if d < 1i128 << 40 => Ok((n, d)),
        _ => Err(LabError::Guard("weight denominators too large for exact enumeration".into())),
    }
}

struct Best {
    value: i128,
    mask: u32,
    positive: bool,
}

fn better(a: &Best, b: &Best) -> bool {
    (a.value, std::cmp::Reverse(a.mask), a.positive) > (b.value, std::cmp::Reverse(b.mask), b.positive)
}

/// Maximum of `|Σ_{A×B} (−1)^{g(u,v)} w(u,v)|` over all rectangles, `w = μ_X ⊗ μ_Y`
/// (uniform when `weights` is `None`).
pub fn disc_exact(g: &Gadget, weights: Option<&ProductDistribution>) -> Result<DiscrepancyReport> {
    let q = g.size();
    if q > MAX_DISC_ALPHABET {
        return Err(LabError::Guard(format!("|Λ| = {q} exceeds {MAX_DISC_ALPHABET}")));
    }
    let (wx, dx, wy, dy) = match weights {
        None => (vec![1i128; q], q as i128, vec![1i128; q], q as i128),
        Some(mu) => {
            if mu.size() != q {
                return invalid("weights live on a different alphabet");
            }
            let (wx, dx) = integer_weights(&mu.mu_x)?;
            let (wy, dy) = integer_weights(&mu.mu_y)?;
            (wx, dx, wy, dy)
        }
    };
    let sign = |u: usize, v: usize| if g.eval(u as u8, v as u8) == 0 { 1i128 } else { -1 };
    let total: u64 = 1 << q;
    let chunk: u64 = 1 << 12;
    let chunks: Vec<u64> = (0..total.div_ceil(chunk)).collect();
    let best = chunks
        .par_iter()
        .map(|&c| {
            let start = c * chunk;
            let end = (start + chunk).min(total);
            let gray = |i: u64| (i ^ (i >> 1)) as u32;
            let mut cols = gray(start);
            let mut colsum: Vec<i128> = (0..q)
                .map(|u| (0..q).filter(|&v| cols >> v & 1 == 1).map(|v| sign(u, v) * wy[v]).sum())
                .collect();
            let mut best = Best { value: -1, mask: 0, positive: true };
            for i in start..end {
                if i > start {
                    let v = i.trailing_zeros() as usize;
                    cols ^= 1 << v;
                    let add = cols >> v & 1 == 1;
                    for (u, cs) in colsum.iter_mut().enumerate() {
                        let d = sign(u, v) * wy[v];
                        *cs += if add { d } else { -d };
                    }
                }
                let (mut pos, mut neg) = (0i128, 0i128);
                for u in 0..q {
                    let r = wx[u] * colsum[u];
                    if r > 0 {
                        pos += r;
                    } else {
                        neg -= r;
                    }
                }
                for (value, positive) in [(pos, true), (neg, false)] {
                    let cand = Best { value, mask: cols, positive };
                    if better(&cand, &best) {
                        best = cand;
                    }
                }
            }
            best
        })
        .reduce(|| Best { value: -1, mask: 0, positive: true }, |a, b| if better(&b, &a) { b } else { a });
    let cols: Vec<usize> = (0..q).filter(|&v| best.mask >> v & 1 == 1).collect();
    let rows: Vec<usize> = (0..q)
        .filter(|&u| {
            let r: i128 = wx[u] * cols.iter().map(|&v| sign(u, v) * wy[v]).sum::<i128>();
            if best.positive {
                r > 0
            } else {
                r < 0
            }
        })
        .collect();
    let disc = Rational::new(BigInt::from(best.value), BigInt::from(dx) * BigInt::from(dy));
    Ok(DiscrepancyReport::new(disc, rows, cols))
}

/// Discrepancy under real-valued product weights (double precision).
pub fn disc_real(g: &Gadget, mu_x: &[f64], mu_y: &[f64]) -> Result<f64> {
    let q = g.size();
    if q > MAX_DISC_ALPHABET || mu_x.len() != q || mu_y.len() != q {
        return invalid("weights must match the alphabet (|Λ| <= 22)");
    }
    let mut best: f64 = 0.0;
    for cols in 0u32..1 << q {
        let (mut pos, mut neg) = (0.0, 0.0);
        for (u, &wx) in mu_x.iter().enumerate() {
            let r: f64 = wx
                * (0..q)
                    .filter(|&v| cols >> v & 1 == 1)
                    .map(|v| if g.eval(u as u8, v as u8) == 0 { mu_y[v] } else { -mu_y[v] })
                    .sum::<f64>();
            if r > 0.0 {
                pos += r;
            } else {
                neg -= r;
            }
        }
        best = best.max(pos).max(neg);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductReduction {
    pub l: usize,
    pub g_prime: Gadget,
    /// `r_A(x′)` for every `x′ ∈ [l]`.
    pub r_a: Vec<usize>,
    pub r_b: Vec<usize>,
    /// The rational distribution the reduction realises.
    pub mu_prime: ProductDistribution,
}

impl ProductReduction {
    /// Preimage sizes `|r_A^{-1}(x)|`.
    pub fn multiplicities(&self) -> (Vec<usize>, Vec<usize>) {
        let q = self.mu_prime.size();
        let count = |r: &[usize]| (0..q).map(|x| r.iter().filter(|&&v| v == x).count()).collect();
        (count(&self.r_a), count(&self.r_b))
    }
}

fn lcd(mu: &ProductDistribution) -> BigInt {
    mu.mu_x.iter().chain(&mu.mu_y).fold(BigInt::one(), |acc, p| acc.lcm(p.denom()))
}

/// Blow-up `g′(x′, y′) = g(r_A x′, r_B y′)` with `|r_A^{-1}(x)| = l·μ_X(x)`.
pub fn reduce_product(g: &Gadget, mu: &ProductDistribution) -> Result<ProductReduction> {
    let q = g.size();
    if mu.size() != q {
        return invalid("distribution lives on a different alphabet");
    }
    let l_big = lcd(mu);
    let l = l_big.to_usize().filter(|&l| l <= 256).ok_or_else(|| {
        LabError::Guard(format!("common denominator {l_big} exceeds 256 copies"))
    })?;
    let expand = |m: &[Rational]| -> Vec<usize> {
        let mut r = Vec::with_capacity(l);
        for (x, p) in m.iter().enumerate() {
            let copies = (p * Rational::from_integer(l_big.clone())).to_integer().to_usize().unwrap();
            r.extend(std::iter::repeat_n(x, copies));
        }
        r
    };
    let r_a = expand(&mu.mu_x);
    let r_b = expand(&mu.mu_y);
    let g_prime = Gadget::matrix(l, |a, b| g.eval(r_a[a] as u8, r_b[b] as u8) as usize)?;
    Ok(ProductReduction { l, g_prime, r_a, r_b, mu_prime: mu.clone() })
}

/// Rounds a real probability vector onto the grid `1/den` for the smallest `den`
/// whose rounded vector is within `eps` in statistical distance.
pub fn round_to_grid(v: &[f64], eps: f64, max_den: u64) -> Result<Vec<Rational>> {
    if v.iter().any(|&p| p.is_nan() || p < 0.0) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 || eps <= 0.0 {
        return invalid("need a real probability vector and eps > 0");
    }
    let largest = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a))).unwrap();
    for den in 1..=max_den {
        let mut k: Vec<i64> = v.iter().map(|&p| (p * den as f64).round() as i64).collect();
        let rest: i64 = k.iter().enumerate().filter(|&(i, _)| i != largest).map(|(_, &c)| c).sum();
        k[largest] = den as i64 - rest;
        if k[largest] < 0 {
            continue;
        }
        let tv: f64 = k.iter().zip(v).map(|(&c, &p)| (c as f64 / den as f64 - p).abs()).sum::<f64>() / 2.0;
        if tv <= eps {
            return Ok(k.into_iter().map(|c| exact::ratio(c as u64, den)).collect());
        }
    }
    Err(LabError::Guard(format!("no grid up to 1/{max_den} within {eps}")))
}

/// Real-weight entry point: rounds with `ε′ = ε/4` and reduces.
pub fn reduce_product_real(g: &Gadget, mu_x: &[f64], mu_y: &[f64], eps: f64) -> Result<ProductReduction> {
    let eps_prime = eps / 4.0;
    let mx = round_to_grid(mu_x, eps_prime, 256)?;
    let my = round_to_grid(mu_y, eps_prime, 256)?;
    reduce_product(g, &ProductDistribution::new(mx, my)?)
}

/// Best rectangle of `g′` among canonical ones `r_A^{-1}(A) × r_B^{-1}(B)`, under
/// product weights on `Λ′` (uniform when `None`).
pub fn canonical_rectangle_opt(red: &ProductReduction, weights: Option<&ProductDistribution>) -> Result<DiscrepancyReport> {
    let q = red.mu_prime.size();
    if q > MAX_CANONICAL_ALPHABET {
        return Err(LabError::Guard(format!("|Λ| = {q} exceeds {MAX_CANONICAL_ALPHABET}")));
    }
    let (wa, da, wb, db) = match weights {
        None => (vec![1i128; red.l], red.l as i128, vec![1i128; red.l], red.l as i128),
        Some(mu) => {
            if mu.size() != red.l {
                return invalid("weights must live on Λ′");
            }
            let (wa, da) = integer_weights(&mu.mu_x)?;
            let (wb, db) = integer_weights(&mu.mu_y)?;
            (wa, da, wb, db)
        }
    };
    let mut big_a = vec![0i128; q];
    let mut big_b = vec![0i128; q];
    for (xp, &x) in red.r_a.iter().enumerate() {
        big_a[x] += wa[xp];
    }
    for (yp, &y) in red.r_b.iter().enumerate() {
        big_b[y] += wb[yp];
    }
    let g = &red.g_prime;
    // Row/column representatives in Λ′ for evaluating g′ on canonical blocks.
    let rep_a: Vec<Option<usize>> = (0..q).map(|x| red.r_a.iter().position(|&v| v == x)).collect();
    let rep_b: Vec<Option<usize>> = (0..q).map(|y| red.r_b.iter().position(|&v| v == y)).collect();
    let mut best = (0i128, 0u32, 0u32);
    for a in 0u32..1 << q {
        for b in 0u32..1 << q {
            let mut sum = 0i128;
            for x in (0..q).filter(|&x| a >> x & 1 == 1) {
                let Some(xp) = rep_a[x] else { continue };
                for y in (0..q).filter(|&y| b >> y & 1 == 1) {
                    let Some(yp) = rep_b[y] else { continue };
                    let w = big_a[x] * big_b[y];
                    sum += if g.eval(xp as u8, yp as u8) == 0 { w } else { -w };
                }
            }
            if sum.abs() > best.0 {
                best = (sum.abs(), a, b);
            }
        }
    }
    let rows = (0..red.l).filter(|&xp| best.1 >> red.r_a[xp] & 1 == 1).collect();
    let cols = (0..red.l).filter(|&yp| best.2 >> red.r_b[yp] & 1 == 1).collect();
    let disc = Rational::new(BigInt::from(best.0), BigInt::from(da) * BigInt::from(db));
    Ok(DiscrepancyReport::new(disc, rows, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ratio;
    use crate::model::{make_gadget, GadgetKind};

    /// Independent oracle: every pair of row and column subsets.
    fn naive(g: &Gadget, mu: &ProductDistribution) -> Rational {
        let q = g.size();
        let mut best = exact::zero();
        for a in 0u32..1 << q {
            for b in 0u32..1 << q {
                let mut s = exact::zero();
                for u in (0..q).filter(|&u| a >> u & 1 == 1) {
                    for v in (0..q).filter(|&v| b >> v & 1 == 1) {
                        let w = &mu.mu_x[u] * &mu.mu_y[v];
                        s += if g.eval(u as u8, v as u8) == 0 { w } else { -w };
                    }
                }
                best = best.max(s.abs());
            }
        }
        best
    }

    fn rect_value(g: &Gadget, r: &DiscrepancyReport, mu: &ProductDistribution) -> Rational {
        let mut s = exact::zero();
        for &u in &r.argmax_rows {
            for &v in &r.argmax_cols {
                let w = &mu.mu_x[u] * &mu.mu_y[v];
                s += if g.eval(u as u8, v as u8) == 0 { w } else { -w };
            }
        }
        s.abs()
    }

    #[test]
    fn small_examples() {
        let c = make_gadget(GadgetKind::Constant(0), 2).unwrap();
        let r = disc_exact(&c, None).unwrap();
        assert_eq!((r.disc.clone(), r.delta), (exact::one(), 0.0));
        let xor = disc_exact(&make_gadget(GadgetKind::Xor, 2).unwrap(), None).unwrap();
        assert_eq!(xor.disc, ratio(1, 4));
        assert!((xor.delta - 2.0).abs() < 1e-12);
        let and = disc_exact(&make_gadget(GadgetKind::And, 2).unwrap(), None).unwrap();
        assert_eq!(and.disc, ratio(1, 2));
        let point = ProductDistribution::new(vec![exact::zero(), exact::one()], vec![exact::one(), exact::zero()]).unwrap();
        let g = make_gadget(GadgetKind::Random { seed: 5 }, 2).unwrap();
        assert_eq!(disc_exact(&g, Some(&point)).unwrap().disc, exact::one());
    }

    #[test]
    fn argmax_rectangle_achieves_the_value() {
        for seed in 0..30 {
            let g = make_gadget(GadgetKind::Random { seed }, 5).unwrap();
            let mu = ProductDistribution::uniform(5);
            let r = disc_exact(&g, None).unwrap();
            assert_eq!(rect_value(&g, &r, &mu), r.disc);
            assert_eq!(naive(&g, &mu), r.disc);
        }
    }

    #[test]
    fn weighted_matches_oracle() {
        let g = make_gadget(GadgetKind::Random { seed: 9 }, 3).unwrap();
        let mu = ProductDistribution::new(
            vec![ratio(1, 2), ratio(1, 3), ratio(1, 6)],
            vec![ratio(1, 5), ratio(0, 1), ratio(4, 5)],
        )
        .unwrap();
        let r = disc_exact(&g, Some(&mu)).unwrap();
        assert_eq!(r.disc, naive(&g, &mu));
        assert_eq!(rect_value(&g, &r, &mu), r.disc);
        let real = disc_real(&g, &[0.5, 1.0 / 3.0, 1.0 / 6.0], &[0.2, 0.0, 0.8]).unwrap();
        assert!((real - exact::to_f64(&r.disc)).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_permutation_and_complement() {
        let g = make_gadget(GadgetKind::Random { seed: 21 }, 4).unwrap();
        let d = disc_exact(&g, None).unwrap().disc;
        assert_eq!(disc_exact(&g.permute(&[2, 0, 3, 1], &[1, 3, 0, 2]), None).unwrap().disc, d);
        assert_eq!(disc_exact(&g.complement(), None).unwrap().disc, d);
        assert_eq!(disc_exact(&g.transpose(), None).unwrap().disc, d);
    }

    #[test]
    fn guard_rejects_large_alphabets() {
        let g = make_gadget(GadgetKind::Constant(1), 23).unwrap();
        assert!(matches!(disc_exact(&g, None), Err(LabError::Guard(_))));
    }

    #[test]
    fn reduction_examples() {
        let and = make_gadget(GadgetKind::And, 2).unwrap();
        let red = reduce_product(&and, &ProductDistribution::uniform(2)).unwrap();
        assert_eq!(red.l, 2);
        assert_eq!(red.g_prime, and);

        let deg = ProductDistribution::new(vec![exact::one(), exact::zero()], vec![exact::one(), exact::zero()]).unwrap();
        let red = reduce_product(&and, &deg).unwrap();
        assert_eq!(red.l, 1);
        assert_eq!(disc_exact(&red.g_prime, None).unwrap().disc, exact::one());
        assert_eq!(canonical_rectangle_opt(&red, None).unwrap().disc, exact::one());

        let mu = ProductDistribution::new(vec![ratio(3, 4), ratio(1, 4)], vec![ratio(1, 2), ratio(1, 2)]).unwrap();
        let red = reduce_product(&and, &mu).unwrap();
        assert_eq!(red.l, 4);
        assert_eq!(red.multiplicities(), (vec![3, 1], vec![2, 2]));
        let blown = disc_exact(&red.g_prime, None).unwrap().disc;
        assert_eq!(blown, disc_exact(&and, Some(&mu)).unwrap().disc);
        assert_eq!(canonical_rectangle_opt(&red, None).unwrap().disc, blown);
    }

    #[test]
    fn grid_rounding_meets_tolerance() {
        let v = [0.3, 0.7 - 1e-3, 1e-3];
        let r = round_to_grid(&v, 0.01, 1000).unwrap();
        let tv: f64 = r.iter().zip(&v).map(|(a, b)| (exact::to_f64(a) - b).abs()).sum::<f64>() / 2.0;
        assert!(tv <= 0.01);
        assert_eq!(r.iter().cloned().sum::<Rational>(), exact::one());

        let g = make_gadget(GadgetKind::Random { seed: 2 }, 3).unwrap();
        let (mx, my) = ([0.21, 0.33, 0.46], [0.5, 0.25, 0.25]);
        let eps = 0.1;
        let red = reduce_product_real(&g, &mx, &my, eps).unwrap();
        let lhs = exact::to_f64(&canonical_rectangle_opt(&red, None).unwrap().disc);
        assert!(lhs <= disc_real(&g, &mx, &my).unwrap() + eps);
    }
}
