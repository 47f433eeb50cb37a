//! Uniform distributions over explicit subsets of `Λ^n`, with exact probabilities.
//!
//! Points are stored encoded as integers in base `|Λ|` with coordinate 0 most
//! significant, so integer order is lexicographic tuple order.

use std::collections::HashMap;

use num::bigint::BigInt;
use num::{Signed, Zero};
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::exact::{self, ratio, ser_real, Rational};
use crate::model::{CoordSet, Gadget, Restriction};
use crate::TOL;

/// Largest `n` for which subset enumeration is attempted.
pub const MAX_SUBSET_N: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UniformSubset {
    n: usize,
    q: usize,
    points: Vec<u32>,
    pow: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Deficiency {
    #[serde(serialize_with = "ser_real")]
    pub deficiency: f64,
    #[serde(serialize_with = "ser_real")]
    pub min_entropy: f64,
    #[serde(serialize_with = "exact::ser_rational")]
    pub max_prob: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparsityReport {
    pub holds: bool,
    /// Violating set with the largest excess over `σΔ|S|` (ties: smallest mask).
    pub witness: Option<CoordSet>,
    #[serde(serialize_with = "ser_real")]
    pub minimal_sigma: f64,
}

/// Counts of the projection of a support onto `coords`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProjectionTable {
    pub coords: CoordSet,
    pub counts: Vec<(Vec<u8>, u64)>,
    pub total: u64,
}

impl UniformSubset {
    fn powers(n: usize, q: usize) -> Result<Vec<u32>> {
        let total = (q as u64).checked_pow(n as u32).filter(|&t| t <= u32::MAX as u64);
        if total.is_none() {
            return Err(LabError::Guard(format!("|Λ|^n = {q}^{n} does not fit the point encoding")));
        }
        Ok((0..n).map(|i| (q as u32).pow((n - 1 - i) as u32)).collect())
    }

    /// Builds from encoded points; duplicates are merged.
    pub fn from_points(n: usize, q: usize, mut points: Vec<u32>) -> Result<Self> {
        if q < 2 {
            return invalid("alphabet must have at least 2 symbols");
        }
        let pow = Self::powers(n, q)?;
        let space = (q as u64).pow(n as u32);
        points.sort_unstable();
        points.dedup();
        if points.is_empty() {
            return invalid("support must be non-empty");
        }
        if *points.last().unwrap() as u64 >= space {
            return invalid("point outside Λ^n");
        }
        Ok(UniformSubset { n, q, points, pow })
    }

    pub fn from_tuples(n: usize, q: usize, tuples: &[Vec<u8>]) -> Result<Self> {
        let pow = Self::powers(n, q)?;
        let mut pts = Vec::with_capacity(tuples.len());
        for t in tuples {
            if t.len() != n || t.iter().any(|&s| s as usize >= q) {
                return invalid(format!("tuple {t:?} is not in Λ^{n}"));
            }
            pts.push(t.iter().zip(&pow).map(|(&s, &p)| s as u32 * p).sum());
        }
        Self::from_points(n, q, pts)
    }

    pub fn full(n: usize, q: usize) -> Result<Self> {
        Self::powers(n, q)?;
        let space = (q as u64).pow(n as u32);
        if space > 1 << 24 {
            return Err(LabError::Guard(format!("full support of size {space} exceeds 2^24")));
        }
        Self::from_points(n, q, (0..space as u32).collect())
    }

    pub fn point_mass(n: usize, q: usize, x: &[u8]) -> Result<Self> {
        Self::from_tuples(n, q, &[x.to_vec()])
    }

    /// Parses `support v1`, `lambda=<q>`, `n=<n>`, then either `full` or one tuple per
    /// line as whitespace-separated symbols.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, m: &str| LabError::Parse { line, message: m.into() };
        match lines.next() {
            Some((_, "support v1")) => {}
            Some((i, _)) => return Err(err(i, "expected header `support v1`")),
            None => return Err(err(1, "empty support file")),
        }
        let mut field = |name: &str| -> Result<usize> {
            let (i, l) = lines.next().ok_or_else(|| err(0, &format!("missing `{name}=` line")))?;
            l.strip_prefix(name)
                .and_then(|r| r.strip_prefix('='))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| err(i, &format!("expected `{name}=<number>`")))
        };
        let q = field("lambda")?;
        let n = field("n")?;
        if !(2..=256).contains(&q) || n == 0 {
            return invalid("support needs 2 <= lambda <= 256 and n >= 1");
        }
        let rest: Vec<(usize, &str)> = lines.collect();
        if rest.len() == 1 && rest[0].1 == "full" {
            return Self::full(n, q);
        }
        let mut tuples = Vec::with_capacity(rest.len());
        for (i, l) in rest {
            let t = l
                .split_whitespace()
                .map(|v| v.parse::<u8>().ok().filter(|&s| (s as usize) < q))
                .collect::<Option<Vec<u8>>>()
                .filter(|t| t.len() == n)
                .ok_or_else(|| err(i, &format!("expected {n} symbols below {q}")))?;
            tuples.push(t);
        }
        Self::from_tuples(n, q, &tuples)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("support v1\nlambda={}\nn={}\n", self.q, self.n);
        for t in self.tuples() {
            let syms: Vec<String> = t.iter().map(u8::to_string).collect();
            s.push_str(&syms.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.q
    }

    pub fn b(&self) -> f64 {
        (self.q as f64).log2()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[u32] {
        &self.points
    }

    #[inline]
    pub fn digit(&self, p: u32, i: usize) -> u8 {
        ((p / self.pow[i]) % self.q as u32) as u8
    }

    pub fn decode(&self, p: u32) -> Vec<u8> {
        (0..self.n).map(|i| self.digit(p, i)).collect()
    }

    pub fn encode(&self, x: &[u8]) -> u32 {
        x.iter().zip(&self.pow).map(|(&s, &p)| s as u32 * p).sum()
    }

    pub fn contains(&self, x: &[u8]) -> bool {
        self.points.binary_search(&self.encode(x)).is_ok()
    }

    pub fn tuples(&self) -> Vec<Vec<u8>> {
        self.points.iter().map(|&p| self.decode(p)).collect()
    }

    /// Projection of `p` onto `s`, encoded lexicographically in the coordinates of `s`.
    #[inline]
    pub fn key(&self, p: u32, s: CoordSet) -> u32 {
        s.iter().fold(0, |k, i| k * self.q as u32 + self.digit(p, i) as u32)
    }

    /// Decodes a projection key of `s` back into symbols (in the order of `s`).
    pub fn key_symbols(&self, key: u32, s: CoordSet) -> Vec<u8> {
        let m = s.len();
        let mut out = vec![0u8; m];
        let mut k = key;
        for j in (0..m).rev() {
            out[j] = (k % self.q as u32) as u8;
            k /= self.q as u32;
        }
        out
    }

    /// Key of the tuple `vals` (listed in the order of `s`).
    pub fn symbols_key(&self, vals: &[u8]) -> u32 {
        vals.iter().fold(0, |k, &v| k * self.q as u32 + v as u32)
    }

    /// `(key, count)` pairs of the projection onto `s`, sorted by key.
    pub fn projection_counts(&self, s: CoordSet) -> Vec<(u32, u64)> {
        let cells = (self.q as u64).saturating_pow(s.len() as u32);
        if cells <= (1 << 16).max(4 * self.points.len() as u64) {
            let mut dense = vec![0u64; cells as usize];
            for &p in &self.points {
                dense[self.key(p, s) as usize] += 1;
            }
            dense
                .into_iter()
                .enumerate()
                .filter(|(_, c)| *c > 0)
                .map(|(k, c)| (k as u32, c))
                .collect()
        } else {
            let mut m: HashMap<u32, u64> = HashMap::new();
            for &p in &self.points {
                *m.entry(self.key(p, s)).or_default() += 1;
            }
            let mut v: Vec<_> = m.into_iter().collect();
            v.sort_unstable();
            v
        }
    }

    pub fn projection(&self, s: CoordSet) -> ProjectionTable {
        let counts = self
            .projection_counts(s)
            .into_iter()
            .map(|(k, c)| (self.key_symbols(k, s), c))
            .collect();
        ProjectionTable { coords: s, counts, total: self.len() as u64 }
    }

    pub fn max_count(&self, s: CoordSet) -> u64 {
        if s.is_empty() {
            return self.len() as u64;
        }
        self.projection_counts(s).iter().map(|&(_, c)| c).max().unwrap_or(0)
    }

    /// `Dm(D_S) = |S|·log|Λ| − H∞(D_S)`.
    pub fn deficiency(&self, s: CoordSet) -> Deficiency {
        if s.is_empty() {
            return Deficiency { deficiency: 0.0, min_entropy: 0.0, max_prob: exact::one() };
        }
        let mc = self.max_count(s);
        let max_prob = ratio(mc, self.len() as u64);
        let min_entropy = (self.len() as f64).log2() - (mc as f64).log2();
        Deficiency { deficiency: s.len() as f64 * self.b() - min_entropy, min_entropy, max_prob }
    }

    pub fn deficiency_value(&self, s: CoordSet) -> f64 {
        if s.is_empty() {
            return 0.0;
        }
        s.len() as f64 * self.b() + (self.max_count(s) as f64).log2() - (self.len() as f64).log2()
    }

    /// Sparsity of the projection onto `scope`: every non-empty `S ⊆ scope` has
    /// `Dm(D_S) ≤ σΔ|S|`.
    pub fn sparsity_on(&self, scope: CoordSet, sigma: f64, delta: f64) -> Result<SparsityReport> {
        if scope.len() > MAX_SUBSET_N {
            return Err(LabError::Guard(format!("subset enumeration over {} coordinates", scope.len())));
        }
        if delta <= 0.0 {
            return invalid("sparsity needs Δ > 0");
        }
        let mut witness: Option<(f64, CoordSet)> = None;
        let mut minimal_sigma: f64 = 0.0;
        for s in scope.nonempty_subsets() {
            let d = self.deficiency_value(s);
            let size = s.len() as f64;
            minimal_sigma = minimal_sigma.max(d / (delta * size));
            let excess = d - sigma * delta * size;
            if excess > TOL && witness.is_none_or(|(e, _)| excess > e) {
                witness = Some((excess, s));
            }
        }
        Ok(SparsityReport {
            holds: witness.is_none(),
            witness: witness.map(|(_, s)| s),
            minimal_sigma,
        })
    }

    pub fn is_sparse(&self, sigma: f64, delta: f64) -> Result<SparsityReport> {
        self.sparsity_on(CoordSet::full(self.n), sigma, delta)
    }

    /// `max_S Dm(D_S) / (Δ|S|)` over non-empty `S ⊆ scope`; 0 for an empty scope.
    pub fn minimal_sigma_on(&self, scope: CoordSet, delta: f64) -> Result<f64> {
        Ok(self.sparsity_on(scope, 0.0, delta)?.minimal_sigma)
    }

    /// Keeps the points satisfying `pred`; fails on an empty event.
    pub fn condition(&self, description: &str, pred: impl Fn(u32) -> bool) -> Result<(UniformSubset, Rational)> {
        let kept: Vec<u32> = self.points.iter().copied().filter(|&p| pred(p)).collect();
        if kept.is_empty() {
            return Err(LabError::EmptyEvent(description.to_string()));
        }
        let prob = ratio(kept.len() as u64, self.len() as u64);
        Ok((UniformSubset { n: self.n, q: self.q, points: kept, pow: self.pow.clone() }, prob))
    }

    /// [`condition`](Self::condition) with the predicate on decoded tuples.
    pub fn condition_tuples(&self, description: &str, pred: impl Fn(&[u8]) -> bool) -> Result<(UniformSubset, Rational)> {
        self.condition(description, |p| pred(&self.decode(p)))
    }

    /// Points with `x_s = vals`.
    pub fn condition_on_values(&self, s: CoordSet, vals: &[u8]) -> Result<(UniformSubset, Rational)> {
        let key = self.symbols_key(vals);
        self.condition(&format!("X_{s} = {vals:?}"), |p| self.key(p, s) == key)
    }

    /// Support restricted to an explicit subset of its own points.
    pub fn with_points(&self, points: Vec<u32>) -> Result<UniformSubset> {
        Self::from_points(self.n, self.q, points)
    }

    pub fn to_prob_vector(&self) -> ProbVector {
        let space = (self.q as u64).pow(self.n as u32) as usize;
        let mut probs = vec![Rational::zero(); space];
        let w = ratio(1, self.len() as u64);
        for &p in &self.points {
            probs[p as usize] = w.clone();
        }
        ProbVector { probs }
    }
}

/// Explicit distribution over `0..len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbVector {
    pub probs: Vec<Rational>,
}

impl ProbVector {
    pub fn new(probs: Vec<Rational>) -> Result<Self> {
        if probs.iter().any(|p| p.is_negative()) {
            return invalid("negative probability");
        }
        let total: Rational = probs.iter().cloned().sum();
        if total != exact::one() {
            return invalid(format!("probabilities sum to {}", exact::format_rational(&total)));
        }
        Ok(ProbVector { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max_prob(&self) -> Rational {
        self.probs.iter().max().cloned().unwrap_or_else(Rational::zero)
    }
}

/// Half-L1 distance of two explicit distributions over the same space.
pub fn statistical_distance(a: &ProbVector, b: &ProbVector) -> Result<Rational> {
    if a.len() != b.len() {
        return invalid(format!("sample spaces differ: {} vs {}", a.len(), b.len()));
    }
    let l1: Rational = a.probs.iter().zip(&b.probs).map(|(p, q)| (p - q).abs()).sum();
    Ok(l1 / exact::int(2))
}

/// Statistical distance of two uniform supports in the same `Λ^n`.
pub fn support_distance(a: &UniformSubset, b: &UniformSubset) -> Result<Rational> {
    if a.n != b.n || a.q != b.q {
        return invalid("supports live in different spaces");
    }
    let (wa, wb) = (ratio(1, a.len() as u64), ratio(1, b.len() as u64));
    let both = a.points.iter().filter(|p| b.points.binary_search(p).is_ok()).count() as u64;
    let only_a = a.len() as u64 - both;
    let only_b = b.len() as u64 - both;
    let l1 = &wa * exact::int(only_a as i64)
        + &wb * exact::int(only_b as i64)
        + (&wa - &wb).abs() * exact::int(both as i64);
    Ok(l1 / exact::int(2))
}

fn signed_counts(y: &UniformSubset, s: CoordSet) -> Vec<(Vec<u8>, u64)> {
    y.projection_counts(s).into_iter().map(|(k, c)| (y.key_symbols(k, s), c)).collect()
}

/// Exact `|Pr[V=0] − Pr[V=1]|` for `V = g^{⊕S}(x_S, Y_S)`.
pub fn xor_bias_point(x: &[u8], y: &UniformSubset, g: &Gadget, s: CoordSet) -> Result<Rational> {
    if s.is_empty() {
        return invalid("bias of the empty parity");
    }
    if x.len() != y.n() {
        return invalid("x has the wrong length");
    }
    let xs: Vec<u8> = s.iter().map(|i| x[i]).collect();
    let mut diff: i64 = 0;
    for (ys, c) in signed_counts(y, s) {
        let par = xs.iter().zip(&ys).fold(0, |a, (&u, &v)| a ^ g.eval(u, v));
        diff += if par == 0 { c as i64 } else { -(c as i64) };
    }
    Ok(Rational::new(BigInt::from(diff.abs()), BigInt::from(y.len())))
}

/// Exact bias of `g^{⊕S}(X_S, Y_S)` for independent `X`, `Y`.
pub fn xor_bias_dist(x: &UniformSubset, y: &UniformSubset, g: &Gadget, s: CoordSet) -> Result<Rational> {
    if s.is_empty() {
        return invalid("bias of the empty parity");
    }
    let xc = signed_counts(x, s);
    let yc = signed_counts(y, s);
    let mut diff: i128 = 0;
    for (xs, cx) in &xc {
        for (ys, cy) in &yc {
            let par = xs.iter().zip(ys).fold(0, |a, (&u, &v)| a ^ g.eval(u, v));
            let w = (*cx as i128) * (*cy as i128);
            diff += if par == 0 { w } else { -w };
        }
    }
    Ok(Rational::new(BigInt::from(diff.abs()), BigInt::from(x.len() as u128 * y.len() as u128)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuredReport {
    pub holds: bool,
    pub consistent: bool,
    pub x_sparse: bool,
    pub y_sparse: bool,
    #[serde(serialize_with = "ser_real")]
    pub x_minimal_sigma: f64,
    #[serde(serialize_with = "ser_real")]
    pub y_minimal_sigma: f64,
    pub failing_clause: Option<String>,
}

/// `(ρ, σX, σY)`-structure: g-consistency on `fix(ρ)` and sparsity on `free(ρ)`.
#[allow(clippy::too_many_arguments)]
pub fn structured_check(
    x: &UniformSubset,
    y: &UniformSubset,
    rho: &Restriction,
    g: &Gadget,
    sigma_x: f64,
    sigma_y: f64,
    delta: f64,
) -> Result<StructuredReport> {
    if x.n() != rho.n() || y.n() != rho.n() {
        return invalid("restriction length differs from n");
    }
    let fix = rho.fixed();
    let target: Vec<u8> = fix.iter().map(|i| rho.get(i).unwrap()).collect();
    let xc = signed_counts(x, fix);
    let yc = signed_counts(y, fix);
    let consistent = xc.iter().all(|(xs, _)| {
        yc.iter().all(|(ys, _)| xs.iter().zip(ys).zip(&target).all(|((&u, &v), &t)| g.eval(u, v) == t))
    });
    let free = rho.free();
    let xs = x.sparsity_on(free, sigma_x, delta)?;
    let ys = y.sparsity_on(free, sigma_y, delta)?;
    let failing_clause = if !consistent {
        Some("consistency on fixed coordinates".to_string())
    } else if !xs.holds {
        Some(format!("X not sparse on free coordinates (witness {})", xs.witness.unwrap()))
    } else if !ys.holds {
        Some(format!("Y not sparse on free coordinates (witness {})", ys.witness.unwrap()))
    } else {
        None
    };
    Ok(StructuredReport {
        holds: failing_clause.is_none(),
        consistent,
        x_sparse: xs.holds,
        y_sparse: ys.holds,
        x_minimal_sigma: xs.minimal_sigma,
        y_minimal_sigma: ys.minimal_sigma,
        failing_clause,
    })
}

/// Parity biases `|E[(-1)^{⟨S,Z⟩}]|` for every `S ⊆ [m]`, indexed by mask.
pub fn parity_biases(z: &ProbVector) -> Vec<Rational> {
    let mut f = z.probs.clone();
    let len = f.len();
    let mut h = 1;
    while h < len {
        for i in (0..len).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (f[j].clone(), f[j + h].clone());
                f[j] = &a + &b;
                f[j + h] = a - b;
            }
        }
        h *= 2;
    }
    f.into_iter().map(|v| v.abs()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VaziraniVariant {
    /// Small biases `≤ ε(2m)^{-|S|}` give pointwise closeness `(1±ε)2^{-m}`.
    Pointwise { eps: f64 },
    /// Small biases on all `|S| ≥ t` give `Dm(Z) ≤ t·log m + 1`.
    HighOrder { t: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ImplicationCheck {
    pub hypothesis: bool,
    pub conclusion: bool,
}

impl ImplicationCheck {
    pub fn violated(&self) -> bool {
        self.hypothesis && !self.conclusion
    }
}

pub fn vazirani_check(z: &ProbVector, variant: VaziraniVariant) -> Result<ImplicationCheck> {
    let len = z.len();
    if len < 2 || !len.is_power_of_two() {
        return invalid("Z must be a distribution on {0,1}^m with m >= 1");
    }
    let m = len.trailing_zeros() as usize;
    let biases = parity_biases(z);
    let uniform = 1.0 / len as f64;
    match variant {
        VaziraniVariant::Pointwise { eps } => {
            let hypothesis = (1..len).all(|s| {
                let k = (s as u32).count_ones() as i32;
                exact::to_f64(&biases[s]) <= eps * (2.0 * m as f64).powi(-k) + TOL
            });
            let conclusion = z.probs.iter().all(|p| {
                let p = exact::to_f64(p);
                p >= (1.0 - eps) * uniform - TOL && p <= (1.0 + eps) * uniform + TOL
            });
            Ok(ImplicationCheck { hypothesis, conclusion })
        }
        VaziraniVariant::HighOrder { t } => {
            if t == 0 {
                return invalid("t must be at least 1");
            }
            let hypothesis = (1..len).filter(|s| (*s as u32).count_ones() as usize >= t).all(|s| {
                let k = (s as u32).count_ones() as i32;
                exact::to_f64(&biases[s]) <= (2.0 * m as f64).powi(-k) + TOL
            });
            let dm = m as f64 + exact::log2(&z.max_prob());
            let conclusion = dm <= t as f64 * (m as f64).log2() + 1.0 + TOL;
            Ok(ImplicationCheck { hypothesis, conclusion })
        }
    }
}

/// `Σ_{S ⊆ [n], |S| ≥ l} β^{|S|} n^{-|S|}` against `2β^l`.
pub fn binomial_sum_bound(beta: f64, l: f64, n: usize) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta <= 1.0) || l < 1.0 || n == 0 {
        return invalid("need 0 < β ≤ 1, l ≥ 1 and n ≥ 1");
    }
    let mut lhs = 0.0;
    let mut binom = 1.0f64;
    for s in 0..=n {
        if s > 0 {
            binom = binom * (n - s + 1) as f64 / s as f64;
        }
        if s as f64 >= l - TOL {
            lhs += binom * (beta / n as f64).powi(s as i32);
        }
    }
    Ok((lhs, 2.0 * beta.powf(l)))
}

/// Distribution of `g^I(X_I, Y_I)` over `{0,1}^I`, indexed by the mask over positions of `I`.
pub fn block_output_counts(x: &UniformSubset, y: &UniformSubset, g: &Gadget, s: CoordSet) -> Vec<u128> {
    let xc = signed_counts(x, s);
    let yc = signed_counts(y, s);
    let mut out = vec![0u128; 1 << s.len()];
    for (xs, cx) in &xc {
        for (ys, cy) in &yc {
            let z = xs.iter().zip(ys).enumerate().fold(0usize, |m, (j, (&u, &v))| m | (g.eval(u, v) as usize) << j);
            out[z] += *cx as u128 * *cy as u128;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiplicativeReport {
    pub precondition_holds: bool,
    pub all_within: bool,
    /// Ratio `Pr[z_I]·2^{|I|}` farthest from 1.
    #[serde(serialize_with = "ser_real")]
    pub worst_ratio: f64,
    #[serde(serialize_with = "ser_real")]
    pub bound: f64,
}

/// Checks `Pr[g^I(X_I,Y_I) = z_I] ∈ (1 ± 2^{-γΔ})·2^{-|I|}` for `I = free(ρ)`.
#[allow(clippy::too_many_arguments)]
pub fn multiplicative_uniformity_check(
    x: &UniformSubset,
    y: &UniformSubset,
    rho: &Restriction,
    g: &Gadget,
    gamma: f64,
    c: f64,
    delta: f64,
) -> Result<MultiplicativeReport> {
    let free = rho.free();
    let structure = structured_check(x, y, rho, g, f64::INFINITY, f64::INFINITY, delta)?;
    let precondition_holds = structure.consistent
        && structure.x_minimal_sigma + structure.y_minimal_sigma <= 1.0 - 8.0 / c - gamma + TOL;
    let counts = block_output_counts(x, y, g, free);
    let total = x.len() as f64 * y.len() as f64;
    let bound = 2f64.powf(-gamma * delta);
    let mut worst_ratio = 1.0;
    for &cnt in &counts {
        let r = cnt as f64 / total * counts.len() as f64;
        if (r - 1.0).abs() > (worst_ratio - 1.0f64).abs() {
            worst_ratio = r;
        }
    }
    let all_within = (worst_ratio - 1.0).abs() <= bound + TOL;
    Ok(MultiplicativeReport { precondition_holds, all_within, worst_ratio, bound })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalsReport {
    pub precondition_holds: bool,
    #[serde(serialize_with = "exact::ser_rational")]
    pub tv_x: Rational,
    #[serde(serialize_with = "exact::ser_rational")]
    pub tv_y: Rational,
    #[serde(serialize_with = "ser_real")]
    pub bound: f64,
    pub fiber_size: u64,
}

/// Marginals of the uniform distribution over `(g^n)^{-1}(z) ∩ (X × Y)` against `X`, `Y`.
#[allow(clippy::too_many_arguments)]
pub fn uniform_marginals_check(
    x: &UniformSubset,
    y: &UniformSubset,
    rho: &Restriction,
    g: &Gadget,
    z: &[u8],
    gamma: f64,
    c: f64,
    delta: f64,
) -> Result<MarginalsReport> {
    let n = x.n();
    if z.len() != n || y.n() != n || rho.n() != n {
        return invalid("z, ρ, X and Y must share n");
    }
    if !rho.consistent_with(z) {
        return invalid("z is inconsistent with ρ");
    }
    let structure = structured_check(x, y, rho, g, f64::INFINITY, f64::INFINITY, delta)?;
    let precondition_holds = structure.consistent
        && structure.x_minimal_sigma + structure.y_minimal_sigma <= 1.0 - 10.0 / c - gamma + TOL;
    let xt = x.tuples();
    let yt = y.tuples();
    let hits = |a: &[u8], b: &[u8]| (0..n).all(|i| g.eval(a[i], b[i]) == z[i]);
    let mut x_cnt = vec![0u64; xt.len()];
    let mut y_cnt = vec![0u64; yt.len()];
    for (i, a) in xt.iter().enumerate() {
        for (j, b) in yt.iter().enumerate() {
            if hits(a, b) {
                x_cnt[i] += 1;
                y_cnt[j] += 1;
            }
        }
    }
    let fiber: u64 = x_cnt.iter().sum();
    if fiber == 0 {
        return Err(LabError::EmptyFiber(crate::model::bits_to_string(z)));
    }
    let tv = |cnts: &[u64]| -> Rational {
        let w = ratio(1, cnts.len() as u64);
        let l1: Rational = cnts.iter().map(|&c| (&w - ratio(c, fiber)).abs()).sum();
        l1 / exact::int(2)
    };
    Ok(MarginalsReport {
        precondition_holds,
        tv_x: tv(&x_cnt),
        tv_y: tv(&y_cnt),
        bound: 2f64.powf(-gamma * delta),
        fiber_size: fiber,
    })
}

/// Discrepancy-to-XOR lemma: `Dm(X_S) + Dm(Y_S) ≤ (Δ − 6 − λ)|S|` forces bias `≤ 2^{-λ|S|}`.
pub fn xor_lemma_check(
    x: &UniformSubset,
    y: &UniformSubset,
    g: &Gadget,
    s: CoordSet,
    delta: f64,
    lambda: f64,
) -> Result<ImplicationCheck> {
    let k = s.len() as f64;
    let hypothesis = x.deficiency_value(s) + y.deficiency_value(s) <= (delta - 6.0 - lambda) * k + TOL;
    let bias = exact::to_f64(&xor_bias_dist(x, y, g, s)?);
    Ok(ImplicationCheck { hypothesis, conclusion: bias <= 2f64.powf(-lambda * k) + TOL })
}

/// Sampling form: under `Dm(X_S) + Dm(Y_S) ≤ (Δ − 7 − γ − λ)|S|`, the mass of `x`
/// with bias above `2^{-λ|S|}` is below `2^{-γ|S|}`.
#[allow(clippy::too_many_arguments)]
pub fn xor_sampling_check(
    x: &UniformSubset,
    y: &UniformSubset,
    g: &Gadget,
    s: CoordSet,
    delta: f64,
    gamma: f64,
    lambda: f64,
) -> Result<ImplicationCheck> {
    let k = s.len() as f64;
    let hypothesis = x.deficiency_value(s) + y.deficiency_value(s) <= (delta - 7.0 - gamma - lambda) * k + TOL;
    let thr = 2f64.powf(-lambda * k);
    let mut bad = 0u64;
    for t in x.tuples() {
        if exact::to_f64(&xor_bias_point(&t, y, g, s)?) > thr + TOL {
            bad += 1;
        }
    }
    let mass = bad as f64 / x.len() as f64;
    Ok(ImplicationCheck { hypothesis, conclusion: mass < 2f64.powf(-gamma * k) + TOL })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gadget, GadgetKind};

    fn bits(n: usize) -> UniformSubset {
        UniformSubset::full(n, 2).unwrap()
    }

    #[test]
    fn support_text_round_trips() {
        let d = UniformSubset::from_tuples(2, 3, &[vec![0, 2], vec![1, 1]]).unwrap();
        assert_eq!(UniformSubset::parse(&d.to_text()).unwrap(), d);
        assert_eq!(UniformSubset::parse("support v1\nlambda=2\nn=2\nfull\n").unwrap(), bits(2));
        assert!(UniformSubset::parse("support v1\nlambda=2\nn=2\n0 2\n").is_err());
        assert!(UniformSubset::parse("support v2\n").is_err());
    }

    #[test]
    fn deficiency_examples() {
        let full = UniformSubset::full(3, 3).unwrap();
        for s in CoordSet::full(3).subsets() {
            assert!(full.deficiency(s).deficiency.abs() < 1e-12);
        }
        let pt = UniformSubset::point_mass(2, 4, &[1, 3]).unwrap();
        assert!((pt.deficiency(CoordSet::full(2)).deficiency - 4.0).abs() < 1e-12);
        let two = UniformSubset::from_tuples(1, 4, &[vec![0], vec![1]]).unwrap();
        let d = two.deficiency(CoordSet::single(0));
        assert!((d.deficiency - 1.0).abs() < 1e-12);
        assert_eq!(d.max_prob, ratio(1, 2));
        let e = two.deficiency(CoordSet::EMPTY);
        assert_eq!((e.deficiency, e.min_entropy, e.max_prob), (0.0, 0.0, exact::one()));
    }

    #[test]
    fn sparsity_examples() {
        let full = bits(3);
        let r = full.is_sparse(0.0, 2.0).unwrap();
        assert!(r.holds && r.minimal_sigma == 0.0);

        let pt = UniformSubset::point_mass(2, 2, &[0, 1]).unwrap();
        let r = pt.is_sparse(0.1, 2.0).unwrap();
        assert!(!r.holds);
        assert_eq!(r.witness.unwrap().len(), 2);
        assert!((r.minimal_sigma - 0.5).abs() < 1e-12);

        let three = UniformSubset::from_tuples(2, 2, &[vec![0, 0], vec![0, 1], vec![1, 0]]).unwrap();
        let delta = 2.0;
        // Each singleton has max prob 2/3, the pair 1/3.
        let single = (4.0f64 / 3.0).log2();
        let pair = 2.0 - 3f64.log2();
        let want = (single / delta).max(pair / (2.0 * delta));
        let r = three.is_sparse(0.0, delta).unwrap();
        assert!((r.minimal_sigma - want).abs() < 1e-12);
    }

    #[test]
    fn conditioning_examples() {
        let d = bits(2);
        let (same, p) = d.condition("true", |_| true).unwrap();
        assert_eq!((same.len(), p), (4, exact::one()));
        let (half, p) = d.condition_tuples("z1=0", |t| t[0] == 0).unwrap();
        assert_eq!((half.len(), p), (2, ratio(1, 2)));
        let err = d.condition("never", |_| false).unwrap_err();
        assert!(matches!(err, LabError::EmptyEvent(ref m) if m == "never"));
    }

    #[test]
    fn bias_examples() {
        let xor = make_gadget(GadgetKind::Xor, 2).unwrap();
        let and = make_gadget(GadgetKind::And, 2).unwrap();
        let full = bits(2);
        for s in CoordSet::full(2).nonempty_subsets() {
            assert!(xor_bias_dist(&full, &full, &xor, s).unwrap().is_zero());
        }
        let y = bits(1);
        assert_eq!(xor_bias_point(&[0], &y, &and, CoordSet::single(0)).unwrap(), exact::one());
        assert!(xor_bias_point(&[1], &y, &and, CoordSet::single(0)).unwrap().is_zero());
        assert!(xor_bias_point(&[1], &y, &and, CoordSet::EMPTY).is_err());
    }

    #[test]
    fn statistical_distance_examples() {
        let a = ProbVector::new(vec![ratio(1, 2), ratio(1, 2)]).unwrap();
        let b = ProbVector::new(vec![exact::one(), exact::zero()]).unwrap();
        let c = ProbVector::new(vec![exact::zero(), exact::one()]).unwrap();
        assert!(statistical_distance(&a, &a).unwrap().is_zero());
        assert_eq!(statistical_distance(&b, &c).unwrap(), exact::one());
        assert_eq!(statistical_distance(&a, &b).unwrap(), ratio(1, 2));
        let short = ProbVector::new(vec![exact::one()]).unwrap();
        assert!(statistical_distance(&a, &short).is_err());
        let u = bits(2);
        let (h, _) = u.condition_tuples("x0=0", |t| t[0] == 0).unwrap();
        assert_eq!(support_distance(&u, &h).unwrap(), statistical_distance(&u.to_prob_vector(), &h.to_prob_vector()).unwrap());
    }

    #[test]
    fn structured_examples() {
        let xor = make_gadget(GadgetKind::Xor, 2).unwrap();
        let full = bits(2);
        let free = Restriction::free_all(2);
        assert!(structured_check(&full, &full, &free, &xor, 0.0, 0.0, 2.0).unwrap().holds);
        let rho = Restriction::parse("0*").unwrap();
        let r = structured_check(&full, &full, &rho, &xor, 0.0, 0.0, 2.0).unwrap();
        assert!(!r.consistent);
        assert_eq!(r.failing_clause.as_deref(), Some("consistency on fixed coordinates"));
        let (xc, _) = full.condition_tuples("x0=1", |t| t[0] == 1).unwrap();
        let (yc, _) = full.condition_tuples("y0=1", |t| t[0] == 1).unwrap();
        assert!(structured_check(&xc, &yc, &rho, &xor, 0.0, 0.0, 2.0).unwrap().holds);
    }

    #[test]
    fn vazirani_examples() {
        let uni = ProbVector::new(vec![ratio(1, 4); 4]).unwrap();
        let r = vazirani_check(&uni, VaziraniVariant::Pointwise { eps: 0.1 }).unwrap();
        assert!(r.hypothesis && r.conclusion);
        let mut pm = vec![exact::zero(); 4];
        pm[2] = exact::one();
        let pm = ProbVector::new(pm).unwrap();
        assert!(!vazirani_check(&pm, VaziraniVariant::Pointwise { eps: 0.5 }).unwrap().hypothesis);
        assert!(!vazirani_check(&pm, VaziraniVariant::HighOrder { t: 1 }).unwrap().hypothesis);
        let biases = parity_biases(&pm);
        assert!(biases.iter().all(|b| *b == exact::one()));
    }

    #[test]
    fn binomial_examples() {
        let (l, r) = binomial_sum_bound(1.0, 1.0, 2).unwrap();
        assert!((l - 1.25).abs() < 1e-12 && r == 2.0);
        let (l, r) = binomial_sum_bound(0.5, 2.0, 2).unwrap();
        assert!((l - 1.0 / 16.0).abs() < 1e-12 && (r - 0.5).abs() < 1e-12);
        let (l, _) = binomial_sum_bound(1.0, 3.0, 3).unwrap();
        assert!((l - 1.0 / 27.0).abs() < 1e-12);
    }

    #[test]
    fn multiplicative_examples() {
        let xor = make_gadget(GadgetKind::Xor, 2).unwrap();
        let full = bits(2);
        let rho = Restriction::free_all(2);
        let r = multiplicative_uniformity_check(&full, &full, &rho, &xor, 0.1, 200.0, 2.0).unwrap();
        assert!(r.all_within && r.worst_ratio == 1.0 && r.precondition_holds);
        let pt = UniformSubset::point_mass(2, 2, &[0, 0]).unwrap();
        let r = multiplicative_uniformity_check(&pt, &pt, &rho, &xor, 0.1, 200.0, 2.0).unwrap();
        assert!(!r.all_within);
        assert!(r.worst_ratio == 0.0 || r.worst_ratio == 4.0);
    }

    #[test]
    fn marginals_examples() {
        let xor = make_gadget(GadgetKind::Xor, 2).unwrap();
        let one = bits(1);
        let rho = Restriction::free_all(1);
        let r = uniform_marginals_check(&one, &one, &rho, &xor, &[0], 0.1, 200.0, 2.0).unwrap();
        assert!(r.tv_x.is_zero() && r.tv_y.is_zero());
        assert_eq!(r.fiber_size, 2);
        let pt = UniformSubset::point_mass(1, 2, &[1]).unwrap();
        let r = uniform_marginals_check(&pt, &one, &rho, &xor, &[0], 0.1, 200.0, 2.0).unwrap();
        assert!(r.tv_x.is_zero());
        let err = uniform_marginals_check(&pt, &pt, &rho, &xor, &[1], 0.1, 200.0, 2.0);
        assert!(matches!(err, Err(LabError::EmptyFiber(_))));
    }
}
