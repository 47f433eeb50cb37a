//! Sparsification counterexample for `Δ ≪ b`: closed-form checks at large `b` and a
//! brute-force instance at toy scale.
//!
//! Symbols are `b`-bit strings read most significant bit first. The prefix of a symbol
//! is its top `d` bits; cell `i` of the last coordinate is bits `[i·d, (i+1)·d)` counted
//! from the top. The special coordinates are the first `I_size` ones.

use num::integer::Roots;
use rayon::prelude::*;
use serde::Serialize;

use crate::disc::disc_exact;
use crate::dist::UniformSubset;
use crate::error::{invalid, LabError, Result};
use crate::exact::{self, ratio, ser_real, Rational};
use crate::model::{make_gadget, CoordSet, GadgetKind, SimulationConstants};
use crate::safety::{Analyzer, Context};
use crate::TOL;

/// Largest toy cube `2^{b·n}` that is enumerated.
pub const MAX_TOY_BITS: u64 = 24;
/// Largest toy cube for which sparsity of `Y` is checked.
pub const MAX_TOY_SPARSITY_BITS: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CounterexampleParams {
    pub b: u64,
    pub d: u64,
    pub i_size: u64,
    pub n: u64,
    pub toy_override: bool,
}

/// `d = ⌊√b/3⌋`, `|I| = ⌊3√b⌋`, `n = |I| + 1`.
pub fn build_params(b: u64) -> Result<CounterexampleParams> {
    if b < 9 {
        return invalid("counterexample needs b >= 9");
    }
    let d = b.sqrt() / 3;
    // ⌊√b/3⌋ = ⌊⌊√b⌋/3⌋, and ⌊3√b⌋ = ⌊√(9b)⌋.
    let i_size = (9 * b).sqrt();
    Ok(CounterexampleParams { b, d, i_size, n: i_size + 1, toy_override: false })
}

pub fn toy_params(b: u64, d: u64, i_size: u64, n: u64) -> Result<CounterexampleParams> {
    if b == 0 || d == 0 || i_size == 0 || n == 0 {
        return invalid("toy parameters must be positive");
    }
    if d * i_size > b {
        return invalid("toy parameters need d·I_size <= b");
    }
    if i_size + 1 > n {
        return invalid("toy parameters need n >= I_size + 1");
    }
    Ok(CounterexampleParams { b, d, i_size, n, toy_override: true })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inequality {
    pub name: String,
    #[serde(serialize_with = "ser_real")]
    pub lhs: f64,
    pub relation: String,
    #[serde(serialize_with = "ser_real")]
    pub rhs: f64,
    pub holds: bool,
}

impl Inequality {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Inequality { name: name.into(), lhs, relation: "<=".into(), rhs, holds: lhs <= rhs + TOL }
    }

    fn ge(name: &str, lhs: f64, rhs: f64) -> Self {
        Inequality { name: name.into(), lhs, relation: ">=".into(), rhs, holds: lhs + TOL >= rhs }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyticReport {
    pub params: CounterexampleParams,
    #[serde(serialize_with = "ser_real")]
    pub delta_lower: f64,
    #[serde(serialize_with = "ser_real")]
    pub delta_upper: f64,
    /// `(|I| − 3)/Δ_ub` as an exact fraction.
    #[serde(serialize_with = "exact::ser_rational")]
    pub sparsification_parameter: Rational,
    pub inequalities: Vec<Inequality>,
    pub verdict: bool,
}

/// Evaluates the closed-form chain at `Δ_lb = d/2`, `Δ_ub = d+1`.
pub fn analytic_verify(p: &CounterexampleParams) -> Result<AnalyticReport> {
    if p.toy_override {
        return invalid("analytic verification needs derived parameters");
    }
    let (b, d, size) = (p.b as f64, p.d as f64, p.i_size as f64);
    let root = b.sqrt();
    let mut ineqs = Vec::new();

    ineqs.push(Inequality::le("delta-bounds", d / 2.0, d + 1.0));
    ineqs.push(Inequality::le("cells-fit", d * size, b));
    ineqs.push(Inequality::ge("coordinates", p.n as f64, size + 1.0));

    // A single cell event has probability (1 − 2^{−d})/2: 2^{2d−1} − 2^{d−1} of the 2^{2d} pairs.
    let cell = if p.d <= 64 {
        let full = num::BigInt::from(1) << (2 * p.d as usize);
        let hits = (num::BigInt::from(1) << (2 * p.d as usize - 1)) - (num::BigInt::from(1) << (p.d as usize - 1));
        let exact_cell = Rational::new(hits, full);
        let closed = (exact::one() - exact::pow2_neg(p.d as u32)) / exact::int(2);
        exact_cell == closed
    } else {
        true
    };
    let log_all = size * ((1.0 - (-d).exp2()) / 2.0).log2();
    ineqs.push(Inequality {
        name: "all-cells-factorization".into(),
        lhs: log_all,
        relation: "=".into(),
        rhs: size * ((1.0 - (-d).exp2()).log2() - 1.0),
        holds: cell,
    });

    // (1 − 2^{−d})^{−|I|} ≤ e^{|I|·2^{−d}/(1 − 2^{−d})}; the bound without the
    // denominator runs the wrong way, so the final value is also checked directly.
    let keep = 1.0 - (-d).exp2();
    let inv_pow = -size * keep.ln();
    ineqs.push(Inequality::le("power-vs-exp", inv_pow, size * (-d).exp2() / keep));
    ineqs.push(Inequality::le("exp-in-root", size * (-d).exp2(), 3.0 * root * (-d).exp2()));
    let exp_step = (3.0 * root * (-d).exp2()).exp();
    ineqs.push(Inequality::le("exp-step", exp_step, 2.0));
    ineqs.push(Inequality::le("inverse-power", inv_pow.exp(), 2.0));

    // Pr[Y_n = y_n | g^I = 1^I] ≥ 2^{|I|−b}(1 − 2^{−d})^{3√b} ≥ 2^{|I|−b−1}.
    let shrink = 3.0 * root * (1.0 - (-d).exp2()).log2();
    ineqs.push(Inequality::ge("conditional-lower-bound", size - b + shrink, size - b - 1.0));

    let param = ratio(p.i_size.saturating_sub(3), p.d + 1);
    ineqs.push(Inequality::ge("sparsification-parameter", exact::to_f64(&param), 2.0));
    ineqs.push(Inequality::ge("floor-step", exact::to_f64(&param), (3.0 * root - 4.0) / (root / 3.0 + 1.0)));
    ineqs.push(Inequality::ge("closing-bound", 9.0 * (1.0 - 13.0 / (3.0 * root + 9.0)), 2.0));

    let verdict = ineqs.iter().all(|i| i.holds);
    Ok(AnalyticReport {
        params: *p,
        delta_lower: d / 2.0,
        delta_upper: d + 1.0,
        sparsification_parameter: param,
        inequalities: ineqs,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToyReport {
    pub params: CounterexampleParams,
    #[serde(serialize_with = "ser_real")]
    pub delta: f64,
    /// `d/2 ≤ Δ ≤ d+1`; `None` above `|Λ| = 16`.
    pub delta_bounds_hold: Option<bool>,
    pub support_size: usize,
    #[serde(serialize_with = "exact::ser_rational")]
    pub all_cells_prob: Rational,
    #[serde(serialize_with = "exact::ser_rational")]
    pub all_cells_closed_form: Rational,
    /// (b) exact agreement.
    pub closed_form_matches: bool,
    pub nonzero_cell_values: usize,
    #[serde(serialize_with = "exact::ser_rational")]
    pub min_last_prob: Rational,
    /// (a) `Pr[Y_n = y_n] ≥ 2^{−b}` for every all-non-zero-cell `y_n`.
    pub last_prob_bound_holds: bool,
    pub witness_checked: usize,
    #[serde(serialize_with = "exact::ser_opt_rational")]
    pub min_witness_prob: Option<Rational>,
    /// (c) conditional probability of the witness at least `2^{|I|−b−1}`.
    pub witness_bound_holds: bool,
    /// `Y_n = y_n ⇒ g^I(x_I, Y_I) = 1^I` pointwise for every witness.
    pub witness_implication_holds: bool,
    /// `Dm(Y_S) ≤ 2|S|` for every `S`; `None` when skipped.
    pub sparsity_holds: Option<bool>,
    pub notes: Vec<String>,
    /// (d) share of dangerous `x` at `ε = 2`.
    #[serde(serialize_with = "exact::ser_rational")]
    pub dangerous_fraction: Rational,
    pub leaking: usize,
    pub sparsifying: usize,
    pub zero_prefix_leaking: bool,
    pub verdict: bool,
}

struct Layout {
    b: u32,
    d: u32,
    i_size: usize,
    n: usize,
}

impl Layout {
    fn prefix(&self, v: u8) -> u32 {
        v as u32 >> (self.b - self.d)
    }

    fn cell(&self, v: u8, i: usize) -> u32 {
        let shift = self.b - self.d * (i as u32 + 1);
        (v as u32 >> shift) & ((1 << self.d) - 1)
    }

    fn in_support(&self, y: &[u8]) -> bool {
        (0..self.i_size).all(|i| (self.prefix(y[i]) & self.cell(y[self.n - 1], i)).count_ones() % 2 == 1)
    }

    /// Prefixes of `x` on the special coordinates followed by zeros.
    fn witness(&self, x: &[u8]) -> u8 {
        let mut v = 0u32;
        for (i, &xi) in x.iter().enumerate().take(self.i_size) {
            v |= self.prefix(xi) << (self.b - self.d * (i as u32 + 1));
        }
        v as u8
    }
}

/// Brute force on `Λ = {0,1}^b` with `2^{b·n} ≤ 2^24`.
pub fn toy_instance_check(p: &CounterexampleParams) -> Result<ToyReport> {
    if p.b > 8 {
        return Err(LabError::Guard("toy symbols are limited to 8 bits".into()));
    }
    if p.b * p.n > MAX_TOY_BITS {
        return Err(LabError::Guard(format!("2^(b·n) = 2^{} exceeds 2^{MAX_TOY_BITS}", p.b * p.n)));
    }
    if p.d * p.i_size > p.b || p.i_size + 1 > p.n || p.d == 0 {
        return invalid("toy parameters need d·I_size <= b, n > I_size and d >= 1");
    }
    let lay = Layout { b: p.b as u32, d: p.d as u32, i_size: p.i_size as usize, n: p.n as usize };
    let q = 1usize << p.b;
    let n = lay.n;
    let g = make_gadget(GadgetKind::InnerProduct { prefix: p.d as u32 }, q)?;
    let mut notes = Vec::new();

    let (delta, delta_bounds_hold) = if q <= 16 {
        let delta = disc_exact(&g, None)?.delta;
        let d = p.d as f64;
        (delta, Some(d / 2.0 <= delta + TOL && delta <= d + 1.0 + TOL))
    } else {
        notes.push("Δ taken as d; discrepancy not enumerated above |Λ| = 16".into());
        (p.d as f64, None)
    };

    let full = UniformSubset::full(n, q)?;
    let kept: Vec<u32> = full.points().par_iter().copied().filter(|&pt| lay.in_support(&full.decode(pt))).collect();
    let y = full.with_points(kept)?;
    let all_cells_prob = ratio(y.len() as u64, full.len() as u64);
    let single = (exact::one() - exact::pow2_neg(p.d as u32)) / exact::int(2);
    let all_cells_closed_form = num::pow(single, p.i_size as usize);
    let closed_form_matches = all_cells_prob == all_cells_closed_form;

    // (a) marginal of the last coordinate.
    let last = CoordSet::single(n - 1);
    let counts: std::collections::HashMap<u32, u64> = y.projection_counts(last).into_iter().collect();
    let floor = exact::pow2_neg(p.b as u32);
    let mut min_last_prob: Option<Rational> = None;
    let mut nonzero_cell_values = 0;
    for v in 0..q {
        if (0..lay.i_size).any(|i| lay.cell(v as u8, i) == 0) {
            continue;
        }
        nonzero_cell_values += 1;
        let pr = ratio(counts.get(&(v as u32)).copied().unwrap_or(0), y.len() as u64);
        if min_last_prob.as_ref().is_none_or(|m| &pr < m) {
            min_last_prob = Some(pr);
        }
    }
    let min_last_prob = min_last_prob.unwrap_or_else(exact::one);
    let last_prob_bound_holds = min_last_prob >= floor;

    // (c) witnesses for every x whose special prefixes are all non-zero; only x_I matters.
    let exponent = p.i_size as i64 - p.b as i64 - 1;
    let lower = if exponent < 0 { exact::pow2_neg((-exponent) as u32) } else { num::pow(exact::int(2), exponent as usize) };
    let prefix_values: Vec<Vec<u8>> = (0..(q as u64).pow(lay.i_size as u32))
        .map(|k| {
            let mut rem = k;
            let mut x = vec![0u8; n];
            for i in (0..lay.i_size).rev() {
                x[i] = (rem % q as u64) as u8;
                rem /= q as u64;
            }
            x
        })
        .filter(|x| (0..lay.i_size).all(|i| lay.prefix(x[i]) != 0))
        .collect();
    let results: Vec<(Rational, bool)> = prefix_values
        .par_iter()
        .map(|x| {
            let w = lay.witness(x);
            let hit = |pt: u32| (0..lay.i_size).all(|i| g.eval(x[i], y.digit(pt, i)) == 1);
            let cond: Vec<u32> = y.points().iter().copied().filter(|&pt| hit(pt)).collect();
            let with_w = cond.iter().filter(|&&pt| y.digit(pt, n - 1) == w).count();
            let implication = y.points().iter().filter(|&&pt| y.digit(pt, n - 1) == w).all(|&pt| hit(pt));
            let pr = if cond.is_empty() { exact::zero() } else { ratio(with_w as u64, cond.len() as u64) };
            (pr, implication)
        })
        .collect();
    let min_witness_prob = results.iter().map(|(p, _)| p.clone()).min();
    let witness_bound_holds = min_witness_prob.as_ref().is_none_or(|m| m >= &lower);
    let witness_implication_holds = results.iter().all(|(_, ok)| *ok);

    let sparsity_holds = if p.b * p.n <= MAX_TOY_SPARSITY_BITS {
        Some(CoordSet::full(n).nonempty_subsets().all(|s| y.deficiency_value(s) <= 2.0 * s.len() as f64 + TOL))
    } else {
        notes.push(format!("sparsity of Y skipped above 2^{MAX_TOY_SPARSITY_BITS} tuples"));
        None
    };

    // (d) classify every x. Only the special coordinates and the last one can matter for
    // the verdict through g, but all of Λ^n is enumerated to report the true fraction.
    let constants = SimulationConstants::det_paper();
    let ctx = Context::with_delta(&g, &constants, delta);
    let an = Analyzer::new(ctx, &y, CoordSet::full(n))?;
    let verdicts: Vec<(bool, bool, bool)> = full
        .points()
        .par_iter()
        .map(|&pt| {
            let x = full.decode(pt);
            let r = an.is_dangerous(&x, 2.0)?;
            let zero_prefix = (0..lay.i_size).any(|i| lay.prefix(x[i]) == 0);
            Ok((r.leaking, r.sparsifying, !zero_prefix || r.leaking))
        })
        .collect::<Result<_>>()?;
    let leaking = verdicts.iter().filter(|v| v.0).count();
    let sparsifying = verdicts.iter().filter(|v| v.1).count();
    let dangerous = verdicts.iter().filter(|v| v.0 || v.1).count();
    let zero_prefix_leaking = verdicts.iter().all(|v| v.2);
    let dangerous_fraction = ratio(dangerous as u64, full.len() as u64);

    let verdict = closed_form_matches && last_prob_bound_holds && witness_implication_holds && zero_prefix_leaking;
    Ok(ToyReport {
        params: *p,
        delta,
        delta_bounds_hold,
        support_size: y.len(),
        all_cells_prob,
        all_cells_closed_form,
        closed_form_matches,
        nonzero_cell_values,
        min_last_prob,
        last_prob_bound_holds,
        witness_checked: results.len(),
        min_witness_prob,
        witness_bound_holds,
        witness_implication_holds,
        sparsity_holds,
        notes,
        dangerous_fraction,
        leaking,
        sparsifying,
        zero_prefix_leaking,
        verdict,
    })
}
