//! Value classifiers: almost uniform, recoverable, safe, heavy, light, leaking,
//! sparsifying, dangerous, skewing and biasing, plus the main-lemma estimator.
//!
//! Every classifier works on a `scope` of free coordinates; coordinates outside
//! it are ignored. The `n` in thresholds such as `(1/2n)^{|J|}` is the full
//! dimension of `Y`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::disc::disc_exact;
use crate::dist::UniformSubset;
use crate::error::{invalid, LabError, Result};
use crate::exact::{self, ratio, ser_real, Rational};
use crate::model::{bits_to_string, CoordSet, Gadget, SimulationConstants};
use crate::TOL;

/// Largest `n` for per-value enumeration.
pub const MAX_SAFETY_N: usize = 8;
/// Largest support for exhaustive event search.
pub const MAX_EXHAUSTIVE_SUPPORT: usize = 20;

#[derive(Clone, Copy, Debug)]
pub struct Context<'a> {
    pub gadget: &'a Gadget,
    pub constants: &'a SimulationConstants,
    pub delta: f64,
}

impl<'a> Context<'a> {
    /// Uses the exact discrepancy of the gadget for `Δ`.
    pub fn new(gadget: &'a Gadget, constants: &'a SimulationConstants) -> Result<Self> {
        let delta = disc_exact(gadget, None)?.delta;
        Ok(Context { gadget, constants, delta })
    }

    pub fn with_delta(gadget: &'a Gadget, constants: &'a SimulationConstants, delta: f64) -> Self {
        Context { gadget, constants, delta }
    }

    pub fn b(&self) -> f64 {
        self.gadget.b()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoverMode {
    Canonical,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryFailure {
    pub i: CoordSet,
    pub z_i: String,
    #[serde(serialize_with = "exact::ser_rational")]
    pub best_prob: Rational,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SafetyVerdict {
    pub almost_uniform: bool,
    pub recoverable: bool,
    pub safe: bool,
    pub worst_z: String,
    /// `2^{|scope|}·Pr[Z = worst_z]`.
    #[serde(serialize_with = "ser_real")]
    pub worst_ratio: f64,
    pub recovery_failure: Option<RecoveryFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeavyWitness {
    pub j: CoordSet,
    pub i: CoordSet,
    pub z_i: String,
    pub y_j: Vec<u8>,
    /// `Pr[Y_J = y_J | Z_I = z_I]`.
    #[serde(serialize_with = "exact::ser_rational")]
    pub prob: Rational,
    #[serde(serialize_with = "ser_real")]
    pub t: f64,
    #[serde(serialize_with = "ser_real")]
    pub e: f64,
    pub heavy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LightViolation {
    pub j: CoordSet,
    pub i: CoordSet,
    pub z_i: String,
    #[serde(serialize_with = "exact::ser_rational")]
    pub heavy_mass: Rational,
    #[serde(serialize_with = "ser_real")]
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LightReport {
    pub light: bool,
    pub violation: Option<LightViolation>,
}

/// Recovery event for one `(I, z_I)`, as explicit points of `Y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanonicalEvent {
    pub i: CoordSet,
    pub z_i: String,
    /// Points of `Y` with `g^I(x_I, y_I) = z_I`.
    #[serde(skip)]
    pub fiber: UniformSubset,
    /// Points left after removing every heavy `y_J` once.
    #[serde(skip)]
    pub one_pass: Vec<u32>,
    #[serde(serialize_with = "exact::ser_rational")]
    pub one_pass_prob: Rational,
    /// The chosen event.
    #[serde(skip)]
    pub event: Vec<u32>,
    /// `Pr[event | Z_I = z_I]`.
    #[serde(serialize_with = "exact::ser_rational")]
    pub prob: Rational,
    /// Whether the chosen event came from the fixed-point removal.
    pub fixed_point: bool,
    pub passes: usize,
    /// Whether the event is non-empty and leaves `Y_{scope−I}` `(σ_Y+4/c)`-sparse.
    pub sparse: bool,
}

impl CanonicalEvent {
    pub fn degenerate(&self) -> bool {
        self.event.is_empty()
    }

    pub fn event_subset(&self) -> Option<UniformSubset> {
        if self.event.is_empty() {
            None
        } else {
            self.fiber.with_points(self.event.clone()).ok()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoverReport {
    pub recoverable: bool,
    pub mode: RecoverMode,
    pub failure: Option<RecoveryFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DangerReport {
    pub leaking: bool,
    pub sparsifying: bool,
    /// `(I, z_I, Pr[Z_I = z_I])` for the first leaking pair.
    pub leak_witness: Option<(CoordSet, String, String)>,
    /// `(I, z_I, violating S)` for the first sparsifying pair.
    pub sparsify_witness: Option<(CoordSet, String, CoordSet)>,
}

impl DangerReport {
    pub fn dangerous(&self) -> bool {
        self.leaking || self.sparsifying
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkewBiasReport {
    pub skewing: bool,
    pub skew_witness: Option<CoordSet>,
    /// Largest `Dm(Z_I | Y_J = y_J)` minus the skewing threshold.
    #[serde(serialize_with = "ser_real")]
    pub skew_margin: f64,
    pub biasing: bool,
    pub bias_witness: Option<CoordSet>,
    #[serde(serialize_with = "ser_real")]
    pub e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MainLemmaReport {
    #[serde(serialize_with = "exact::ser_rational")]
    pub unsafe_mass: Rational,
    pub unsafe_values: usize,
    pub total_values: usize,
    pub not_almost_uniform: usize,
    pub not_recoverable: usize,
    /// `2^{−γΔ}`.
    #[serde(serialize_with = "ser_real")]
    pub bound: f64,
    #[serde(serialize_with = "ser_real")]
    pub sigma_x: f64,
    #[serde(serialize_with = "ser_real")]
    pub sigma_y: f64,
    pub precondition_holds: bool,
    /// Set only when the bound is asserted (precondition holds and bound < 1).
    pub bound_holds: Option<bool>,
}

/// Bit `i` of the result is `g(x_i, y_i)` for every `i` in `scope`.
fn zmasks(x: &[u8], y: &UniformSubset, g: &Gadget, scope: CoordSet) -> Vec<u32> {
    y.points()
        .iter()
        .map(|&p| scope.iter().fold(0u32, |m, i| m | (g.eval(x[i], y.digit(p, i)) as u32) << i))
        .collect()
}

/// Mask over coordinates of the bits `z_I` (listed in increasing coordinate order).
fn place_bits(i: CoordSet, z_i: &[u8]) -> u32 {
    i.iter().zip(z_i).fold(0, |m, (c, &b)| m | (b as u32) << c)
}

fn extract_bits(i: CoordSet, mask: u32) -> Vec<u8> {
    i.iter().map(|c| (mask >> c & 1) as u8).collect()
}

fn check_x(x: &[u8], y: &UniformSubset) -> Result<()> {
    if x.len() != y.n() || x.iter().any(|&s| s as usize >= y.alphabet_size()) {
        return invalid("x must be a tuple over the alphabet of Y");
    }
    Ok(())
}

/// `Pr[E] ≥ 1 − 2^{−exponent}` (or `>` when `strict`), compared as
/// `log2 Pr[not E]` against `−exponent` so that probabilities near 1 stay exact.
pub fn recovery_prob_ok(prob: &Rational, exponent: f64, strict: bool) -> bool {
    let miss = exact::log2(&(exact::one() - prob));
    if strict {
        miss < -exponent - TOL
    } else {
        miss <= -exponent + TOL
    }
}

/// Exact distribution of `Z^x = g^n(x, Y)`, indexed by the mask with bit `i` = `z_i`.
pub fn zx_dist(x: &[u8], y: &UniformSubset, g: &Gadget) -> Result<Vec<Rational>> {
    check_x(x, y)?;
    let n = y.n();
    let mut counts = vec![0u64; 1 << n];
    for m in zmasks(x, y, g, CoordSet::full(n)) {
        counts[m as usize] += 1;
    }
    Ok(counts.into_iter().map(|c| ratio(c, y.len() as u64)).collect())
}

/// `Pr[Z_scope = z] ∈ 2^{−|scope|}(1 ± 2^{−Δ/10})` for every `z`; returns the worst `z`
/// and `2^{|scope|}·Pr` there.
pub fn is_almost_uniform(x: &[u8], y: &UniformSubset, g: &Gadget, delta: f64, scope: CoordSet) -> Result<(bool, String, f64)> {
    check_x(x, y)?;
    let m = scope.len();
    let mut counts: HashMap<u32, u64> = HashMap::new();
    for zm in zmasks(x, y, g, scope) {
        *counts.entry(zm).or_default() += 1;
    }
    let eps = (-delta / 10.0).exp2();
    let scale = (m as f64).exp2() / y.len() as f64;
    let mut worst = (-1.0f64, 0u32, 0.0f64);
    for sub in scope.subsets() {
        let ratio = *counts.get(&sub.0).unwrap_or(&0) as f64 * scale;
        let dev = (ratio - 1.0).abs();
        if dev > worst.0 {
            worst = (dev, sub.0, ratio);
        }
    }
    let ok = worst.0 <= eps + TOL;
    Ok((ok, bits_to_string(&extract_bits(scope, worst.1)), worst.2))
}

/// Fixed `Y` and scope, with the minimal sparsity `σ_Y` precomputed.
pub struct Analyzer<'a> {
    ctx: Context<'a>,
    y: &'a UniformSubset,
    scope: CoordSet,
    sigma_y: f64,
    classes: Vec<usize>,
    cache: Mutex<HashMap<Vec<usize>, SafetyVerdict>>,
}

impl<'a> Analyzer<'a> {
    pub fn new(ctx: Context<'a>, y: &'a UniformSubset, scope: CoordSet) -> Result<Self> {
        if y.n() > MAX_SAFETY_N {
            return Err(LabError::Guard(format!("n = {} exceeds {MAX_SAFETY_N}", y.n())));
        }
        if !scope.is_subset(CoordSet::full(y.n())) {
            return invalid("scope outside the coordinates of Y");
        }
        if ctx.gadget.size() != y.alphabet_size() {
            return invalid("gadget and Y use different alphabets");
        }
        if ctx.delta <= 0.0 {
            return invalid("safety needs Δ > 0");
        }
        let sigma_y = y.minimal_sigma_on(scope, ctx.delta)?;
        Ok(Analyzer { ctx, y, scope, sigma_y, classes: ctx.gadget.row_classes(), cache: Mutex::new(HashMap::new()) })
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn scope(&self) -> CoordSet {
        self.scope
    }

    fn sparse_sigma(&self) -> f64 {
        self.sigma_y + self.ctx.constants.slack()
    }

    /// `(σ_Y + 4/c)Δ|J| − b|J| − 1`: heavy iff `log2 Pr[y_J | z_I]` exceeds it.
    fn heavy_base(&self, jlen: usize) -> f64 {
        let j = jlen as f64;
        self.sparse_sigma() * self.ctx.delta * j - self.ctx.b() * j - 1.0
    }

    /// Points of `Y` grouped by `Z_I`, in increasing mask order.
    fn fibers(&self, zm: &[u32], i: CoordSet) -> BTreeMap<u32, Vec<u32>> {
        let mut out: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (&p, &m) in self.y.points().iter().zip(zm) {
            out.entry(m & i.0).or_default().push(p);
        }
        out
    }

    fn check_i(&self, x: &[u8], i: CoordSet, z_i: &[u8]) -> Result<()> {
        check_x(x, self.y)?;
        if !i.is_subset(self.scope) || z_i.len() != i.len() || z_i.iter().any(|&b| b > 1) {
            return invalid("I must lie in the scope and z_I must be a bit string over I");
        }
        Ok(())
    }

    fn fiber(&self, x: &[u8], i: CoordSet, z_i: &[u8]) -> Result<UniformSubset> {
        self.check_i(x, i, z_i)?;
        let target = place_bits(i, z_i);
        let zm = zmasks(x, self.y, self.ctx.gadget, i);
        let pts: Vec<u32> = self.y.points().iter().zip(&zm).filter(|(_, &m)| m == target).map(|(&p, _)| p).collect();
        if pts.is_empty() {
            return Err(LabError::ZeroProbability(format!("Z_{i} = {}", bits_to_string(z_i))));
        }
        self.y.with_points(pts)
    }

    pub fn heaviness(&self, x: &[u8], j: CoordSet, i: CoordSet, z_i: &[u8]) -> Result<Vec<HeavyWitness>> {
        if j.is_empty() {
            return invalid("heaviness needs a non-empty J");
        }
        if !j.is_subset(self.scope) || !j.is_disjoint(i) {
            return invalid("J must lie in the scope and be disjoint from I");
        }
        let fiber = self.fiber(x, i, z_i)?;
        let base = self.heavy_base(j.len());
        let uncond: HashMap<u32, u64> = self.y.projection_counts(j).into_iter().collect();
        let jl = j.len() as f64;
        let (delta, b) = (self.ctx.delta, self.ctx.b());
        Ok(fiber
            .projection_counts(j)
            .into_iter()
            .map(|(key, c)| {
                let prob = ratio(c, fiber.len() as u64);
                let t = exact::log2(&prob) - base;
                let p_y = uncond[&key] as f64 / self.y.len() as f64;
                HeavyWitness {
                    j,
                    i,
                    z_i: bits_to_string(z_i),
                    y_j: fiber.key_symbols(key, j),
                    prob,
                    t,
                    e: self.sigma_y * delta * jl - b * jl - p_y.log2(),
                    heavy: t > TOL,
                }
            })
            .collect())
    }

    pub fn is_light(&self, x: &[u8], alpha: f64) -> Result<LightReport> {
        check_x(x, self.y)?;
        let n = self.y.n() as f64;
        let zm = zmasks(x, self.y, self.ctx.gadget, self.scope);
        for i in self.scope.subsets() {
            let rest = self.scope.minus(i);
            for (zmask, pts) in self.fibers(&zm, i) {
                let fiber = self.y.with_points(pts)?;
                for j in rest.nonempty_subsets() {
                    let base = self.heavy_base(j.len());
                    let heavy: u64 = fiber
                        .projection_counts(j)
                        .into_iter()
                        .filter(|&(_, c)| (c as f64 / fiber.len() as f64).log2() - base > TOL)
                        .map(|(_, c)| c)
                        .sum();
                    let threshold = (-alpha * self.ctx.delta).exp2() * (2.0 * n).powi(-(j.len() as i32));
                    let mass = ratio(heavy, fiber.len() as u64);
                    if exact::to_f64(&mass) > threshold + TOL {
                        return Ok(LightReport {
                            light: false,
                            violation: Some(LightViolation {
                                j,
                                i,
                                z_i: bits_to_string(&extract_bits(i, zmask)),
                                heavy_mass: mass,
                                threshold,
                            }),
                        });
                    }
                }
            }
        }
        Ok(LightReport { light: true, violation: None })
    }

    /// Removes every point whose projection on some non-empty `J ⊆ rest` is flagged.
    fn strip(&self, pts: &[u32], rest: CoordSet, flag: impl Fn(usize, u64, usize) -> bool) -> Vec<u32> {
        let mut removed = vec![false; pts.len()];
        let current = match self.y.with_points(pts.to_vec()) {
            Ok(s) => s,
            Err(_) => return Vec::new(),
        };
        for j in rest.nonempty_subsets() {
            let bad: HashSet<u32> = current
                .projection_counts(j)
                .into_iter()
                .filter(|&(_, c)| flag(j.len(), c, pts.len()))
                .map(|(k, _)| k)
                .collect();
            if bad.is_empty() {
                continue;
            }
            for (r, &p) in removed.iter_mut().zip(pts) {
                if bad.contains(&current.key(p, j)) {
                    *r = true;
                }
            }
        }
        pts.iter().zip(&removed).filter(|(_, &r)| !r).map(|(&p, _)| p).collect()
    }

    fn event_valid(&self, pts: &[u32], rest: CoordSet) -> Result<bool> {
        if pts.is_empty() {
            return Ok(false);
        }
        let e = self.y.with_points(pts.to_vec())?;
        Ok(e.sparsity_on(rest, self.sparse_sigma(), self.ctx.delta)?.holds)
    }

    fn canonical_from_fiber(&self, fiber: UniformSubset, i: CoordSet, z_i: String) -> Result<CanonicalEvent> {
        let rest = self.scope.minus(i);
        let pts = fiber.points().to_vec();
        let total = pts.len() as u64;
        let one_pass = self.strip(&pts, rest, |jl, c, size| (c as f64 / size as f64).log2() - self.heavy_base(jl) > TOL);

        let sparse_exp = |jl: usize| self.sparse_sigma() * self.ctx.delta * jl as f64 - self.ctx.b() * jl as f64;
        let cap = self.y.n() * self.y.len();
        let mut fixed = pts.clone();
        let mut passes = 0;
        loop {
            let next = self.strip(&fixed, rest, |jl, c, size| (c as f64 / size as f64).log2() - sparse_exp(jl) > TOL);
            passes += 1;
            let done = next.len() == fixed.len();
            fixed = next;
            if done || fixed.is_empty() || passes >= cap {
                break;
            }
        }

        let one_valid = self.event_valid(&one_pass, rest)?;
        let fixed_valid = self.event_valid(&fixed, rest)?;
        let use_fixed = match (one_valid, fixed_valid) {
            (true, true) => fixed.len() > one_pass.len(),
            (false, true) => true,
            (true, false) => false,
            (false, false) => one_pass.is_empty() && !fixed.is_empty(),
        };
        let event = if use_fixed { fixed } else { one_pass.clone() };
        Ok(CanonicalEvent {
            i,
            z_i,
            fiber,
            one_pass_prob: ratio(one_pass.len() as u64, total),
            one_pass,
            prob: ratio(event.len() as u64, total),
            event,
            fixed_point: use_fixed,
            passes,
            sparse: if use_fixed { fixed_valid } else { one_valid },
        })
    }

    pub fn canonical_recovery_event(&self, x: &[u8], i: CoordSet, z_i: &[u8]) -> Result<CanonicalEvent> {
        let fiber = self.fiber(x, i, z_i)?;
        self.canonical_from_fiber(fiber, i, bits_to_string(z_i))
    }

    pub fn is_recoverable(&self, x: &[u8], alpha: f64, mode: RecoverMode) -> Result<RecoverReport> {
        check_x(x, self.y)?;
        if mode == RecoverMode::Exhaustive && self.y.len() > MAX_EXHAUSTIVE_SUPPORT {
            return Err(LabError::Guard(format!("exhaustive search over a support of {}", self.y.len())));
        }
        let zm = zmasks(x, self.y, self.ctx.gadget, self.scope);
        for i in self.scope.subsets() {
            for (zmask, pts) in self.fibers(&zm, i) {
                let z_i = bits_to_string(&extract_bits(i, zmask));
                let failure = match mode {
                    RecoverMode::Canonical => {
                        let ev = self.canonical_from_fiber(self.y.with_points(pts)?, i, z_i.clone())?;
                        let ok = ev.sparse && recovery_prob_ok(&ev.prob, alpha * self.ctx.delta, false);
                        (!ok).then(|| RecoveryFailure { i, z_i, best_prob: ev.prob.clone(), degenerate: ev.degenerate() })
                    }
                    RecoverMode::Exhaustive => {
                        let rest = self.scope.minus(i);
                        let f = pts.len();
                        let max_drop = ((-alpha * self.ctx.delta).exp2() * f as f64 + TOL).floor() as u32;
                        let mut found = false;
                        for drop in 0u32..1 << f {
                            if drop.count_ones() > max_drop {
                                continue;
                            }
                            let kept: Vec<u32> = (0..f).filter(|&k| drop >> k & 1 == 0).map(|k| pts[k]).collect();
                            if self.event_valid(&kept, rest)? {
                                found = true;
                                break;
                            }
                        }
                        (!found).then(|| RecoveryFailure { i, z_i, best_prob: exact::zero(), degenerate: false })
                    }
                };
                if failure.is_some() {
                    return Ok(RecoverReport { recoverable: false, mode, failure });
                }
            }
        }
        Ok(RecoverReport { recoverable: true, mode, failure: None })
    }

    /// Safe = almost uniform and recoverable (canonical mode), with `α` from the constants.
    pub fn classify(&self, x: &[u8]) -> Result<SafetyVerdict> {
        check_x(x, self.y)?;
        let sig: Vec<usize> = self.scope.iter().map(|i| self.classes[x[i] as usize]).collect();
        if let Some(v) = self.cache.lock().unwrap().get(&sig) {
            return Ok(v.clone());
        }
        let (almost_uniform, worst_z, worst_ratio) = is_almost_uniform(x, self.y, self.ctx.gadget, self.ctx.delta, self.scope)?;
        let rec = self.is_recoverable(x, self.ctx.constants.alpha, RecoverMode::Canonical)?;
        let v = SafetyVerdict {
            almost_uniform,
            recoverable: rec.recoverable,
            safe: almost_uniform && rec.recoverable,
            worst_z,
            worst_ratio,
            recovery_failure: rec.failure,
        };
        self.cache.lock().unwrap().insert(sig, v.clone());
        Ok(v)
    }

    /// Leaking: some `Pr[Z_I = z_I] < 2^{−|I|−1}`. Sparsifying: some positive-probability
    /// conditional `Y_{scope−I} | Z_I = z_I` is not `(σ_Y+ε)`-sparse.
    pub fn is_dangerous(&self, x: &[u8], eps: f64) -> Result<DangerReport> {
        check_x(x, self.y)?;
        let zm = zmasks(x, self.y, self.ctx.gadget, self.scope);
        let mut report = DangerReport { leaking: false, sparsifying: false, leak_witness: None, sparsify_witness: None };
        for i in self.scope.subsets() {
            let fibers = self.fibers(&zm, i);
            let floor = (-(i.len() as f64) - 1.0).exp2();
            if report.leak_witness.is_none() {
                for sub in i.subsets() {
                    let c = fibers.get(&sub.0).map_or(0, |v| v.len());
                    let p = ratio(c as u64, self.y.len() as u64);
                    if exact::to_f64(&p) < floor - TOL {
                        report.leaking = true;
                        report.leak_witness = Some((i, bits_to_string(&extract_bits(i, sub.0)), exact::format_rational(&p)));
                        break;
                    }
                }
            }
            if report.sparsify_witness.is_none() {
                let rest = self.scope.minus(i);
                for (zmask, pts) in &fibers {
                    let cond = self.y.with_points(pts.clone())?;
                    let sp = cond.sparsity_on(rest, self.sigma_y + eps, self.ctx.delta)?;
                    if let Some(s) = sp.witness {
                        report.sparsifying = true;
                        report.sparsify_witness = Some((i, bits_to_string(&extract_bits(i, *zmask)), s));
                        break;
                    }
                }
            }
            if report.leaking && report.sparsifying {
                break;
            }
        }
        Ok(report)
    }

    /// Skewing and biasing flags of `x` for `y_J`, with `e(y_J)`.
    pub fn skew_bias_check(&self, x: &[u8], y_j: &[u8], j: CoordSet, t: f64) -> Result<SkewBiasReport> {
        check_x(x, self.y)?;
        let n = self.y.n();
        if !j.is_subset(self.scope) || y_j.len() != j.len() {
            return invalid("J must lie in the scope and y_J must be indexed by J");
        }
        let (cond, p) = self
            .y
            .condition_on_values(j, y_j)
            .map_err(|_| LabError::ZeroProbability(format!("Y_{j} = {y_j:?}")))?;
        let log_n = (n as f64).log2();
        let jl = j.len() as f64;
        let e = self.sigma_y * self.ctx.delta * jl - self.ctx.b() * jl - exact::log2(&p);
        let rest = self.scope.minus(j);
        let zm = zmasks(x, &cond, self.ctx.gadget, rest);

        let skew_thr = 4.0 * log_n * jl + e + t - 2.0;
        let mut skew_best: (f64, Option<CoordSet>) = (f64::NEG_INFINITY, None);
        for i in rest.subsets() {
            let mut counts: HashMap<u32, u64> = HashMap::new();
            for &m in &zm {
                *counts.entry(m & i.0).or_default() += 1;
            }
            let max = *counts.values().max().unwrap() as f64;
            let dm = i.len() as f64 + (max / cond.len() as f64).log2();
            let margin = dm - skew_thr;
            if margin > skew_best.0 {
                skew_best = (margin, Some(i));
            }
        }
        let skewing = skew_best.0 > TOL;

        // With n = 1 no non-empty S avoids J, so nothing is biasing.
        let min_size = if n > 1 { 4.0 * jl + (t + e - 3.0) / log_n } else { f64::INFINITY };
        let mut bias_witness = None;
        for s in rest.nonempty_subsets() {
            if (s.len() as f64) < min_size - TOL {
                continue;
            }
            let odd = zm.iter().filter(|&&m| (m & s.0).count_ones() % 2 == 1).count() as f64;
            let bias = ((cond.len() as f64 - 2.0 * odd) / cond.len() as f64).abs();
            if bias > (2.0 * n as f64).powi(-(s.len() as i32)) + TOL {
                bias_witness = Some(s);
                break;
            }
        }
        Ok(SkewBiasReport {
            skewing,
            skew_witness: if skewing { skew_best.1 } else { None },
            skew_margin: skew_best.0,
            biasing: bias_witness.is_some(),
            bias_witness,
            e,
        })
    }
}

/// Mass of values of `X` that are not `α`-safe for `Y` (full scope), against `2^{−γΔ}`.
pub fn main_lemma_estimate(xs: &UniformSubset, ys: &UniformSubset, ctx: Context<'_>, alpha: f64, gamma: f64) -> Result<MainLemmaReport> {
    if xs.n() != ys.n() || xs.alphabet_size() != ys.alphabet_size() {
        return invalid("X and Y must live on the same space");
    }
    let n = xs.n();
    if n > MAX_SAFETY_N {
        return Err(LabError::Guard(format!("n = {n} exceeds {MAX_SAFETY_N}")));
    }
    let mut constants = ctx.constants.clone();
    constants.alpha = alpha;
    let ctx = Context { constants: &constants, ..ctx };
    let scope = CoordSet::full(n);
    let an = Analyzer::new(ctx, ys, scope)?;
    let sigma_x = xs.minimal_sigma_on(scope, ctx.delta)?;

    // One representative per row-class signature; the verdict depends on nothing else.
    let classes = ctx.gadget.row_classes();
    let mut groups: BTreeMap<Vec<usize>, (Vec<u8>, usize)> = BTreeMap::new();
    for x in xs.tuples() {
        let sig: Vec<usize> = x.iter().map(|&s| classes[s as usize]).collect();
        groups.entry(sig).or_insert_with(|| (x.clone(), 0)).1 += 1;
    }
    let reps: Vec<(Vec<u8>, usize)> = groups.into_values().collect();
    let verdicts: Vec<Result<SafetyVerdict>> = reps.par_iter().map(|(x, _)| an.classify(x)).collect();
    let (mut unsafe_values, mut not_au, mut not_rec) = (0, 0, 0);
    for ((_, count), v) in reps.iter().zip(verdicts) {
        let v = v?;
        if !v.safe {
            unsafe_values += count;
        }
        if !v.almost_uniform {
            not_au += count;
        }
        if !v.recoverable {
            not_rec += count;
        }
    }
    let unsafe_mass = ratio(unsafe_values as u64, xs.len() as u64);
    let bound = (-gamma * ctx.delta).exp2();
    let c = constants.c;
    let precondition_holds = sigma_x + 2.0 * an.sigma_y() <= 0.9 - 25.0 / c - gamma - alpha + TOL;
    let bound_holds = (precondition_holds && bound < 1.0).then(|| exact::to_f64(&unsafe_mass) <= bound + TOL);
    Ok(MainLemmaReport {
        unsafe_mass,
        unsafe_values,
        total_values: xs.len(),
        not_almost_uniform: not_au,
        not_recoverable: not_rec,
        bound,
        sigma_x,
        sigma_y: an.sigma_y(),
        precondition_holds,
        bound_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gadget, GadgetKind};

    fn xor() -> Gadget {
        make_gadget(GadgetKind::Xor, 2).unwrap()
    }

    #[test]
    fn zx_examples() {
        let g = xor();
        let full = UniformSubset::full(1, 2).unwrap();
        assert_eq!(zx_dist(&[0], &full, &g).unwrap(), vec![ratio(1, 2), ratio(1, 2)]);
        let pm = UniformSubset::point_mass(2, 2, &[1, 0]).unwrap();
        let d = zx_dist(&[1, 1], &pm, &g).unwrap();
        // z = (0, 1) has mask 0b10.
        assert_eq!(d[2], exact::one());
    }

    #[test]
    fn almost_uniform_examples() {
        let g = xor();
        let full = UniformSubset::full(2, 2).unwrap();
        assert!(is_almost_uniform(&[0, 1], &full, &g, 2.0, CoordSet::full(2)).unwrap().0);
        let pm = UniformSubset::point_mass(1, 2, &[0]).unwrap();
        let (ok, _, ratio) = is_almost_uniform(&[0], &pm, &g, 2.0, CoordSet::full(1)).unwrap();
        assert!(!ok);
        assert_eq!(ratio, 2.0);
        let and = make_gadget(GadgetKind::And, 2).unwrap();
        let full1 = UniformSubset::full(1, 2).unwrap();
        let (ok, z, r) = is_almost_uniform(&[0], &full1, &and, 1.0, CoordSet::full(1)).unwrap();
        assert!(!ok);
        assert_eq!((z.as_str(), r), ("0", 2.0));
    }

    #[test]
    fn heaviness_examples() {
        let g = xor();
        let full = UniformSubset::full(2, 2).unwrap();
        let small_c = SimulationConstants { c: 2.0, ..SimulationConstants::det_paper() };
        let ctx = Context::new(&g, &small_c).unwrap();
        let an = Analyzer::new(ctx, &full, CoordSet::full(2)).unwrap();
        for j in CoordSet::full(2).nonempty_subsets() {
            for i in CoordSet::full(2).minus(j).subsets() {
                for sub in i.subsets() {
                    let z = extract_bits(i, sub.0);
                    assert!(an.heaviness(&[0, 1], j, i, &z).unwrap().iter().all(|w| !w.heavy && w.e.abs() < 1e-12));
                }
            }
        }
        assert!(an.heaviness(&[0, 0], CoordSet::EMPTY, CoordSet::EMPTY, &[]).is_err());

        let det = SimulationConstants::det_paper();
        let ctx = Context::new(&g, &det).unwrap();
        let pm = UniformSubset::point_mass(2, 2, &[1, 0]).unwrap();
        let an = Analyzer::new(ctx, &pm, CoordSet::full(2)).unwrap();
        for j in CoordSet::full(2).nonempty_subsets() {
            let w = an.heaviness(&[0, 0], j, CoordSet::EMPTY, &[]).unwrap();
            assert_eq!(w.len(), 1);
            let expected = 1.0 - 4.0 / 200.0 * 2.0 * j.len() as f64;
            assert!((w[0].t - expected).abs() < 1e-9);
            assert!(w[0].heavy);
        }
    }

    #[test]
    fn light_and_recoverable_examples() {
        let g = xor();
        let det = SimulationConstants::det_paper();
        let ctx = Context::new(&g, &det).unwrap();
        let pm = UniformSubset::point_mass(2, 2, &[1, 0]).unwrap();
        let an = Analyzer::new(ctx, &pm, CoordSet::full(2)).unwrap();
        assert!(!an.is_light(&[0, 0], det.alpha).unwrap().light);
        let ev = an.canonical_recovery_event(&[0, 0], CoordSet::EMPTY, &[]).unwrap();
        assert!(ev.one_pass.is_empty());
        assert_eq!(ev.event.len(), 1);
        assert!(an.is_recoverable(&[0, 0], det.alpha, RecoverMode::Canonical).unwrap().recoverable);
        assert!(an.is_recoverable(&[0, 0], det.alpha, RecoverMode::Exhaustive).unwrap().recoverable);

        let full = UniformSubset::full(2, 2).unwrap();
        let an = Analyzer::new(ctx, &full, CoordSet::full(2)).unwrap();
        let ev = an.canonical_recovery_event(&[0, 1], CoordSet::single(0), &[1]).unwrap();
        assert_eq!(ev.prob, exact::one());
        assert_eq!(ev.event.len(), 2);
        let v = an.classify(&[0, 1]).unwrap();
        assert!(v.safe && v.almost_uniform && v.recoverable);

        let small_c = SimulationConstants { c: 2.0, ..det };
        let ctx = Context::new(&g, &small_c).unwrap();
        let an = Analyzer::new(ctx, &full, CoordSet::full(2)).unwrap();
        assert!(an.is_light(&[1, 1], small_c.alpha).unwrap().light);
        let ev = an.canonical_recovery_event(&[1, 1], CoordSet::EMPTY, &[]).unwrap();
        assert!(!ev.fixed_point && ev.one_pass.len() == 4);
    }

    #[test]
    fn dangerous_examples() {
        let and = make_gadget(GadgetKind::And, 2).unwrap();
        let det = SimulationConstants::det_paper();
        let full1 = UniformSubset::full(1, 2).unwrap();
        let an = Analyzer::new(Context::new(&and, &det).unwrap(), &full1, CoordSet::full(1)).unwrap();
        let r = an.is_dangerous(&[0], 0.1).unwrap();
        assert!(r.leaking);
        let g = xor();
        let full = UniformSubset::full(3, 2).unwrap();
        let an = Analyzer::new(Context::new(&g, &det).unwrap(), &full, CoordSet::full(3)).unwrap();
        let r = an.is_dangerous(&[0, 1, 1], 0.01).unwrap();
        assert!(!r.dangerous());
    }

    #[test]
    fn skew_bias_examples() {
        let g = xor();
        let det = SimulationConstants::det_paper();
        let full = UniformSubset::full(3, 2).unwrap();
        let an = Analyzer::new(Context::new(&g, &det).unwrap(), &full, CoordSet::full(3)).unwrap();
        let r = an.skew_bias_check(&[0, 1, 0], &[1], CoordSet::single(2), 0.0).unwrap();
        assert!(r.e.abs() < 1e-12 && !r.skewing && !r.biasing);
        let full1 = UniformSubset::full(1, 2).unwrap();
        let an = Analyzer::new(Context::new(&g, &det).unwrap(), &full1, CoordSet::full(1)).unwrap();
        // Nothing is left outside J: Dm(Z_∅) = 0 exceeds the threshold e + t − 2 = −2.
        let r = an.skew_bias_check(&[0], &[0], CoordSet::single(0), 0.0).unwrap();
        assert!(r.skewing && !r.biasing);
        assert!(!an.skew_bias_check(&[0], &[0], CoordSet::single(0), 2.0).unwrap().skewing);
    }

    #[test]
    fn main_lemma_examples() {
        let g = xor();
        let det = SimulationConstants::det_paper();
        let full = UniformSubset::full(3, 2).unwrap();
        let ctx = Context::new(&g, &det).unwrap();
        let r = main_lemma_estimate(&full, &full, ctx, det.alpha, det.gamma).unwrap();
        assert_eq!(r.unsafe_mass, exact::zero());
        let pm = UniformSubset::point_mass(3, 2, &[0, 1, 0]).unwrap();
        let r = main_lemma_estimate(&full, &pm, ctx, det.alpha, det.gamma).unwrap();
        assert_eq!(r.unsafe_mass, exact::one());
        assert_eq!(r.not_almost_uniform, 8);
        let big = UniformSubset::point_mass(9, 2, &[0; 9]).unwrap();
        assert!(matches!(main_lemma_estimate(&big, &big, ctx, 0.1, 0.1), Err(LabError::Guard(_))));
    }
}
