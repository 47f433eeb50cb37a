//! Deterministic simulation: turns a protocol for `S∘g^n` into a decision tree for `S`
//! while tracing the deficiency of both sides.

use std::fmt;

use serde::Serialize;

use crate::disc::disc_exact;
use crate::dist::UniformSubset;
use crate::error::{invalid, LabError, Result};
use crate::exact::{self, ratio, ser_real, Rational};
use crate::model::{
    bits_to_string, CoordSet, DecisionTree, DtNode, Gadget, Party, ProtocolNode, ProtocolTree, Restriction,
    SimulationConstants,
};
use crate::safety::{Analyzer, Context};
use crate::TOL;

/// Largest `n` the simulations accept.
pub const MAX_SIM_N: usize = 8;
/// Largest `|Λ|^n` for a full-support start.
pub const MAX_SIM_SPACE: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    SafeFilter,
    Message,
    DensityFix,
    Query,
    GCondition,
    Recovery,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Step::SafeFilter => "safe-filter",
            Step::Message => "message",
            Step::DensityFix => "density-fix",
            Step::Query => "query",
            Step::GCondition => "g-condition",
            Step::Recovery => "recovery",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEvent {
    pub iteration: usize,
    pub step: Step,
    /// The side whose variable the step acts on.
    pub party: Party,
    /// `[Dm(X_free), Dm(Y_free)]` before and after, each on the free set at that moment.
    #[serde(serialize_with = "exact::ser_reals")]
    pub deficiency_before: [f64; 2],
    #[serde(serialize_with = "exact::ser_reals")]
    pub deficiency_after: [f64; 2],
    #[serde(serialize_with = "exact::ser_opt_rational")]
    pub event_prob: Option<Rational>,
    pub i: Option<CoordSet>,
    pub notes: String,
}

impl TraceEvent {
    /// Conditioning raises the deficiency by at most `log2(1/prob)`; a query never raises it.
    pub fn conserves(&self) -> bool {
        let side = (self.party == Party::Bob) as usize;
        match &self.event_prob {
            Some(p) => {
                self.deficiency_after[side] <= self.deficiency_before[side] - exact::log2(p) + TOL
                    && (self.deficiency_after[1 - side] - self.deficiency_before[1 - side]).abs() <= TOL
            }
            None => (0..2).all(|s| self.deficiency_after[s] <= self.deficiency_before[s] + TOL),
        }
    }

    fn total_before(&self) -> f64 {
        self.deficiency_before[0] + self.deficiency_before[1]
    }

    fn total_after(&self) -> f64 {
        self.deficiency_after[0] + self.deficiency_after[1]
    }
}

/// Per-iteration accounting for a simulated round that made queries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryAccounting {
    pub i: CoordSet,
    /// Change of the combined deficiency across density fix, query, g-conditioning and recovery.
    #[serde(serialize_with = "ser_real")]
    pub change: f64,
    /// `−σΔ|I| + log(1/p_g) + log(1/p_rec)`.
    #[serde(serialize_with = "ser_real")]
    pub bound: f64,
    pub holds: bool,
    /// `p_safe ≥ 1/2`, `p_g ≥ 2^{−|I|−1}`, `p_rec ≥ 1/2`.
    pub premises: bool,
    /// `−(σΔ|I| − |I| − 2)`.
    #[serde(serialize_with = "ser_real")]
    pub premise_bound: f64,
    pub premise_holds: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub speaker: Party,
    pub message_bit: u8,
    /// Speaker `(σ+4/c)`-sparse and listener `σ`-sparse on the free set at the loop head.
    pub structured_at_head: bool,
    pub accounting: Option<QueryAccounting>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetRun {
    pub output: String,
    pub queries: usize,
    pub transcript: String,
    pub restriction: Restriction,
    #[serde(serialize_with = "ser_real")]
    pub delta: f64,
    pub in_regime: bool,
    /// Some final support pair satisfies `g^n(x, y) = z`, so the output is valid for `z`.
    pub fiber_nonempty: Option<bool>,
    /// Minimal sparsities at the end satisfy `σ_X + σ_Y ≤ 1 − 8/c − γ`.
    pub uniformity_precondition: bool,
    pub invariant_violations: Vec<String>,
    pub iterations: Vec<IterationSummary>,
    pub trace: Vec<TraceEvent>,
}

impl DetRun {
    /// Whether correctness rests on the direct fiber check rather than the precondition.
    pub fn flagged(&self) -> bool {
        !self.uniformity_precondition
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationFailure {
    pub step: Step,
    pub reason: String,
    pub iteration: usize,
    #[serde(serialize_with = "ser_real")]
    pub delta: f64,
    pub c: f64,
    pub n: usize,
    pub in_regime: bool,
    pub trace: Vec<TraceEvent>,
}

/// Largest set `I ⊆ scope` violating `σ`-sparsity (ties: smallest mask) and the
/// lexicographically smallest `x_I` with `Pr[X_I = x_I] > 2^{σΔ|I| − b|I|}`.
pub fn maximal_violating_set(d: &UniformSubset, sigma: f64, delta: f64, scope: CoordSet) -> Result<(CoordSet, Option<Vec<u8>>)> {
    if scope.len() > crate::dist::MAX_SUBSET_N {
        return Err(LabError::Guard(format!("subset enumeration over {} coordinates", scope.len())));
    }
    let b = d.b();
    let mut subsets: Vec<CoordSet> = scope.nonempty_subsets().collect();
    subsets.sort_by_key(|s| (std::cmp::Reverse(s.len()), s.0));
    for s in subsets {
        let size = s.len() as f64;
        let exponent = sigma * delta * size - b * size;
        let total = d.len() as f64;
        let first = d
            .projection_counts(s)
            .into_iter()
            .find(|&(_, c)| (c as f64 / total).log2() - exponent > TOL);
        if let Some((key, _)) = first {
            return Ok((s, Some(d.key_symbols(key, s))));
        }
    }
    Ok((CoordSet::EMPTY, None))
}

/// `g` read with the speaker's symbol first.
pub(crate) fn oriented(g: &Gadget, speaker: Party) -> Gadget {
    match speaker {
        Party::Alice => g.clone(),
        Party::Bob => g.transpose(),
    }
}

/// Conditions the listener on `g(x_I, ·) = z_I` (speaker symbol first in `g_spk`).
pub(crate) fn g_condition(
    listener: &UniformSubset,
    g_spk: &Gadget,
    i: CoordSet,
    x_i: &[u8],
    z_i: &[u8],
) -> Result<(UniformSubset, Rational)> {
    let coords = i.to_vec();
    listener.condition(&format!("g(x_{i}, ·) = {}", bits_to_string(z_i)), |p| {
        coords.iter().enumerate().all(|(k, &c)| g_spk.eval(x_i[k], listener.digit(p, c)) == z_i[k])
    })
}

/// Whether every support pair follows `transcript` and agrees with `ρ` on fixed coordinates.
pub(crate) fn consistency_violations(
    protocol: &ProtocolTree,
    transcript: &str,
    sides: &[UniformSubset; 2],
    rho: &Restriction,
    g: &Gadget,
) -> Vec<String> {
    let mut out = Vec::new();
    let mut node = protocol.root();
    for (k, bit) in transcript.bytes().enumerate() {
        let ProtocolNode::Node { owner, rule, children } = node else { break };
        let side = &sides[(*owner == Party::Bob) as usize];
        let want = bit == b'1';
        if side.points().iter().any(|&p| rule.eval(&side.decode(p), protocol.alphabet_size()) != want) {
            out.push(format!("support disagrees with transcript bit {k}"));
        }
        node = &children[want as usize];
    }
    for i in rho.fixed().iter() {
        let z = rho.get(i).unwrap();
        let xs: Vec<u8> = sides[0].projection(CoordSet::single(i)).counts.iter().map(|(v, _)| v[0]).collect();
        let ys: Vec<u8> = sides[1].projection(CoordSet::single(i)).counts.iter().map(|(v, _)| v[0]).collect();
        if xs.iter().any(|&a| ys.iter().any(|&b| g.eval(a, b) != z)) {
            out.push(format!("g disagrees with ρ at coordinate {i}"));
        }
    }
    out
}

/// Some `(x, y)` in the support product with `g^n(x, y) = z`.
pub(crate) fn fiber_nonempty(sides: &[UniformSubset; 2], g: &Gadget, z: &[u8]) -> bool {
    let n = z.len();
    let ys: Vec<Vec<u8>> = sides[1].tuples();
    sides[0].tuples().iter().any(|x| ys.iter().any(|y| (0..n).all(|i| g.eval(x[i], y[i]) == z[i])))
}

pub(crate) fn start_supports(n: usize, q: usize) -> Result<UniformSubset> {
    if n > MAX_SIM_N {
        return Err(LabError::Guard(format!("n = {n} exceeds {MAX_SIM_N}")));
    }
    match (q as u64).checked_pow(n as u32) {
        Some(s) if s <= MAX_SIM_SPACE => UniformSubset::full(n, q),
        _ => Err(LabError::Guard(format!("|Λ|^n = {q}^{n} exceeds 2^24"))),
    }
}

enum Progress {
    Done(Box<DetRun>),
    Need(usize),
}

/// Deterministic simulator for one protocol, gadget and constant profile.
pub struct DetSimulator<'a> {
    protocol: &'a ProtocolTree,
    gadget: &'a Gadget,
    constants: &'a SimulationConstants,
    delta: f64,
}

impl<'a> DetSimulator<'a> {
    pub fn new(protocol: &'a ProtocolTree, gadget: &'a Gadget, constants: &'a SimulationConstants) -> Result<Self> {
        let delta = disc_exact(gadget, None)?.delta;
        Self::with_delta(protocol, gadget, constants, delta)
    }

    pub fn with_delta(protocol: &'a ProtocolTree, gadget: &'a Gadget, constants: &'a SimulationConstants, delta: f64) -> Result<Self> {
        constants.validate()?;
        if protocol.alphabet_size() != gadget.size() {
            return invalid("protocol and gadget use different alphabets");
        }
        start_supports(protocol.n(), gadget.size())?;
        let in_regime = constants.in_regime(delta, protocol.n());
        if constants.strict_mode && !in_regime {
            return Err(LabError::OutOfRegime(format!(
                "Δ = {delta:.4} < c·log n = {:.4}",
                constants.c * (protocol.n() as f64).log2()
            )));
        }
        Ok(DetSimulator { protocol, gadget, constants, delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn failure(&self, step: Step, reason: String, iteration: usize, trace: &[TraceEvent]) -> LabError {
        let n = self.protocol.n();
        LabError::Simulation(Box::new(SimulationFailure {
            step,
            reason,
            iteration,
            delta: self.delta,
            c: self.constants.c,
            n,
            in_regime: self.constants.in_regime(self.delta, n),
            trace: trace.to_vec(),
        }))
    }

    pub fn simulate(&self, z: &[u8]) -> Result<DetRun> {
        if z.len() != self.protocol.n() || z.iter().any(|&b| b > 1) {
            return invalid("z must be a bit string of length n");
        }
        let answers: Vec<Option<u8>> = z.iter().map(|&b| Some(b)).collect();
        match self.run(&answers)? {
            Progress::Done(r) => Ok(*r),
            Progress::Need(_) => unreachable!("every answer is known"),
        }
    }

    /// The decision tree obtained by branching on every query answer.
    pub fn full_tree(&self) -> Result<DecisionTree> {
        let root = self.build(vec![None; self.protocol.n()])?;
        DecisionTree::new(self.protocol.n(), root)
    }

    fn build(&self, answers: Vec<Option<u8>>) -> Result<DtNode> {
        match self.run(&answers) {
            Ok(Progress::Done(r)) => Ok(DtNode::leaf(r.output)),
            Ok(Progress::Need(i)) => {
                let mut a0 = answers.clone();
                a0[i] = Some(0);
                let mut a1 = answers;
                a1[i] = Some(1);
                let (zero, one) = rayon::join(|| self.build(a0), || self.build(a1));
                Ok(DtNode::query(i, zero?, one?))
            }
            Err(LabError::Simulation(f)) => Ok(DtNode::failed(format!("{}: {}", f.step, f.reason))),
            Err(e) => Err(e),
        }
    }

    fn run(&self, answers: &[Option<u8>]) -> Result<Progress> {
        let n = self.protocol.n();
        let q = self.gadget.size();
        let (sigma, delta) = (self.constants.sigma, self.delta);
        let full = start_supports(n, q)?;
        let mut sides = [full.clone(), full];
        let mut rho = Restriction::free_all(n);
        let mut transcript = String::new();
        let mut trace: Vec<TraceEvent> = Vec::new();
        let mut iterations = Vec::new();
        let mut violations = Vec::new();
        let mut queries = 0;
        let mut node = self.protocol.root();
        let mut iteration = 0;

        let defs = |sides: &[UniformSubset; 2], free: CoordSet| [sides[0].deficiency_value(free), sides[1].deficiency_value(free)];

        loop {
            let (owner, rule, children) = match node {
                ProtocolNode::Leaf(o) => {
                    let free = rho.free();
                    let sx = sides[0].minimal_sigma_on(free, delta)?;
                    let sy = sides[1].minimal_sigma_on(free, delta)?;
                    let c = self.constants.c;
                    let complete: Option<Vec<u8>> = answers.iter().copied().collect();
                    return Ok(Progress::Done(Box::new(DetRun {
                        output: o.clone(),
                        queries,
                        transcript,
                        restriction: rho,
                        delta,
                        in_regime: self.constants.in_regime(delta, n),
                        fiber_nonempty: complete.map(|z| fiber_nonempty(&sides, self.gadget, &z)),
                        uniformity_precondition: sx + sy <= 1.0 - 8.0 / c - self.constants.gamma + TOL,
                        invariant_violations: violations,
                        iterations,
                        trace,
                    })));
                }
                ProtocolNode::Node { owner, rule, children } => (*owner, rule, children),
            };
            let s = (owner == Party::Bob) as usize;
            let l = 1 - s;
            let free = rho.free();
            let g_spk = oriented(self.gadget, owner);
            let ctx = Context::with_delta(&g_spk, self.constants, delta);

            for v in consistency_violations(self.protocol, &transcript, &sides, &rho, self.gadget) {
                violations.push(format!("iteration {iteration}: {v}"));
            }
            let structured_at_head = sides[s].sparsity_on(free, sigma + self.constants.slack(), delta)?.holds
                && sides[l].sparsity_on(free, sigma, delta)?.holds;

            // 1. Keep the speaker's safe values.
            let before = defs(&sides, free);
            let safe: Vec<u32> = {
                let an = Analyzer::new(ctx, &sides[l], free)?;
                let mut keep = Vec::new();
                for &p in sides[s].points() {
                    if an.classify(&sides[s].decode(p))?.safe {
                        keep.push(p);
                    }
                }
                keep
            };
            if safe.is_empty() {
                return Err(self.failure(Step::SafeFilter, "no safe value remains".into(), iteration, &trace));
            }
            let p_safe = ratio(safe.len() as u64, sides[s].len() as u64);
            sides[s] = sides[s].with_points(safe)?;
            trace.push(TraceEvent {
                iteration,
                step: Step::SafeFilter,
                party: owner,
                deficiency_before: before,
                deficiency_after: defs(&sides, free),
                event_prob: Some(p_safe.clone()),
                i: None,
                notes: String::new(),
            });

            // 2. Majority message bit, ties to 0.
            let before = defs(&sides, free);
            let ones = sides[s].points().iter().filter(|&&p| rule.eval(&sides[s].decode(p), q)).count();
            let bit = (2 * ones > sides[s].len()) as u8;
            let speaker = sides[s].clone();
            let (cond, p_msg) = speaker.condition("message", |p| rule.eval(&speaker.decode(p), q) == (bit == 1))?;
            sides[s] = cond;
            transcript.push(if bit == 1 { '1' } else { '0' });
            trace.push(TraceEvent {
                iteration,
                step: Step::Message,
                party: owner,
                deficiency_before: before,
                deficiency_after: defs(&sides, free),
                event_prob: Some(p_msg),
                i: None,
                notes: format!("bit {bit}"),
            });

            // 3. Restore density on a maximal violating set.
            let (i_set, x_i) = maximal_violating_set(&sides[s], sigma, delta, free)?;
            let mut accounting = None;
            if let Some(x_i) = x_i {
                let start_total = defs(&sides, free).iter().sum::<f64>();
                let before = defs(&sides, free);
                let (cond, p_fix) = sides[s].condition_on_values(i_set, &x_i)?;
                sides[s] = cond;
                trace.push(TraceEvent {
                    iteration,
                    step: Step::DensityFix,
                    party: owner,
                    deficiency_before: before,
                    deficiency_after: defs(&sides, free),
                    event_prob: Some(p_fix),
                    i: Some(i_set),
                    notes: format!("x_I = {x_i:?}"),
                });

                // 4. Query z_I.
                let mut z_i = Vec::with_capacity(i_set.len());
                for c in i_set.iter() {
                    match answers[c] {
                        Some(v) => z_i.push(v),
                        None => return Ok(Progress::Need(c)),
                    }
                }
                let before = defs(&sides, free);
                for (c, &v) in i_set.iter().zip(&z_i) {
                    rho.fix_coord(c, v);
                }
                queries += i_set.len();
                let new_free = rho.free();
                trace.push(TraceEvent {
                    iteration,
                    step: Step::Query,
                    party: owner,
                    deficiency_before: before,
                    deficiency_after: defs(&sides, new_free),
                    event_prob: None,
                    i: Some(i_set),
                    notes: format!("z_I = {}", bits_to_string(&z_i)),
                });

                // 5. Listener agrees with the query answers.
                let listener_before = sides[l].clone();
                let before = defs(&sides, new_free);
                let (cond, p_g) = g_condition(&sides[l], &g_spk, i_set, &x_i, &z_i)
                    .map_err(|e| self.failure(Step::GCondition, e.to_string(), iteration, &trace))?;
                sides[l] = cond;
                trace.push(TraceEvent {
                    iteration,
                    step: Step::GCondition,
                    party: owner.other(),
                    deficiency_before: before,
                    deficiency_after: defs(&sides, new_free),
                    event_prob: Some(p_g.clone()),
                    i: Some(i_set),
                    notes: String::new(),
                });

                // 6. Recovery event.
                let before = defs(&sides, new_free);
                let ev = {
                    let an = Analyzer::new(ctx, &listener_before, free)?;
                    let mut x = vec![0u8; n];
                    for (c, &v) in i_set.iter().zip(&x_i) {
                        x[c] = v;
                    }
                    an.canonical_recovery_event(&x, i_set, &z_i)?
                };
                let p_rec = ev.prob.clone();
                match ev.event_subset() {
                    Some(e) if exact::to_f64(&p_rec) >= 0.5 - TOL => sides[l] = e,
                    _ => {
                        let reason = format!("recovery event probability {} below 1/2", exact::format_rational(&p_rec));
                        return Err(self.failure(Step::Recovery, reason, iteration, &trace));
                    }
                }
                trace.push(TraceEvent {
                    iteration,
                    step: Step::Recovery,
                    party: owner.other(),
                    deficiency_before: before,
                    deficiency_after: defs(&sides, new_free),
                    event_prob: Some(p_rec.clone()),
                    i: Some(i_set),
                    notes: if ev.fixed_point { "fixed point".into() } else { "one pass".into() },
                });

                let change = defs(&sides, new_free).iter().sum::<f64>() - start_total;
                let size = i_set.len() as f64;
                let bound = -sigma * delta * size - exact::log2(&p_g) - exact::log2(&p_rec);
                let premises = exact::to_f64(&p_safe) >= 0.5 - TOL
                    && exact::log2(&p_g) >= -size - 1.0 - TOL
                    && exact::to_f64(&p_rec) >= 0.5 - TOL;
                let premise_bound = -(sigma * delta * size - size - 2.0);
                accounting = Some(QueryAccounting {
                    i: i_set,
                    change,
                    bound,
                    holds: change <= bound + TOL,
                    premises,
                    premise_bound,
                    premise_holds: premises.then_some(change <= premise_bound + TOL),
                });
            }
            iterations.push(IterationSummary { iteration, speaker: owner, message_bit: bit, structured_at_head, accounting });
            node = &children[bit as usize];
            iteration += 1;
        }
    }
}

pub fn simulate_det(protocol: &ProtocolTree, g: &Gadget, z: &[u8], constants: &SimulationConstants) -> Result<DetRun> {
    DetSimulator::new(protocol, g, constants)?.simulate(z)
}

pub fn build_full_tree(protocol: &ProtocolTree, g: &Gadget, constants: &SimulationConstants) -> Result<DecisionTree> {
    DetSimulator::new(protocol, g, constants)?.full_tree()
}

/// Trace events whose deficiency change exceeds the conditioning cost.
pub fn conservation_failures(trace: &[TraceEvent]) -> Vec<&TraceEvent> {
    trace.iter().filter(|e| !e.conserves()).collect()
}

/// Sum of combined deficiency changes over a trace; telescopes to the final value.
pub fn total_change(trace: &[TraceEvent]) -> f64 {
    trace.iter().map(|e| e.total_after() - e.total_before()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gadget, GadgetKind, Rule};

    fn xor_relay() -> ProtocolTree {
        // Alice sends x_0; Bob answers x_0 ⊕ y_0.
        let bob = |sent: u8| {
            let set = if sent == 0 { vec![1] } else { vec![0] };
            ProtocolNode::node(Party::Bob, Rule::In { coord: 0, set }, ProtocolNode::leaf("0"), ProtocolNode::leaf("1"))
        };
        ProtocolTree::new(1, 2, ProtocolNode::node(Party::Alice, Rule::Bit { coord: 0, bit: 0 }, bob(0), bob(1))).unwrap()
    }

    #[test]
    fn maximal_violating_set_examples() {
        let full = UniformSubset::full(2, 2).unwrap();
        assert_eq!(maximal_violating_set(&full, 0.25, 2.0, CoordSet::full(2)).unwrap(), (CoordSet::EMPTY, None));
        let fixed = UniformSubset::from_tuples(2, 2, &[vec![0, 1], vec![1, 1]]).unwrap();
        let (i, x) = maximal_violating_set(&fixed, 0.25, 2.0, CoordSet::full(2)).unwrap();
        assert_eq!((i, x), (CoordSet::single(1), Some(vec![1])));
        let sym = UniformSubset::from_tuples(2, 2, &[vec![0, 0], vec![1, 1]]).unwrap();
        let (i, x) = maximal_violating_set(&sym, 0.2, 2.0, CoordSet::full(2)).unwrap();
        assert_eq!((i, x), (CoordSet::full(2), Some(vec![0, 0])));
    }

    #[test]
    fn constant_protocol_makes_no_queries() {
        let g = make_gadget(GadgetKind::Xor, 2).unwrap();
        let p = ProtocolTree::new(2, 2, ProtocolNode::leaf("o")).unwrap();
        let run = simulate_det(&p, &g, &[1, 0], &SimulationConstants::det_paper()).unwrap();
        assert_eq!((run.output.as_str(), run.queries), ("o", 0));
        let t = build_full_tree(&p, &g, &SimulationConstants::det_paper()).unwrap();
        assert_eq!(t.leaf_count(), 1);
    }

    #[test]
    fn xor_relay_queries_once() {
        let g = make_gadget(GadgetKind::Xor, 2).unwrap();
        let p = xor_relay();
        let k = SimulationConstants::det_paper();
        for z in 0..2u8 {
            let run = simulate_det(&p, &g, &[z], &k).unwrap();
            assert_eq!(run.output, z.to_string());
            assert_eq!(run.queries, 1);
            assert!(run.trace.iter().all(|e| e.conserves()));
            assert!(run.invariant_violations.is_empty());
            assert_eq!(run.fiber_nonempty, Some(true));
        }
        let t = build_full_tree(&p, &g, &k).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.run(&[1]), ("1".to_string(), 1));
    }

    #[test]
    fn strict_mode_refuses_out_of_regime() {
        let g = make_gadget(GadgetKind::Xor, 2).unwrap();
        let k = SimulationConstants { strict_mode: true, ..SimulationConstants::det_paper() };
        let p = ProtocolTree::new(2, 2, ProtocolNode::leaf("o")).unwrap();
        assert!(matches!(DetSimulator::new(&p, &g, &k), Err(LabError::OutOfRegime(_))));
    }
}
