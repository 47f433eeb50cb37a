//! Randomized simulation: exact transcript distributions by branch enumeration, a
//! seeded sampler, the density-restoring partition and the Erlang tail.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::disc::disc_exact;
use crate::dist::UniformSubset;
use crate::error::{invalid, LabError, Result};
use crate::exact::{self, ratio, ser_real, Rational};
use crate::model::{bits_to_string, CoordSet, Gadget, Party, ProtocolNode, RandomizedProtocol, Restriction, SimulationConstants};
use crate::safety::{recovery_prob_ok, Analyzer, Context};
use crate::simdet::{g_condition, maximal_violating_set, oriented, start_supports};
use crate::TOL;

/// Key of the halted bucket.
pub const HALTED: &str = "⊥";
/// Prefix of degenerate-bucket keys.
pub const DEGENERATE_PREFIX: &str = "degenerate:";
/// Default cap on enumerated branches.
pub const DEFAULT_MAX_BRANCHES: usize = 1_000_000;
/// Largest fiber enumerated for the reference distribution.
pub const MAX_FIBER: u64 = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionClass {
    #[serde(skip)]
    pub members: UniformSubset,
    pub size: usize,
    pub i: CoordSet,
    pub x_i: Vec<u8>,
    #[serde(serialize_with = "exact::ser_rational")]
    pub p: Rational,
    #[serde(serialize_with = "exact::ser_rational")]
    pub p_geq: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityPartition {
    pub scope: CoordSet,
    pub classes: Vec<PartitionClass>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionCheck {
    pub partitions: bool,
    pub constant_on_i: bool,
    pub sparse_outside_i: bool,
    /// `Dm(X_{scope−I_j} | class) ≤ Dm(X_scope) + σΔ|I_j| + log(1/p_{≥j})`.
    pub deficiency_bound: bool,
    /// The per-step form with `−σΔ|I_j|` in place of `+σΔ|I_j|`.
    pub strong_deficiency_bound: bool,
}

impl PartitionCheck {
    pub fn all(&self) -> bool {
        self.partitions && self.constant_on_i && self.sparse_outside_i && self.deficiency_bound && self.strong_deficiency_bound
    }
}

/// Greedy partition: peel off `{x : x_I = x_I*}` for a maximal violating `I` until the
/// remainder is `σ`-sparse on `scope`.
pub fn density_partition(d: &UniformSubset, sigma: f64, delta: f64, scope: CoordSet) -> Result<DensityPartition> {
    if delta <= 0.0 {
        return invalid("density partition needs Δ > 0");
    }
    let total = d.len() as u64;
    let mut rest = d.clone();
    let mut classes = Vec::new();
    loop {
        let p_geq = ratio(rest.len() as u64, total);
        let (i, x_i) = maximal_violating_set(&rest, sigma, delta, scope)?;
        let Some(x_i) = x_i else {
            classes.push(PartitionClass {
                size: rest.len(),
                p: p_geq.clone(),
                members: rest,
                i: CoordSet::EMPTY,
                x_i: Vec::new(),
                p_geq,
            });
            break;
        };
        let key = rest.symbols_key(&x_i);
        let (inside, outside): (Vec<u32>, Vec<u32>) = rest.points().iter().partition(|&&p| rest.key(p, i) == key);
        let members = rest.with_points(inside)?;
        classes.push(PartitionClass { size: members.len(), p: ratio(members.len() as u64, total), members, i, x_i, p_geq });
        if outside.is_empty() {
            break;
        }
        rest = rest.with_points(outside)?;
    }
    Ok(DensityPartition { scope, classes })
}

impl DensityPartition {
    pub fn verify(&self, d: &UniformSubset, sigma: f64, delta: f64) -> Result<PartitionCheck> {
        let mut all: Vec<u32> = self.classes.iter().flat_map(|c| c.members.points().iter().copied()).collect();
        all.sort_unstable();
        let partitions = all == d.points();
        let base = d.deficiency_value(self.scope);
        let mut check = PartitionCheck {
            partitions,
            constant_on_i: true,
            sparse_outside_i: true,
            deficiency_bound: true,
            strong_deficiency_bound: true,
        };
        for c in &self.classes {
            let key = c.members.symbols_key(&c.x_i);
            if c.members.points().iter().any(|&p| c.members.key(p, c.i) != key) {
                check.constant_on_i = false;
            }
            let outside = self.scope.minus(c.i);
            if !c.members.sparsity_on(outside, sigma, delta)?.holds {
                check.sparse_outside_i = false;
            }
            let dm = c.members.deficiency_value(outside);
            let size = c.i.len() as f64;
            let cost = -exact::log2(&c.p_geq);
            if dm > base + sigma * delta * size + cost + TOL {
                check.deficiency_bound = false;
            }
            if dm > base - sigma * delta * size + cost + TOL {
                check.strong_deficiency_bound = false;
            }
        }
        Ok(check)
    }
}

/// Exact distribution over outcome keys: transcripts, `⊥`, and `degenerate:<step>`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TranscriptDist {
    pub masses: BTreeMap<String, Rational>,
}

impl Serialize for TranscriptDist {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_map(self.masses.iter().map(|(k, v)| (k, exact::format_rational(v))))
    }
}

impl TranscriptDist {
    pub fn add(&mut self, key: &str, mass: &Rational) {
        *self.masses.entry(key.to_string()).or_insert_with(exact::zero) += mass;
    }

    pub fn total(&self) -> Rational {
        self.masses.values().cloned().sum()
    }

    pub fn get(&self, key: &str) -> Rational {
        self.masses.get(key).cloned().unwrap_or_else(exact::zero)
    }

    pub fn halted(&self) -> Rational {
        self.get(HALTED)
    }

    pub fn degenerate(&self) -> Rational {
        self.masses.iter().filter(|(k, _)| k.starts_with(DEGENERATE_PREFIX)).map(|(_, v)| v.clone()).sum()
    }

    /// `½ Σ |p(k) − q(k)|` over the union of keys.
    pub fn distance(&self, other: &TranscriptDist) -> Rational {
        let mut keys: Vec<&String> = self.masses.keys().chain(other.masses.keys()).collect();
        keys.sort();
        keys.dedup();
        let sum: Rational = keys.into_iter().map(|k| num::Signed::abs(&(self.get(k) - other.get(k)))).sum();
        sum / exact::int(2)
    }
}

/// One extended-transcript record per iteration.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ExtendedRecord {
    pub safe: u8,
    pub message: u8,
    pub class: usize,
    pub z_i: String,
    pub recovery: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandAccounting {
    pub iteration: usize,
    pub i: CoordSet,
    #[serde(serialize_with = "ser_real")]
    pub change: f64,
    /// `−σΔ|I| + log(1/p_{≥j}) + log(1/p_g) + log(1/p_rec)`.
    #[serde(serialize_with = "ser_real")]
    pub bound: f64,
    pub holds: bool,
    /// Same with `(σ − 2/c)` in place of `σ`.
    #[serde(serialize_with = "ser_real")]
    pub weak_bound: f64,
    pub weak_holds: bool,
}

/// A completed branch of the exact enumeration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchRecord {
    pub outcome: String,
    #[serde(serialize_with = "exact::ser_rational")]
    pub prob: Rational,
    #[serde(serialize_with = "ser_real")]
    pub k_msg: f64,
    #[serde(serialize_with = "ser_real")]
    pub k_prt: f64,
    /// `p_{≥j}` of every chosen partition class, in order.
    #[serde(serialize_with = "ser_rationals")]
    pub p_geq: Vec<Rational>,
    /// Whether some halting check exceeded a threshold (recorded even when halting is off).
    pub exceeded: bool,
    pub extended: Vec<ExtendedRecord>,
    pub accounting: Vec<RandAccounting>,
    pub queries: usize,
}

fn ser_rationals<S: serde::Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(exact::format_rational))
}

impl BranchRecord {
    /// `Σ log(1/p_{≥j})` recomputed from the stored class probabilities.
    pub fn recomputed_k_prt(&self) -> f64 {
        self.p_geq.iter().map(|p| -exact::log2(p)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandRun {
    pub dist: TranscriptDist,
    pub branches: Vec<BranchRecord>,
    #[serde(serialize_with = "ser_real")]
    pub delta: f64,
    pub rounds: usize,
    #[serde(serialize_with = "ser_real")]
    pub kmsg_threshold: f64,
    #[serde(serialize_with = "ser_real")]
    pub kprt_threshold: f64,
    pub halting: bool,
    pub in_regime: bool,
}

/// Outcome of one sampled run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRun {
    pub outcome: String,
    pub queries: usize,
    pub extended: Vec<ExtendedRecord>,
}

#[derive(Clone, Debug)]
struct State<'p> {
    coin: usize,
    path: String,
    sides: [UniformSubset; 2],
    rho: Restriction,
    transcript: String,
    node: &'p ProtocolNode,
    k_msg: f64,
    k_prt: f64,
    exceeded: bool,
    p_geq: Vec<Rational>,
    extended: Vec<ExtendedRecord>,
    accounting: Vec<RandAccounting>,
    queries: usize,
    iteration: usize,
}

/// After the safe filter: the speaker's side and the message-bit probabilities.
struct AfterSafe {
    speaker: UniformSubset,
    p_one: Rational,
}

enum Next<'p> {
    Continue(State<'p>),
    Terminal(String, State<'p>),
}

/// Randomized simulator for one protocol, gadget, constants and input `z`.
pub struct RandSimulator<'a> {
    protocol: &'a RandomizedProtocol,
    gadget: &'a Gadget,
    constants: &'a SimulationConstants,
    z: Vec<u8>,
    delta: f64,
    rounds: usize,
    halting: bool,
    max_branches: usize,
    safe_memo: Mutex<HashMap<String, Arc<Option<AfterSafe>>>>,
    partition_memo: Mutex<HashMap<String, Arc<DensityPartition>>>,
}

impl<'a> RandSimulator<'a> {
    pub fn new(protocol: &'a RandomizedProtocol, gadget: &'a Gadget, z: &[u8], constants: &'a SimulationConstants) -> Result<Self> {
        let delta = disc_exact(gadget, None)?.delta;
        Self::with_delta(protocol, gadget, z, constants, delta)
    }

    pub fn with_delta(
        protocol: &'a RandomizedProtocol,
        gadget: &'a Gadget,
        z: &[u8],
        constants: &'a SimulationConstants,
        delta: f64,
    ) -> Result<Self> {
        constants.validate()?;
        if protocol.alphabet_size() != gadget.size() {
            return invalid("protocol and gadget use different alphabets");
        }
        if z.len() != protocol.n() || z.iter().any(|&b| b > 1) {
            return invalid("z must be a bit string of length n");
        }
        start_supports(protocol.n(), gadget.size())?;
        if constants.strict_mode && !constants.in_regime(delta, protocol.n()) {
            return Err(LabError::OutOfRegime(format!("Δ = {delta:.4} < c·log n")));
        }
        Ok(RandSimulator {
            protocol,
            gadget,
            constants,
            z: z.to_vec(),
            delta,
            rounds: protocol.depth(),
            halting: true,
            max_branches: DEFAULT_MAX_BRANCHES,
            safe_memo: Mutex::new(HashMap::new()),
            partition_memo: Mutex::new(HashMap::new()),
        })
    }

    /// Disables the halting step (the distribution without halting).
    pub fn without_halting(mut self) -> Self {
        self.halting = false;
        self
    }

    pub fn max_branches(mut self, cap: usize) -> Self {
        self.max_branches = cap;
        self
    }

    pub fn kmsg_threshold(&self) -> f64 {
        self.constants.kmsg_threshold.eval(self.rounds, self.delta)
    }

    pub fn kprt_threshold(&self) -> f64 {
        self.constants.kprt_threshold.eval(self.rounds, self.delta)
    }

    fn outcome_key(&self, coin: usize, transcript: &str) -> String {
        if self.protocol.branches().len() > 1 {
            format!("c{coin}/{transcript}")
        } else {
            transcript.to_string()
        }
    }

    fn start(&self, coin: usize) -> Result<State<'a>> {
        let n = self.protocol.n();
        let full = start_supports(n, self.gadget.size())?;
        Ok(State {
            coin,
            path: format!("c{coin}"),
            sides: [full.clone(), full],
            rho: Restriction::free_all(n),
            transcript: String::new(),
            node: self.protocol.branches()[coin].1.root(),
            k_msg: 0.0,
            k_prt: 0.0,
            exceeded: false,
            p_geq: Vec::new(),
            extended: Vec::new(),
            accounting: Vec::new(),
            queries: 0,
            iteration: 0,
        })
    }

    /// Step 1 and the message distribution; `None` when no safe value remains.
    fn after_safe(&self, st: &State<'a>) -> Result<Arc<Option<AfterSafe>>> {
        if let Some(v) = self.safe_memo.lock().unwrap().get(&st.path) {
            return Ok(v.clone());
        }
        let ProtocolNode::Node { owner, rule, .. } = st.node else { unreachable!() };
        let s = (*owner == Party::Bob) as usize;
        let free = st.rho.free();
        let g_spk = oriented(self.gadget, *owner);
        let ctx = Context::with_delta(&g_spk, self.constants, self.delta);
        let an = Analyzer::new(ctx, &st.sides[1 - s], free)?;
        let mut keep = Vec::new();
        for &p in st.sides[s].points() {
            if an.classify(&st.sides[s].decode(p))?.safe {
                keep.push(p);
            }
        }
        let out = if keep.is_empty() {
            None
        } else {
            let speaker = st.sides[s].with_points(keep)?;
            let q = self.gadget.size();
            let ones = speaker.points().iter().filter(|&&p| rule.eval(&speaker.decode(p), q)).count();
            Some(AfterSafe { p_one: ratio(ones as u64, speaker.len() as u64), speaker })
        };
        let out = Arc::new(out);
        self.safe_memo.lock().unwrap().insert(st.path.clone(), out.clone());
        Ok(out)
    }

    fn partition(&self, path: &str, speaker: &UniformSubset, free: CoordSet) -> Result<Arc<DensityPartition>> {
        if let Some(v) = self.partition_memo.lock().unwrap().get(path) {
            return Ok(v.clone());
        }
        let part = Arc::new(density_partition(speaker, self.constants.sigma, self.delta, free)?);
        self.partition_memo.lock().unwrap().insert(path.to_string(), part.clone());
        Ok(part)
    }

    /// Conditions the speaker on the message bit.
    fn after_message(&self, st: &State<'a>, safe: &AfterSafe, bit: u8) -> Result<(UniformSubset, Rational)> {
        let ProtocolNode::Node { rule, .. } = st.node else { unreachable!() };
        let q = self.gadget.size();
        let sp = &safe.speaker;
        sp.condition("message", |p| rule.eval(&sp.decode(p), q) == (bit == 1))
    }

    /// Steps 3–8 for the chosen bit and class; returns the next state or a terminal key.
    fn finish_iteration(
        &self,
        st: &State<'a>,
        speaker: UniformSubset,
        bit: u8,
        p_bit: &Rational,
        part: &DensityPartition,
        j: usize,
    ) -> Result<Next<'a>> {
        let ProtocolNode::Node { owner, children, .. } = st.node else { unreachable!() };
        let s = (*owner == Party::Bob) as usize;
        let l = 1 - s;
        let free = st.rho.free();
        let class = &part.classes[j];
        let mut next = st.clone();
        next.path = format!("{}|b{bit}|j{j}", st.path);
        next.transcript.push(if bit == 1 { '1' } else { '0' });
        next.k_msg += -exact::log2(p_bit);
        next.k_prt += -exact::log2(&class.p_geq);
        next.p_geq.push(class.p_geq.clone());
        next.sides[s] = speaker;
        let start_total: f64 = next.sides.iter().map(|d| d.deficiency_value(free)).sum();
        next.sides[s] = class.members.clone();

        let exceeded = next.k_prt > self.kprt_threshold() + TOL || next.k_msg > self.kmsg_threshold() + TOL;
        next.exceeded |= exceeded;
        let mut record = ExtendedRecord { safe: 1, message: bit, class: j, z_i: String::new(), recovery: 0 };
        if self.halting && exceeded {
            record.z_i = "-".into();
            next.extended.push(record);
            return Ok(Next::Terminal(HALTED.to_string(), next));
        }

        if !class.i.is_empty() {
            let z_i: Vec<u8> = class.i.iter().map(|c| self.z[c]).collect();
            for (c, &v) in class.i.iter().zip(&z_i) {
                next.rho.fix_coord(c, v);
            }
            next.queries += class.i.len();
            record.z_i = bits_to_string(&z_i);
            let g_spk = oriented(self.gadget, *owner);
            let listener_before = next.sides[l].clone();
            let Ok((_, p_g)) = g_condition(&listener_before, &g_spk, class.i, &class.x_i, &z_i) else {
                next.extended.push(record);
                return Ok(Next::Terminal(format!("{DEGENERATE_PREFIX}g-condition"), next));
            };
            let ctx = Context::with_delta(&g_spk, self.constants, self.delta);
            let an = Analyzer::new(ctx, &listener_before, free)?;
            let mut x = vec![0u8; self.protocol.n()];
            for (c, &v) in class.i.iter().zip(&class.x_i) {
                x[c] = v;
            }
            let ev = an.canonical_recovery_event(&x, class.i, &z_i)?;
            let exponent = self.constants.alpha * self.delta;
            match ev.event_subset() {
                Some(e) if recovery_prob_ok(&ev.prob, exponent, true) => next.sides[l] = e,
                _ => {
                    next.extended.push(record);
                    return Ok(Next::Terminal(format!("{DEGENERATE_PREFIX}recovery"), next));
                }
            }
            record.recovery = 1;
            let new_free = next.rho.free();
            let change = next.sides.iter().map(|d| d.deficiency_value(new_free)).sum::<f64>() - start_total;
            let size = class.i.len() as f64;
            let costs = -exact::log2(&class.p_geq) - exact::log2(&p_g) - exact::log2(&ev.prob);
            let bound = -self.constants.sigma * self.delta * size + costs;
            let weak_bound = -(self.constants.sigma - 2.0 / self.constants.c) * self.delta * size + costs;
            next.accounting.push(RandAccounting {
                iteration: st.iteration,
                i: class.i,
                change,
                bound,
                holds: change <= bound + TOL,
                weak_bound,
                weak_holds: change <= weak_bound + TOL,
            });
        } else {
            record.recovery = 1;
        }
        next.extended.push(record);
        next.node = &children[bit as usize];
        next.iteration += 1;
        Ok(Next::Continue(next))
    }

    fn terminal_of(&self, st: &State<'a>) -> Option<String> {
        match st.node {
            ProtocolNode::Leaf(_) => Some(self.outcome_key(st.coin, &st.transcript)),
            _ => None,
        }
    }

    fn record(&self, st: &State<'a>, outcome: String, prob: Rational) -> BranchRecord {
        BranchRecord {
            outcome,
            prob,
            k_msg: st.k_msg,
            k_prt: st.k_prt,
            p_geq: st.p_geq.clone(),
            exceeded: st.exceeded,
            extended: st.extended.clone(),
            accounting: st.accounting.clone(),
            queries: st.queries,
        }
    }

    /// Exact enumeration of coins, message bits and partition classes.
    pub fn exact(&self) -> Result<RandRun> {
        let mut branches = Vec::new();
        for (coin, (p, _)) in self.protocol.branches().iter().enumerate() {
            self.explore(self.start(coin)?, p.clone(), &mut branches)?;
        }
        let mut dist = TranscriptDist::default();
        for b in &branches {
            dist.add(&b.outcome, &b.prob);
        }
        Ok(RandRun {
            dist,
            branches,
            delta: self.delta,
            rounds: self.rounds,
            kmsg_threshold: self.kmsg_threshold(),
            kprt_threshold: self.kprt_threshold(),
            halting: self.halting,
            in_regime: self.constants.in_regime(self.delta, self.protocol.n()),
        })
    }

    fn explore(&self, st: State<'a>, mass: Rational, out: &mut Vec<BranchRecord>) -> Result<()> {
        if out.len() >= self.max_branches {
            return Err(LabError::Guard(format!("more than {} branches", self.max_branches)));
        }
        if let Some(key) = self.terminal_of(&st) {
            out.push(self.record(&st, key, mass));
            return Ok(());
        }
        let safe = self.after_safe(&st)?;
        let Some(safe) = safe.as_ref() else {
            let mut st = st;
            st.extended.push(ExtendedRecord { safe: 0, message: 0, class: 0, z_i: String::new(), recovery: 0 });
            out.push(self.record(&st, format!("{DEGENERATE_PREFIX}safe-filter"), mass));
            return Ok(());
        };
        let free = st.rho.free();
        for bit in 0..2u8 {
            let p_bit = if bit == 1 { safe.p_one.clone() } else { exact::one() - &safe.p_one };
            if num::Zero::is_zero(&p_bit) {
                continue;
            }
            let (speaker, _) = self.after_message(&st, safe, bit)?;
            let part = self.partition(&format!("{}|b{bit}", st.path), &speaker, free)?;
            for j in 0..part.classes.len() {
                let m = &mass * &p_bit * &part.classes[j].p;
                match self.finish_iteration(&st, speaker.clone(), bit, &p_bit, &part, j)? {
                    Next::Continue(next) => self.explore(next, m, out)?,
                    Next::Terminal(key, done) => out.push(self.record(&done, key, m)),
                }
            }
        }
        Ok(())
    }

    /// One stochastic run: the message comes from a uniformly sampled speaker value,
    /// the class from another sampled value.
    pub fn sample(&self, seed: u64) -> Result<SampleRun> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let branches = self.protocol.branches();
        let mut coin = branches.len() - 1;
        for (k, (p, _)) in branches.iter().enumerate() {
            acc += exact::to_f64(p);
            if u < acc {
                coin = k;
                break;
            }
        }
        let mut st = self.start(coin)?;
        loop {
            if let Some(key) = self.terminal_of(&st) {
                return Ok(SampleRun { outcome: key, queries: st.queries, extended: st.extended });
            }
            let safe = self.after_safe(&st)?;
            let Some(safe) = safe.as_ref() else {
                return Ok(SampleRun { outcome: format!("{DEGENERATE_PREFIX}safe-filter"), queries: st.queries, extended: st.extended });
            };
            let ProtocolNode::Node { rule, .. } = st.node else { unreachable!() };
            let sp = &safe.speaker;
            let x = sp.decode(sp.points()[rng.gen_range(0..sp.len())]);
            let bit = rule.eval(&x, self.gadget.size()) as u8;
            let p_bit = if bit == 1 { safe.p_one.clone() } else { exact::one() - &safe.p_one };
            let (speaker, _) = self.after_message(&st, safe, bit)?;
            let free = st.rho.free();
            let part = self.partition(&format!("{}|b{bit}", st.path), &speaker, free)?;
            let pick = speaker.points()[rng.gen_range(0..speaker.len())];
            let j = part.classes.iter().position(|c| c.members.points().binary_search(&pick).is_ok()).unwrap();
            match self.finish_iteration(&st, speaker, bit, &p_bit, &part, j)? {
                Next::Continue(next) => st = next,
                Next::Terminal(key, done) => return Ok(SampleRun { outcome: key, queries: done.queries, extended: done.extended }),
            }
        }
    }

    /// Empirical frequencies of `samples` runs with seeds `seed, seed+1, …`.
    pub fn sample_many(&self, seed: u64, samples: usize) -> Result<BTreeMap<String, usize>> {
        let mut counts = BTreeMap::new();
        for k in 0..samples as u64 {
            *counts.entry(self.sample(seed.wrapping_add(k))?.outcome).or_insert(0) += 1;
        }
        Ok(counts)
    }
}

pub fn simulate_rand_exact(protocol: &RandomizedProtocol, g: &Gadget, z: &[u8], constants: &SimulationConstants) -> Result<RandRun> {
    RandSimulator::new(protocol, g, z, constants)?.exact()
}

pub fn simulate_rand_sample(protocol: &RandomizedProtocol, g: &Gadget, z: &[u8], seed: u64, constants: &SimulationConstants) -> Result<SampleRun> {
    RandSimulator::new(protocol, g, z, constants)?.sample(seed)
}

/// Transcripts of the protocol on uniform inputs conditioned on `g^n(X, Y) = z`.
pub fn pi_prime_dist(protocol: &RandomizedProtocol, g: &Gadget, z: &[u8]) -> Result<TranscriptDist> {
    let n = protocol.n();
    if z.len() != n || protocol.alphabet_size() != g.size() {
        return invalid("z and gadget must match the protocol");
    }
    let q = g.size();
    let per_coord: Vec<Vec<(u8, u8)>> = z
        .iter()
        .map(|&b| {
            (0..q as u8)
                .flat_map(|u| (0..q as u8).map(move |v| (u, v)))
                .filter(|&(u, v)| g.eval(u, v) == b)
                .collect()
        })
        .collect();
    let size = per_coord.iter().try_fold(1u64, |a, c| a.checked_mul(c.len() as u64));
    let size = match size {
        Some(0) => return Err(LabError::EmptyFiber(bits_to_string(z))),
        Some(s) if s <= MAX_FIBER => s,
        _ => return Err(LabError::Guard("fiber too large to enumerate".into())),
    };
    let multi = protocol.branches().len() > 1;
    let mut dist = TranscriptDist::default();
    for (coin, (p, tree)) in protocol.branches().iter().enumerate() {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for idx in 0..size {
            let mut rem = idx;
            let mut x = vec![0u8; n];
            let mut y = vec![0u8; n];
            for i in (0..n).rev() {
                let opts = &per_coord[i];
                let (u, v) = opts[(rem % opts.len() as u64) as usize];
                rem /= opts.len() as u64;
                x[i] = u;
                y[i] = v;
            }
            let (t, _) = tree.run(&x, &y);
            *counts.entry(t).or_insert(0) += 1;
        }
        for (t, c) in counts {
            let key = if multi { format!("c{coin}/{t}") } else { t };
            dist.add(&key, &(p * ratio(c, size)));
        }
    }
    Ok(dist)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvReport {
    /// Distance from the reference distribution to the run with halting.
    #[serde(serialize_with = "exact::ser_rational")]
    pub tv_dagger: Rational,
    /// Distance from the reference distribution to the run without halting.
    #[serde(serialize_with = "exact::ser_rational")]
    pub tv_star: Rational,
    /// Distance between the two runs.
    #[serde(serialize_with = "exact::ser_rational")]
    pub tv_halting: Rational,
    /// `2^{−Δ/20}(1 + C)`.
    #[serde(serialize_with = "ser_real")]
    pub bound_dagger: f64,
    /// `C·2^{−Δ/20}`.
    #[serde(serialize_with = "ser_real")]
    pub bound_star: f64,
    /// `2·2^{−Δ}`.
    #[serde(serialize_with = "ser_real")]
    pub bound_halting: f64,
    pub in_regime: bool,
    /// `None` when the bounds are only reported (out of regime or not below 1).
    pub bounds_hold: Option<bool>,
    /// Non-halted mass with halting equals the never-exceeding mass without it.
    pub halting_consistent: bool,
}

pub fn tv_report(protocol: &RandomizedProtocol, g: &Gadget, z: &[u8], constants: &SimulationConstants) -> Result<TvReport> {
    let sim = RandSimulator::new(protocol, g, z, constants)?;
    let with = sim.exact()?;
    let without = RandSimulator::new(protocol, g, z, constants)?.without_halting().exact()?;
    let reference = pi_prime_dist(protocol, g, z)?;
    let (delta, rounds) = (with.delta, with.rounds as f64);
    let bound_dagger = (-delta / 20.0).exp2() * (1.0 + rounds);
    let bound_star = rounds * (-delta / 20.0).exp2();
    let bound_halting = 2.0 * (-delta).exp2();
    let tv_dagger = reference.distance(&with.dist);
    let tv_star = reference.distance(&without.dist);
    let tv_halting = with.dist.distance(&without.dist);
    let asserted = with.in_regime && bound_dagger < 1.0;
    let bounds_hold = asserted.then(|| {
        exact::to_f64(&tv_dagger) <= bound_dagger + TOL
            && exact::to_f64(&tv_star) <= bound_star + TOL
            && exact::to_f64(&tv_halting) <= bound_halting + TOL
    });
    Ok(TvReport {
        tv_dagger,
        tv_star,
        tv_halting,
        bound_dagger,
        bound_star,
        bound_halting,
        in_regime: with.in_regime,
        bounds_hold,
        halting_consistent: halting_consistent(&with, &without),
    })
}

/// The halted run's non-`⊥` masses equal the unhalted run's masses over branches that
/// never exceeded a threshold.
pub fn halting_consistent(with: &RandRun, without: &RandRun) -> bool {
    let mut lhs = with.dist.clone();
    lhs.masses.remove(HALTED);
    let mut rhs = TranscriptDist::default();
    for b in without.branches.iter().filter(|b| !b.exceeded) {
        rhs.add(&b.outcome, &b.prob);
    }
    lhs.masses.retain(|_, v| !num::Zero::is_zero(v));
    lhs == rhs
}

/// `Pr[Erl(k, λ) > t] = e^{−λt} Σ_{i<k} (λt)^i / i!`.
pub fn erlang_tail(k: u64, lambda: f64, t: f64) -> Result<f64> {
    Ok(erlang_tail_log2(k, lambda, t)?.exp2())
}

/// `log2` of [`erlang_tail`], summed in log space so large `λt` does not underflow.
pub fn erlang_tail_log2(k: u64, lambda: f64, t: f64) -> Result<f64> {
    if k == 0 || lambda.is_nan() || lambda <= 0.0 || t.is_nan() || t < 0.0 {
        return invalid("erlang tail needs k >= 1, λ > 0, t >= 0");
    }
    let x = lambda * t;
    if x == 0.0 {
        return Ok(0.0);
    }
    let lx = x.ln();
    let mut terms = Vec::with_capacity(k as usize);
    let mut log_fact = 0.0;
    for i in 0..k {
        if i > 0 {
            log_fact += (i as f64).ln();
        }
        terms.push(i as f64 * lx - log_fact);
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|v| (v - m).exp()).sum();
    Ok((m + sum.ln() - x) / std::f64::consts::LN_2)
}
