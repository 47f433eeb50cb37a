//! Fixed instance suites for the simulations: `(S, g, Π)` triples at `n ≤ 3`, `|Λ| ≤ 4`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::disc::disc_exact;
use crate::dist::UniformSubset;
use crate::error::Result;
use crate::exact::ratio;
use crate::model::{
    make_gadget, CoordSet, DecisionTree, DtNode, Gadget, GadgetKind, Party, ProtocolTree, RandomizedProtocol, SearchProblem,
    SimulationConstants,
};
use crate::safety::{is_almost_uniform, Analyzer, Context, RecoverMode, MAX_EXHAUSTIVE_SUPPORT};

pub struct DetInstance {
    pub name: &'static str,
    pub problem: SearchProblem,
    pub gadget: Gadget,
    pub protocol: ProtocolTree,
}

pub struct RandInstance {
    pub name: &'static str,
    pub problem: SearchProblem,
    pub gadget: Gadget,
    pub protocol: RandomizedProtocol,
}

fn parity(z: &[u8]) -> String {
    (z.iter().map(|&b| b as u32).sum::<u32>() % 2).to_string()
}

fn majority(z: &[u8]) -> String {
    ((2 * z.iter().filter(|&&b| b == 1).count() > z.len()) as u8).to_string()
}

fn bits(z: &[u8]) -> String {
    z.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

/// Index of some coordinate equal to 1, or `none`.
fn find_one(n: usize) -> Result<SearchProblem> {
    SearchProblem::from_fn(n, |z| {
        let ones: Vec<String> = (0..z.len()).filter(|&i| z[i] == 1).map(|i| i.to_string()).collect();
        if ones.is_empty() {
            vec!["none".into()]
        } else {
            ones
        }
    })
}

/// Queries coordinates in `order` and stops at the first 1.
fn first_one_tree(n: usize, order: &[usize]) -> Result<DecisionTree> {
    fn build(order: &[usize]) -> DtNode {
        match order.split_first() {
            None => DtNode::leaf("none"),
            Some((&i, rest)) => DtNode::query(i, build(rest), DtNode::leaf(i.to_string())),
        }
    }
    DecisionTree::new(n, build(order))
}

fn gadget(kind: GadgetKind, q: usize) -> Result<Gadget> {
    make_gadget(kind, q)
}

fn det(name: &'static str, problem: SearchProblem, g: Gadget, tree: &DecisionTree, first: Party) -> Result<DetInstance> {
    let protocol = ProtocolTree::natural(tree, &g, first)?;
    Ok(DetInstance { name, problem, gadget: g, protocol })
}

/// Twelve deterministic instances: natural protocols of decision trees for parity,
/// AND, majority, identity, equality and a search problem, over several gadgets.
pub fn det_suite() -> Result<Vec<DetInstance>> {
    let xor2 = gadget(GadgetKind::Xor, 2)?;
    let and2 = gadget(GadgetKind::And, 2)?;
    let xor4 = gadget(GadgetKind::Xor, 4)?;
    let ip4 = gadget(GadgetKind::InnerProduct { prefix: 2 }, 4)?;
    let xor3 = gadget(GadgetKind::Xor, 3)?;
    let rnd3 = gadget(GadgetKind::Random { seed: 11 }, 3)?;
    let rnd4 = gadget(GadgetKind::Random { seed: 7 }, 4)?;
    let constant = |n: usize| -> Result<ProtocolTree> {
        ProtocolTree::new(n, 2, crate::model::ProtocolNode::leaf("0"))
    };
    Ok(vec![
        det("parity1-xor2", SearchProblem::function(1, parity)?, xor2.clone(), &DecisionTree::full(1, parity)?, Party::Alice)?,
        det("parity2-xor2", SearchProblem::function(2, parity)?, xor2.clone(), &DecisionTree::full(2, parity)?, Party::Alice)?,
        det("parity3-xor2-bob", SearchProblem::function(3, parity)?, xor2.clone(), &DecisionTree::full(3, parity)?, Party::Bob)?,
        det("and2-and2", SearchProblem::function(2, |z| (z[0] & z[1]).to_string())?, and2, &DecisionTree::full(2, |z| (z[0] & z[1]).to_string())?, Party::Alice)?,
        det("majority3-xor2", SearchProblem::function(3, majority)?, xor2.clone(), &DecisionTree::full(3, majority)?, Party::Alice)?,
        det("identity2-xor4", SearchProblem::function(2, bits)?, xor4.clone(), &DecisionTree::full(2, bits)?, Party::Alice)?,
        det("parity2-ip4", SearchProblem::function(2, parity)?, ip4.clone(), &DecisionTree::full(2, parity)?, Party::Bob)?,
        det("equal2-xor3", SearchProblem::function(2, |z| (z[0] == z[1]).to_string())?, xor3, &DecisionTree::full(2, |z| (z[0] == z[1]).to_string())?, Party::Alice)?,
        det("find-one3-xor2", find_one(3)?, xor2.clone(), &first_one_tree(3, &[0, 1, 2])?, Party::Alice)?,
        det("find-one2-rnd3", find_one(2)?, rnd3, &first_one_tree(2, &[1, 0])?, Party::Bob)?,
        det("parity2-rnd4", SearchProblem::function(2, parity)?, rnd4, &DecisionTree::full(2, parity)?, Party::Alice)?,
        DetInstance {
            name: "constant2-xor2",
            problem: SearchProblem::function(2, |_| "0".into())?,
            gadget: xor2,
            protocol: constant(2)?,
        },
    ])
}

/// Randomized instances: coin mixtures of natural protocols with different speakers or
/// query orders.
pub fn rand_suite() -> Result<Vec<RandInstance>> {
    let xor2 = gadget(GadgetKind::Xor, 2)?;
    let xor4 = gadget(GadgetKind::Xor, 4)?;
    let and2 = gadget(GadgetKind::And, 2)?;
    let par2 = DecisionTree::full(2, parity)?;
    let mixed = RandomizedProtocol::new(vec![
        (ratio(1, 2), ProtocolTree::natural(&par2, &xor2, Party::Alice)?),
        (ratio(1, 2), ProtocolTree::natural(&par2, &xor2, Party::Bob)?),
    ])?;
    let orders = RandomizedProtocol::new(vec![
        (ratio(1, 3), ProtocolTree::natural(&first_one_tree(3, &[0, 1, 2])?, &xor2, Party::Alice)?),
        (ratio(2, 3), ProtocolTree::natural(&first_one_tree(3, &[2, 1, 0])?, &xor2, Party::Bob)?),
    ])?;
    let and = |z: &[u8]| (z[0] & z[1]).to_string();
    Ok(vec![
        RandInstance { name: "parity2-xor2-mixed", problem: SearchProblem::function(2, parity)?, gadget: xor2.clone(), protocol: mixed },
        RandInstance { name: "find-one3-xor2-orders", problem: find_one(3)?, gadget: xor2.clone(), protocol: orders },
        RandInstance {
            name: "parity1-xor4",
            problem: SearchProblem::function(1, parity)?,
            gadget: xor4.clone(),
            protocol: RandomizedProtocol::deterministic(ProtocolTree::natural(&DecisionTree::full(1, parity)?, &xor4, Party::Alice)?),
        },
        RandInstance {
            name: "and2-and2",
            problem: SearchProblem::function(2, and)?,
            gadget: and2.clone(),
            protocol: RandomizedProtocol::deterministic(ProtocolTree::natural(&DecisionTree::full(2, and)?, &and2, Party::Bob)?),
        },
        RandInstance {
            name: "identity2-xor2",
            problem: SearchProblem::function(2, bits)?,
            gadget: xor2.clone(),
            protocol: RandomizedProtocol::deterministic(ProtocolTree::natural(&DecisionTree::full(2, bits)?, &xor2, Party::Alice)?),
        },
    ])
}

/// A random `(g, Y, x)` with constants placed inside the regime `Δ ≥ c·log n`.
pub struct SafetyInstance {
    pub gadget: Gadget,
    pub delta: f64,
    pub y: UniformSubset,
    pub x: Vec<u8>,
    pub constants: SimulationConstants,
}

/// Instance from `seed`, or `None` when the gadget has `Δ = 0` or `Y` came out empty.
///
/// `n ∈ 1..=3`, `|Λ| ∈ 2..=4`, XOR for every third seed and a random gadget otherwise;
/// `Y` keeps each point with probability 0.5, 0.8 or 0.95. The deterministic profile is
/// used with `c` lowered to `Δ/log n` and `α` raised to `1/Δ` when needed.
pub fn safety_instance(seed: u64) -> Result<Option<SafetyInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = rng.gen_range(2..=4usize);
    let n = rng.gen_range(1..=3usize);
    let kind = if seed.is_multiple_of(3) { GadgetKind::Xor } else { GadgetKind::Random { seed } };
    let gadget = make_gadget(kind, q)?;
    let delta = disc_exact(&gadget, None)?.delta;
    if delta <= 0.0 {
        return Ok(None);
    }
    let full = UniformSubset::full(n, q)?;
    let keep = [0.5, 0.8, 0.95][rng.gen_range(0..3)];
    let pts: Vec<u32> = full.points().iter().copied().filter(|_| rng.gen_bool(keep)).collect();
    if pts.is_empty() {
        return Ok(None);
    }
    let y = full.with_points(pts)?;
    let mut constants = SimulationConstants::det_paper();
    if n > 1 {
        constants.c = constants.c.min(delta / (n as f64).log2());
    }
    constants.alpha = constants.alpha.max(1.0 / delta);
    let x = (0..n).map(|_| rng.gen_range(0..q as u8)).collect();
    Ok(Some(SafetyInstance { gadget, delta, y, x, constants }))
}

/// How often each implication between the classifiers was exercised and broken.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ImplicationTally {
    pub instances: usize,
    /// light ⇒ recoverable (canonical event).
    pub light_recoverable: (usize, usize),
    /// heavy at `t = 0` and almost uniform ⇒ skewing at `t = 0`.
    pub heavy_skewing: (usize, usize),
    /// not biasing ⇒ not skewing, for `t ∈ {0, 1, 3}` and `n ≥ 2`.
    pub unbiased_unskewed: (usize, usize),
    /// canonical event found ⇒ exhaustive search finds one, on supports up to the exhaustive limit.
    pub canonical_exhaustive: (usize, usize),
}

impl ImplicationTally {
    /// Pairs are `(hypothesis held, conclusion failed)`.
    pub fn violations(&self) -> usize {
        self.light_recoverable.1 + self.heavy_skewing.1 + self.unbiased_unskewed.1 + self.canonical_exhaustive.1
    }

    /// Every implication had its hypothesis met at least once.
    pub fn exercised(&self) -> bool {
        [self.light_recoverable, self.heavy_skewing, self.unbiased_unskewed, self.canonical_exhaustive].iter().all(|p| p.0 > 0)
    }
}

/// Checks the classifier implications on `safety_instance(seed)` for every seed.
pub fn safety_implications(seeds: std::ops::Range<u64>) -> Result<ImplicationTally> {
    let mut tally = ImplicationTally::default();
    for seed in seeds {
        let Some(inst) = safety_instance(seed)? else { continue };
        tally.instances += 1;
        let n = inst.y.n();
        let full = CoordSet::full(n);
        let k = &inst.constants;
        let an = Analyzer::new(Context::with_delta(&inst.gadget, k, inst.delta), &inst.y, full)?;
        let x = &inst.x;

        let rec = an.is_recoverable(x, k.alpha, RecoverMode::Canonical)?.recoverable;
        if an.is_light(x, k.alpha)?.light {
            tally.light_recoverable.0 += 1;
            tally.light_recoverable.1 += !rec as usize;
        }
        if rec && inst.y.len() <= MAX_EXHAUSTIVE_SUPPORT {
            tally.canonical_exhaustive.0 += 1;
            tally.canonical_exhaustive.1 += !an.is_recoverable(x, k.alpha, RecoverMode::Exhaustive)?.recoverable as usize;
        }

        let (au, _, _) = is_almost_uniform(x, &inst.y, &inst.gadget, inst.delta, full)?;
        for j in full.nonempty_subsets() {
            for i in full.minus(j).subsets() {
                for zm in 0..1u32 << i.len() {
                    let z: Vec<u8> = (0..i.len()).map(|b| (zm >> b & 1) as u8).collect();
                    // Values of z_I outside the support have no fiber.
                    let Ok(witnesses) = an.heaviness(x, j, i, &z) else { continue };
                    for w in witnesses {
                        if w.heavy && au {
                            tally.heavy_skewing.0 += 1;
                            tally.heavy_skewing.1 += !an.skew_bias_check(x, &w.y_j, j, 0.0)?.skewing as usize;
                        }
                        if n < 2 {
                            continue;
                        }
                        for t in [0.0, 1.0, 3.0] {
                            let r = an.skew_bias_check(x, &w.y_j, j, t)?;
                            if !r.biasing {
                                tally.unbiased_unskewed.0 += 1;
                                tally.unbiased_unskewed.1 += r.skewing as usize;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(tally)
}
