//! One function per subcommand; each returns the instance summary, the payload and a verdict.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use liftlab::counterex::{analytic_verify, build_params, toy_instance_check, toy_params};
use liftlab::disc::{canonical_rectangle_opt, disc_exact, disc_real, reduce_product, reduce_product_real, ProductDistribution, ProductReduction};
use liftlab::exact::{self, format_rational, ratio};
use liftlab::model::{bits_to_string, CoordSet, Gadget, ProtocolTree, RandomizedProtocol, SearchProblem, SimulationConstants};
use liftlab::safety::{main_lemma_estimate, Analyzer, Context};
use liftlab::simdet::{conservation_failures, DetRun, DetSimulator};
use liftlab::simrand::{erlang_tail, erlang_tail_log2, tv_report, RandSimulator};
use liftlab::{LabError, Result, TOL};

use crate::args::{Command, Mode};
use crate::inputs;
use crate::report::{real, to_value, Outcome, Table};

pub fn run(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Disc { gadget, mu_x, mu_y } => {
            let (g, label) = inputs::gadget(gadget)?;
            disc(&g, label, mu_x.as_deref().zip(mu_y.as_deref()))
        }
        Command::ReduceProduct { gadget, mu_x, mu_y, eps } => {
            let (g, label) = inputs::gadget(gadget)?;
            reduce(&g, label, mu_x, mu_y, *eps)
        }
        Command::Classify { gadget, support, x, eps, constants } => {
            let (g, label) = inputs::gadget(gadget)?;
            let y = inputs::support(support)?;
            let k = inputs::constants(constants, "det-paper")?;
            classify(&g, label, &y, &inputs::symbols(x)?, *eps, &k)
        }
        Command::Mainlemma { gadget, x_support, y_support, constants } => {
            let (g, label) = inputs::gadget(gadget)?;
            let xs = inputs::support(x_support)?;
            let ys = inputs::support(y_support)?;
            let k = inputs::constants(constants, "det-paper")?;
            mainlemma(&g, label, &xs, &ys, &k)
        }
        Command::LiftDet { gadget, protocol, problem, z, full_tree, constants } => {
            let (g, label) = inputs::gadget(gadget)?;
            let p = ProtocolTree::parse(&inputs::read(protocol)?)?;
            let s = problem.as_deref().map(|path| SearchProblem::parse(&inputs::read(path)?)).transpose()?;
            let z = z.as_deref().map(inputs::bits).transpose()?;
            let k = inputs::constants(constants, "det-paper")?;
            lift_det(&g, label, &p, s.as_ref(), z, *full_tree, &k)
        }
        Command::LiftRand { gadget, protocol, z, mode, seed, samples, max_branches, branches, constants } => {
            let (g, label) = inputs::gadget(gadget)?;
            let p = RandomizedProtocol::parse(&inputs::read(protocol)?)?;
            let k = inputs::constants(constants, "rand-paper")?;
            let opts = RandOptions { mode: *mode, seed: *seed, samples: *samples, max_branches: *max_branches, branches: *branches };
            lift_rand(&g, label, &p, &inputs::bits(z)?, &opts, &k)
        }
        Command::Counterexample { b, toy } => counterexample(*b, toy.as_deref()),
        Command::Erlang { k, lambda, t, delta, sweep } => erlang(*k, lambda.unwrap_or(std::f64::consts::LN_2), *t, *delta, *sweep),
    }
}

fn gadget_summary(g: &Gadget, label: &str) -> Value {
    json!({ "gadget": label, "lambda": g.size() })
}

fn regime_warning(k: &SimulationConstants, delta: f64, n: usize) -> Vec<String> {
    if k.in_regime(delta, n) {
        Vec::new()
    } else {
        vec![format!("Δ = {} is below c·log n = {}; bounds are reported, not asserted", exact::round12(delta), exact::round12(k.c * (n as f64).log2()))]
    }
}

fn disc(g: &Gadget, label: String, weights: Option<(&str, &str)>) -> Result<Outcome> {
    let mu = weights.map(|(x, y)| ProductDistribution::new(inputs::rationals(x)?, inputs::rationals(y)?)).transpose()?;
    let r = disc_exact(g, mu.as_ref())?;
    let mut instance = gadget_summary(g, &label);
    instance["weights"] = mu.as_ref().map_or(Value::Null, to_value);
    Ok(Outcome { instance, result: to_value(&r), warnings: vec![], passed: true, table: None })
}

fn reduction_summary(red: &ProductReduction) -> Value {
    let (ma, mb) = red.multiplicities();
    json!({ "l": red.l, "mu_prime": to_value(&red.mu_prime), "multiplicities_a": ma, "multiplicities_b": mb })
}

fn reduce(g: &Gadget, label: String, mu_x: &str, mu_y: &str, eps: Option<f64>) -> Result<Outcome> {
    let mut instance = gadget_summary(g, &label);
    let (red, target, holds) = match eps {
        None => {
            let mu = ProductDistribution::new(inputs::rationals(mu_x)?, inputs::rationals(mu_y)?)?;
            instance["weights"] = to_value(&mu);
            let red = reduce_product(g, &mu)?;
            let d = disc_exact(g, Some(&mu))?.disc;
            let holds = canonical_rectangle_opt(&red, None)?.disc <= d;
            (red, json!(format_rational(&d)), holds)
        }
        Some(eps) => {
            let (mx, my) = (inputs::reals(mu_x)?, inputs::reals(mu_y)?);
            instance["weights"] = json!({ "mu_x": mx.iter().map(|&v| real(v)).collect::<Vec<_>>(), "mu_y": my.iter().map(|&v| real(v)).collect::<Vec<_>>() });
            instance["eps"] = real(eps);
            let red = reduce_product_real(g, &mx, &my, eps)?;
            let d = disc_real(g, &mx, &my)?;
            let holds = exact::to_f64(&canonical_rectangle_opt(&red, None)?.disc) <= d + eps + TOL;
            (red, real(d), holds)
        }
    };
    let canonical = canonical_rectangle_opt(&red, None)?;
    // The unrestricted optimum over all rectangles of g′ is only enumerable for small l.
    let unrestricted = if red.l <= 12 { Some(disc_exact(&red.g_prime, None)?) } else { None };
    let agrees = unrestricted.as_ref().map(|u| u.disc == canonical.disc);
    let mut warnings = vec![];
    if unrestricted.is_none() {
        warnings.push(format!("l = {} > 12: unrestricted optimum not enumerated", red.l));
    }
    let result = json!({
        "reduction": reduction_summary(&red),
        "disc_mu": target,
        "disc_uniform_canonical": format_rational(&canonical.disc),
        "disc_uniform_unrestricted": unrestricted.as_ref().map(|u| format_rational(&u.disc)),
        "canonical_equals_unrestricted": agrees,
        "bound_holds": holds,
    });
    Ok(Outcome { instance, result, warnings, passed: holds && agrees != Some(false), table: None })
}

fn classify(g: &Gadget, label: String, y: &liftlab::dist::UniformSubset, x: &[u8], eps: f64, k: &SimulationConstants) -> Result<Outcome> {
    let ctx = Context::new(g, k)?;
    let full = CoordSet::full(y.n());
    let an = Analyzer::new(ctx, y, full)?;
    let verdict = an.classify(x)?;
    let light = an.is_light(x, k.alpha)?;
    let danger = an.is_dangerous(x, eps)?;
    let mut instance = gadget_summary(g, &label);
    instance["n"] = json!(y.n());
    instance["support_size"] = json!(y.len());
    instance["x"] = json!(x);
    instance["delta"] = real(ctx.delta);
    instance["constants"] = to_value(k);
    let result = json!({
        "verdict": to_value(&verdict),
        "light": to_value(&light),
        "dangerous": danger.dangerous(),
        "danger": to_value(&danger),
        "sigma_y": real(an.sigma_y()),
    });
    Ok(Outcome { instance, result, warnings: regime_warning(k, ctx.delta, y.n()), passed: true, table: None })
}

fn mainlemma(
    g: &Gadget,
    label: String,
    xs: &liftlab::dist::UniformSubset,
    ys: &liftlab::dist::UniformSubset,
    k: &SimulationConstants,
) -> Result<Outcome> {
    let ctx = Context::new(g, k)?;
    let r = main_lemma_estimate(xs, ys, ctx, k.alpha, k.gamma)?;
    let mut instance = gadget_summary(g, &label);
    instance["n"] = json!(xs.n());
    instance["x_support_size"] = json!(xs.len());
    instance["y_support_size"] = json!(ys.len());
    instance["delta"] = real(ctx.delta);
    instance["constants"] = to_value(k);
    let mut warnings = regime_warning(k, ctx.delta, xs.n());
    let asserted = warnings.is_empty() && r.precondition_holds;
    if !r.precondition_holds {
        warnings.push("sparsity precondition fails; the bound is reported, not asserted".into());
    }
    let passed = !asserted || r.bound_holds != Some(false);
    Ok(Outcome { instance, result: to_value(&r), warnings, passed, table: None })
}

fn all_z(n: usize) -> Vec<Vec<u8>> {
    (0..1u32 << n).map(|m| (0..n).map(|i| (m >> (n - 1 - i) & 1) as u8).collect()).collect()
}

fn trace_rows(z: &str, trace: &[liftlab::simdet::TraceEvent], rows: &mut Vec<Vec<String>>) {
    let f = |x: f64| real(x).to_string();
    for e in trace {
        rows.push(vec![
            z.to_string(),
            e.iteration.to_string(),
            e.step.to_string(),
            to_value(&e.party).as_str().unwrap_or_default().to_string(),
            f(e.deficiency_before[0]),
            f(e.deficiency_before[1]),
            f(e.deficiency_after[0]),
            f(e.deficiency_after[1]),
            e.event_prob.as_ref().map(format_rational).unwrap_or_default(),
            e.i.map(|i| i.to_string()).unwrap_or_default(),
            e.conserves().to_string(),
            e.notes.clone(),
        ]);
    }
}

/// Checks on one completed run: `(valid, accounting_ok, passed)`.
fn judge(run: &DetRun, z: &[u8], problem: Option<&SearchProblem>) -> (Option<bool>, bool, bool) {
    let valid = problem.and_then(|s| (run.fiber_nonempty == Some(true)).then(|| s.is_valid(z, &run.output)));
    let accounting_ok = run.iterations.iter().filter_map(|it| it.accounting.as_ref()).all(|a| !a.premises || (a.holds && a.premise_holds == Some(true)));
    let passed = valid != Some(false) && accounting_ok && conservation_failures(&run.trace).is_empty() && run.invariant_violations.is_empty();
    (valid, accounting_ok, passed)
}

fn lift_det(
    g: &Gadget,
    label: String,
    p: &ProtocolTree,
    problem: Option<&SearchProblem>,
    z: Option<Vec<u8>>,
    full_tree: bool,
    k: &SimulationConstants,
) -> Result<Outcome> {
    let n = p.n();
    if problem.is_some_and(|s| s.n() != n) {
        return Err(LabError::InvalidInput("search problem and protocol disagree on n".into()));
    }
    let sim = DetSimulator::new(p, g, k)?;
    let single = z.is_some();
    let zs = match z {
        Some(z) => vec![z],
        None => all_z(n),
    };
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut passed = true;
    let mut failures = 0;
    for z in &zs {
        let zs = bits_to_string(z);
        match sim.simulate(z) {
            Ok(run) => {
                let (valid, accounting_ok, ok) = judge(&run, z, problem);
                passed &= ok;
                trace_rows(&zs, &run.trace, &mut rows);
                let mut entry = json!({
                    "z": zs,
                    "status": "completed",
                    "output": run.output,
                    "queries": run.queries,
                    "transcript": run.transcript,
                    "fiber_nonempty": run.fiber_nonempty,
                    "valid": valid,
                    "conserves": conservation_failures(&run.trace).is_empty(),
                    "accounting_ok": accounting_ok,
                    "flagged": run.flagged(),
                    "invariant_violations": run.invariant_violations,
                });
                if single {
                    entry["run"] = to_value(&run);
                }
                runs.push(entry);
            }
            Err(LabError::Simulation(f)) => {
                passed = false;
                failures += 1;
                trace_rows(&zs, &f.trace, &mut rows);
                runs.push(json!({ "z": zs, "status": "failed", "failure": to_value(&*f) }));
            }
            Err(e) => return Err(e),
        }
    }
    let mut result = json!({ "runs": runs, "failures": failures });
    if full_tree {
        let tree = sim.full_tree()?;
        result["tree"] = json!({
            "depth": tree.depth(),
            "leaves": tree.leaf_count(),
            "failure_leaves": tree.failure_leaves(),
            "text": tree.to_text(),
        });
    }
    let mut instance = gadget_summary(g, &label);
    instance["n"] = json!(n);
    instance["protocol_depth"] = json!(p.depth());
    instance["delta"] = real(sim.delta());
    instance["constants"] = to_value(k);
    let header = ["z", "iteration", "step", "party", "dm_x_before", "dm_y_before", "dm_x_after", "dm_y_after", "event_prob", "i", "conserves", "notes"];
    Ok(Outcome {
        instance,
        result,
        warnings: regime_warning(k, sim.delta(), n),
        passed,
        table: Some(Table { header: header.iter().map(|s| s.to_string()).collect(), rows }),
    })
}

pub struct RandOptions {
    pub mode: Mode,
    pub seed: u64,
    pub samples: usize,
    pub max_branches: Option<usize>,
    pub branches: bool,
}

fn lift_rand(g: &Gadget, label: String, p: &RandomizedProtocol, z: &[u8], o: &RandOptions, k: &SimulationConstants) -> Result<Outcome> {
    let mut sim = RandSimulator::new(p, g, z, k)?;
    if let Some(cap) = o.max_branches {
        sim = sim.max_branches(cap);
    }
    let mut instance = gadget_summary(g, &label);
    instance["n"] = json!(p.n());
    instance["z"] = json!(bits_to_string(z));
    instance["coins"] = json!(p.branches().len());
    instance["constants"] = to_value(k);
    instance["kmsg_threshold"] = real(sim.kmsg_threshold());
    instance["kprt_threshold"] = real(sim.kprt_threshold());
    match o.mode {
        Mode::Exact => {
            let run = sim.exact()?;
            instance["delta"] = real(run.delta);
            let tv = tv_report(p, g, z, k)?;
            let total = run.dist.total();
            let mut result = json!({
                "mode": "exact",
                "distribution": to_value(&run.dist),
                "total_mass": format_rational(&total),
                "halted_mass": format_rational(&run.dist.halted()),
                "degenerate_mass": format_rational(&run.dist.degenerate()),
                "branch_count": run.branches.len(),
                "tv": to_value(&tv),
            });
            if o.branches {
                result["branches"] = to_value(&run.branches);
            }
            let rows = run.dist.masses.iter().map(|(key, m)| vec![key.clone(), format_rational(m)]).collect();
            let passed = total == exact::one() && tv.halting_consistent && tv.bounds_hold != Some(false);
            Ok(Outcome {
                instance,
                result,
                warnings: regime_warning(k, run.delta, p.n()),
                passed,
                table: Some(Table { header: vec!["outcome".into(), "mass".into()], rows }),
            })
        }
        Mode::Sample => {
            if o.samples == 0 {
                return Err(LabError::InvalidInput("--samples must be positive".into()));
            }
            let counts = sim.sample_many(o.seed, o.samples)?;
            let freq: BTreeMap<&String, String> = counts.iter().map(|(key, &c)| (key, format_rational(&ratio(c as u64, o.samples as u64)))).collect();
            let result = json!({ "mode": "sample", "seed": o.seed, "samples": o.samples, "counts": counts, "frequencies": freq });
            let rows = counts.iter().map(|(key, c)| vec![key.clone(), c.to_string()]).collect();
            Ok(Outcome { instance, result, warnings: vec![], passed: true, table: Some(Table { header: vec!["outcome".into(), "count".into()], rows }) })
        }
    }
}

fn counterexample(b: Option<u64>, toy: Option<&str>) -> Result<Outcome> {
    match (b, toy) {
        (Some(b), _) => {
            let r = analytic_verify(&build_params(b)?)?;
            let rows = r
                .inequalities
                .iter()
                .map(|i| vec![i.name.clone(), real(i.lhs).to_string(), i.relation.clone(), real(i.rhs).to_string(), i.holds.to_string()])
                .collect();
            Ok(Outcome {
                instance: json!({ "mode": "analytic", "params": to_value(&r.params) }),
                result: to_value(&r),
                warnings: vec![],
                passed: r.verdict,
                table: Some(Table { header: ["name", "lhs", "relation", "rhs", "holds"].iter().map(|s| s.to_string()).collect(), rows }),
            })
        }
        (None, Some(spec)) => {
            let v: Vec<u64> = spec
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| LabError::InvalidInput(format!("bad toy spec `{spec}`"))))
                .collect::<Result<_>>()?;
            let [b, d, i_size, n] = v[..] else {
                return Err(LabError::InvalidInput("--toy needs b,d,isize,n".into()));
            };
            let r = toy_instance_check(&toy_params(b, d, i_size, n)?)?;
            Ok(Outcome {
                instance: json!({ "mode": "toy", "params": to_value(&r.params) }),
                result: to_value(&r),
                warnings: r.notes.clone(),
                passed: r.verdict,
                table: None,
            })
        }
        (None, None) => Err(LabError::InvalidInput("either --b or --toy is required".into())),
    }
}

fn erlang(k: Option<u64>, lambda: f64, t: Option<f64>, delta: Option<f64>, sweep: bool) -> Result<Outcome> {
    if sweep {
        let mut rows = Vec::new();
        let (mut violations, mut worst) = (0, (f64::INFINITY, 0u64, 0u64));
        for c in 1..=100u64 {
            for d in 20..=200u64 {
                let l = erlang_tail_log2(c, lambda, (5 * c + 2 * d) as f64)?;
                let margin = -(d as f64) - l;
                if margin < -TOL {
                    violations += 1;
                }
                if margin < worst.0 {
                    worst = (margin, c, d);
                }
                rows.push(vec![c.to_string(), d.to_string(), real(l).to_string(), real(margin).to_string()]);
            }
        }
        let result = json!({
            "checked": 100 * 181,
            "violations": violations,
            "worst_margin_log2": real(worst.0),
            "worst_k": worst.1,
            "worst_delta": worst.2,
        });
        return Ok(Outcome {
            instance: json!({ "lambda": real(lambda), "k_range": [1, 100], "delta_range": [20, 200], "t": "5k+2Δ" }),
            result,
            warnings: vec![],
            passed: violations == 0,
            table: Some(Table { header: ["k", "delta", "log2_tail", "margin"].iter().map(|s| s.to_string()).collect(), rows }),
        });
    }
    let k = k.ok_or_else(|| LabError::InvalidInput("--k is required without --sweep".into()))?;
    let t = match (t, delta) {
        (Some(t), _) => t,
        (None, Some(d)) => 5.0 * k as f64 + 2.0 * d,
        (None, None) => return Err(LabError::InvalidInput("give --t or --delta".into())),
    };
    let l = erlang_tail_log2(k, lambda, t)?;
    let mut result = json!({ "tail": real(erlang_tail(k, lambda, t)?), "log2_tail": real(l) });
    let mut passed = true;
    if let Some(d) = delta {
        passed = l <= -d + TOL;
        result["bound_log2"] = real(-d);
        result["bound_holds"] = json!(passed);
    }
    Ok(Outcome { instance: json!({ "k": k, "lambda": real(lambda), "t": real(t) }), result, warnings: vec![], passed, table: None })
}
