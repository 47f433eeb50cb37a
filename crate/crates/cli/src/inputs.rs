//! Loading gadgets, protocols, supports and constants from flags and files.

use std::fs;
use std::path::Path;

use liftlab::dist::UniformSubset;
use liftlab::exact::{parse_rational, Rational};
use liftlab::model::{make_gadget, parse_bits, Gadget, GadgetKind, SimulationConstants, Threshold};
use liftlab::{LabError, Result};

use crate::args::{ConstArgs, GadgetArgs};

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LabError::InvalidInput(format!("{}: {e}", path.display())))
}

fn bad(msg: impl Into<String>) -> LabError {
    LabError::InvalidInput(msg.into())
}

fn builtin(spec: &str) -> Result<Gadget> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |i: usize| -> Result<u64> {
        parts.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("bad builtin gadget `{spec}`")))
    };
    let q = num(1)? as usize;
    let kind = match (parts[0], parts.len()) {
        ("xor", 2) => GadgetKind::Xor,
        ("and", 2) => GadgetKind::And,
        ("const", 3) => GadgetKind::Constant(num(2)? as u8),
        ("ip", 3) => GadgetKind::InnerProduct { prefix: num(2)? as u32 },
        ("random", 3) => GadgetKind::Random { seed: num(2)? },
        _ => return Err(bad(format!("unknown builtin gadget `{spec}`"))),
    };
    make_gadget(kind, q)
}

/// The gadget and a short label for the report.
pub fn gadget(a: &GadgetArgs) -> Result<(Gadget, String)> {
    match (&a.gadget, &a.builtin) {
        (Some(p), _) => Ok((Gadget::parse(&read(p)?)?, p.display().to_string())),
        (None, Some(spec)) => Ok((builtin(spec)?, spec.clone())),
        (None, None) => Err(bad("either --gadget or --builtin is required")),
    }
}

pub fn support(path: &Path) -> Result<UniformSubset> {
    UniformSubset::parse(&read(path)?)
}

pub fn rationals(list: &str) -> Result<Vec<Rational>> {
    list.split(',').map(parse_rational).collect()
}

pub fn reals(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("bad real `{v}`"))))
        .collect()
}

pub fn symbols(list: &str) -> Result<Vec<u8>> {
    list.split(',')
        .map(|v| v.trim().parse::<u8>().map_err(|_| bad(format!("bad symbol `{v}`"))))
        .collect()
}

pub fn bits(z: &str) -> Result<Vec<u8>> {
    parse_bits(z)
}

fn threshold(spec: &str) -> Result<Threshold> {
    let v = reals(spec)?;
    match v[..] {
        [per_round, per_delta] => Ok(Threshold { per_round, per_delta }),
        _ => Err(bad(format!("threshold `{spec}` must be PER_ROUND,PER_DELTA"))),
    }
}

/// Profile defaults with every flag override applied.
pub fn constants(a: &ConstArgs, default_profile: &str) -> Result<SimulationConstants> {
    let mut k = SimulationConstants::profile(a.profile.as_deref().unwrap_or(default_profile))?;
    if let Some(c) = a.c {
        k.c = c;
    }
    if let Some(s) = a.sigma {
        k.sigma = s;
    }
    if let Some(v) = a.alpha {
        k.alpha = v;
    }
    if let Some(v) = a.gamma {
        k.gamma = v;
    }
    if let Some(t) = &a.kmsg {
        k.kmsg_threshold = threshold(t)?;
    }
    if let Some(t) = &a.kprt {
        k.kprt_threshold = threshold(t)?;
    }
    k.strict_mode = a.strict;
    k.validate()?;
    Ok(k)
}
