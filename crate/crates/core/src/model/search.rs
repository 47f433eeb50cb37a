use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{invalid, LabError, Result};

use super::coords::{bits_to_string, parse_bits};

/// Output used for inputs the relation leaves unconstrained.
pub const BOTTOM: &str = "⊥";

/// Relation `S ⊆ {0,1}^n × O`. Entry `z` is indexed by the mask with bit `i` = `z_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SearchProblem {
    n: usize,
    relation: Vec<BTreeSet<String>>,
}

pub(crate) fn bits_to_mask(z: &[u8]) -> usize {
    z.iter().enumerate().fold(0, |m, (i, &b)| m | (b as usize) << i)
}

pub(crate) fn mask_to_bits(mask: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| (mask >> i & 1) as u8).collect()
}

impl SearchProblem {
    /// Builds from a function listing the valid outputs of each `z`; empty lists become `{⊥}`.
    pub fn from_fn(n: usize, f: impl Fn(&[u8]) -> Vec<String>) -> Result<Self> {
        if n == 0 || n > 20 {
            return invalid("search problems need 1 <= n <= 20");
        }
        let relation = (0..1usize << n)
            .map(|m| {
                let outs: BTreeSet<String> = f(&mask_to_bits(m, n)).into_iter().collect();
                if outs.is_empty() {
                    [BOTTOM.to_string()].into()
                } else {
                    outs
                }
            })
            .collect();
        Ok(SearchProblem { n, relation })
    }

    /// A total function `z ↦ f(z)`.
    pub fn function(n: usize, f: impl Fn(&[u8]) -> String) -> Result<Self> {
        Self::from_fn(n, |z| vec![f(z)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn outputs(&self, z: &[u8]) -> &BTreeSet<String> {
        &self.relation[bits_to_mask(z)]
    }

    pub fn is_valid(&self, z: &[u8], o: &str) -> bool {
        self.outputs(z).contains(o)
    }

    /// Lines `<z> -> o1,o2`; the first line fixes `n`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n = None;
        let mut entries: Vec<(usize, Vec<String>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| LabError::Parse { line: i + 1, message: m.into() };
            let (z, outs) = line.split_once("->").ok_or_else(|| err("expected `<z> -> <outputs>`"))?;
            let z = parse_bits(z).map_err(|_| err("z must be a bit string"))?;
            match n {
                None => n = Some(z.len()),
                Some(k) if k != z.len() => return Err(err("inconsistent z length")),
                _ => {}
            }
            let outs: Vec<String> = outs
                .split(',')
                .map(|o| o.trim().to_string())
                .filter(|o| !o.is_empty())
                .collect();
            entries.push((bits_to_mask(&z), outs));
        }
        let n = n.ok_or(LabError::Parse { line: 1, message: "empty search problem".into() })?;
        let mut table: Vec<Vec<String>> = vec![Vec::new(); 1 << n];
        for (m, outs) in entries {
            table[m].extend(outs);
        }
        Self::from_fn(n, |z| table[bits_to_mask(z)].clone())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (m, outs) in self.relation.iter().enumerate() {
            let outs: Vec<&str> = outs.iter().map(String::as_str).collect();
            s.push_str(&format!("{} -> {}\n", bits_to_string(&mask_to_bits(m, self.n)), outs.join(",")));
        }
        s
    }
}
