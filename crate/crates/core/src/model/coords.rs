use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};

/// Subset of the coordinates `0..n`, stored as a bitmask (bit `i` = coordinate `i`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoordSet(pub u32);

impl CoordSet {
    pub const EMPTY: CoordSet = CoordSet(0);

    pub fn full(n: usize) -> Self {
        assert!(n <= 31, "at most 31 coordinates");
        CoordSet(((1u64 << n) - 1) as u32)
    }

    pub fn single(i: usize) -> Self {
        CoordSet(1 << i)
    }

    pub fn from_indices(idx: &[usize]) -> Self {
        CoordSet(idx.iter().fold(0, |m, &i| m | (1 << i)))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn union(self, o: Self) -> Self {
        CoordSet(self.0 | o.0)
    }

    pub fn intersect(self, o: Self) -> Self {
        CoordSet(self.0 & o.0)
    }

    pub fn minus(self, o: Self) -> Self {
        CoordSet(self.0 & !o.0)
    }

    pub fn is_subset(self, o: Self) -> bool {
        self.0 & !o.0 == 0
    }

    pub fn is_disjoint(self, o: Self) -> bool {
        self.0 & o.0 == 0
    }

    /// Coordinates in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let i = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(i)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Every subset of `self` (including the empty set and `self`), in increasing mask order.
    pub fn subsets(self) -> impl Iterator<Item = CoordSet> {
        let full = self.0;
        let mut cur: Option<u32> = Some(0);
        std::iter::from_fn(move || {
            let s = cur?;
            cur = if s == full { None } else { Some((s.wrapping_sub(full)) & full) };
            Some(CoordSet(s))
        })
    }

    /// Non-empty subsets of `self`.
    pub fn nonempty_subsets(self) -> impl Iterator<Item = CoordSet> {
        self.subsets().filter(|s| !s.is_empty())
    }
}

impl fmt::Display for CoordSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl Serialize for CoordSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

/// `z` as a string of `0`/`1`, coordinate 0 first.
pub fn bits_to_string(z: &[u8]) -> String {
    z.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    s.trim()
        .chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => invalid(format!("`{s}` is not a bit string")),
        })
        .collect()
}

/// A string in `{0,1,*}^n`: queried coordinates carry their answer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Restriction {
    entries: Vec<Option<u8>>,
}

impl Restriction {
    pub fn free_all(n: usize) -> Self {
        Restriction { entries: vec![None; n] }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let entries = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(Some(0)),
                '1' => Ok(Some(1)),
                '*' => Ok(None),
                _ => invalid(format!("`{s}` is not a restriction")),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Restriction { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.entries[i]
    }

    pub fn fix_coord(&mut self, i: usize, bit: u8) {
        self.entries[i] = Some(bit);
    }

    pub fn free(&self) -> CoordSet {
        CoordSet(
            self.entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.is_none())
                .fold(0, |m, (i, _)| m | 1 << i),
        )
    }

    pub fn fixed(&self) -> CoordSet {
        CoordSet::full(self.n()).minus(self.free())
    }

    /// Whether `z` agrees with every fixed entry.
    pub fn consistent_with(&self, z: &[u8]) -> bool {
        self.entries.iter().zip(z).all(|(e, &b)| e.is_none_or(|v| v == b))
    }
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let c = match e {
                None => '*',
                Some(0) => '0',
                Some(_) => '1',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl Serialize for Restriction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}
