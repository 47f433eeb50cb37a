use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};

use super::CoordSet;

/// Inner function `g: Λ × Λ → {0,1}` over the symbols `0..size`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Gadget {
    size: usize,
    table: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GadgetKind {
    /// Parity of the symbol sum; the usual XOR on `{0,1}`.
    Xor,
    /// Product of the low bits; the usual AND on `{0,1}`.
    And,
    Constant(u8),
    /// Mod-2 inner product of the `prefix` most significant bits.
    InnerProduct { prefix: u32 },
    Random { seed: u64 },
}

pub fn make_gadget(kind: GadgetKind, size: usize) -> Result<Gadget> {
    if size < 2 {
        return invalid("alphabet must have at least 2 symbols");
    }
    match kind {
        GadgetKind::Xor => Gadget::from_fn(size, |u, v| (u + v) % 2),
        GadgetKind::And => Gadget::from_fn(size, |u, v| (u & v) & 1),
        GadgetKind::Constant(c) => {
            if c > 1 {
                return invalid("constant gadget value must be 0 or 1");
            }
            Gadget::from_fn(size, |_, _| c as usize)
        }
        GadgetKind::InnerProduct { prefix } => {
            if !size.is_power_of_two() {
                return invalid("inner product needs |Λ| a power of two");
            }
            let width = size.trailing_zeros();
            if prefix > width {
                return invalid(format!("prefix {prefix} longer than symbol width {width}"));
            }
            let shift = width - prefix;
            Gadget::from_fn(size, |u, v| ((u >> shift) & (v >> shift)).count_ones() as usize % 2)
        }
        GadgetKind::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let table = (0..size * size).map(|_| rng.gen_range(0..2u8)).collect();
            Ok(Gadget { size, table })
        }
    }
}

impl Gadget {
    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> usize) -> Result<Self> {
        if !(2..=256).contains(&size) {
            return invalid(format!("alphabet size {size} outside 2..=256"));
        }
        Self::matrix(size, f)
    }

    /// Like [`from_fn`](Self::from_fn) but also admits the 1×1 matrices produced by
    /// degenerate product reductions.
    pub(crate) fn matrix(size: usize, f: impl Fn(usize, usize) -> usize) -> Result<Self> {
        if size == 0 || size > 256 {
            return invalid(format!("matrix size {size} outside 1..=256"));
        }
        let mut table = Vec::with_capacity(size * size);
        for u in 0..size {
            for v in 0..size {
                let bit = f(u, v);
                if bit > 1 {
                    return invalid(format!("g({u},{v}) = {bit} is not a bit"));
                }
                table.push(bit as u8);
            }
        }
        Ok(Gadget { size, table })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return invalid("gadget table must be square");
        }
        Self::from_fn(size, |u, v| rows[u][v] as usize)
    }

    /// `|Λ|`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// `log2 |Λ|`.
    pub fn b(&self) -> f64 {
        (self.size as f64).log2()
    }

    #[inline]
    pub fn eval(&self, u: u8, v: u8) -> u8 {
        self.table[u as usize * self.size + v as usize]
    }

    pub fn row(&self, u: usize) -> &[u8] {
        &self.table[u * self.size..(u + 1) * self.size]
    }

    fn check_symbols(&self, xs: &[u8]) -> Result<()> {
        match xs.iter().find(|&&s| s as usize >= self.size) {
            Some(s) => invalid(format!("symbol {s} outside alphabet of size {}", self.size)),
            None => Ok(()),
        }
    }

    /// `g^I(x_I, y_I)`; `x_i` and `y_i` list the symbols of the coordinates of `coords` in order.
    pub fn block_eval(&self, coords: CoordSet, x_i: &[u8], y_i: &[u8]) -> Result<Vec<u8>> {
        if x_i.len() != coords.len() || y_i.len() != coords.len() {
            return invalid("block inputs must be indexed by the coordinate set");
        }
        self.check_symbols(x_i)?;
        self.check_symbols(y_i)?;
        Ok(x_i.iter().zip(y_i).map(|(&u, &v)| self.eval(u, v)).collect())
    }

    /// Parity of `g^I(x_I, y_I)`. The empty set is rejected.
    pub fn xor_eval(&self, coords: CoordSet, x_i: &[u8], y_i: &[u8]) -> Result<u8> {
        if coords.is_empty() {
            return invalid("parity over the empty coordinate set");
        }
        Ok(self.block_eval(coords, x_i, y_i)?.iter().fold(0, |a, b| a ^ b))
    }

    /// Class index per symbol; symbols with identical rows share a class.
    pub fn row_classes(&self) -> Vec<usize> {
        let mut reps: Vec<usize> = Vec::new();
        (0..self.size)
            .map(|u| match reps.iter().position(|&r| self.row(r) == self.row(u)) {
                Some(k) => k,
                None => {
                    reps.push(u);
                    reps.len() - 1
                }
            })
            .collect()
    }

    pub fn transpose(&self) -> Gadget {
        Gadget::from_fn(self.size, |u, v| self.eval(v as u8, u as u8) as usize).unwrap()
    }

    pub fn complement(&self) -> Gadget {
        Gadget::from_fn(self.size, |u, v| 1 - self.eval(u as u8, v as u8) as usize).unwrap()
    }

    pub fn permute(&self, rows: &[usize], cols: &[usize]) -> Gadget {
        Gadget::from_fn(self.size, |u, v| self.eval(rows[u] as u8, cols[v] as u8) as usize)
            .unwrap()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, m: &str| LabError::Parse { line: line + 1, message: m.into() };
        match lines.next() {
            Some((_, "gadget v1")) => {}
            Some((i, _)) => return Err(err(i, "expected header `gadget v1`")),
            None => return Err(err(0, "empty gadget file")),
        }
        let (i, l) = lines.next().ok_or_else(|| err(1, "missing `lambda=` line"))?;
        let size: usize = l
            .strip_prefix("lambda=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| err(i, "expected `lambda=<size>`"))?;
        if !(2..=256).contains(&size) {
            return Err(err(i, "lambda must be in 2..=256"));
        }
        let mut rows = Vec::with_capacity(size);
        for (i, l) in lines {
            let row = l
                .chars()
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    _ => Err(err(i, "rows may only contain 0 and 1")),
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != size {
                return Err(err(i, "row length differs from lambda"));
            }
            rows.push(row);
        }
        if rows.len() != size {
            return Err(err(size + 1, "wrong number of rows"));
        }
        Self::from_rows(&rows)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("gadget v1\nlambda={}\n", self.size);
        for u in 0..self.size {
            for &b in self.row(u) {
                s.push(if b == 0 { '0' } else { '1' });
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_and_parity_examples() {
        let xor = make_gadget(GadgetKind::Xor, 2).unwrap();
        let and = make_gadget(GadgetKind::And, 2).unwrap();
        let i2 = CoordSet::from_indices(&[0, 1]);
        assert_eq!(xor.block_eval(i2, &[0, 1], &[1, 1]).unwrap(), vec![1, 0]);
        assert_eq!(xor.block_eval(CoordSet::EMPTY, &[], &[]).unwrap(), Vec::<u8>::new());
        assert_eq!(and.block_eval(CoordSet::single(0), &[1], &[1]).unwrap(), vec![1]);
        assert_eq!(xor.xor_eval(i2, &[0, 1], &[1, 1]).unwrap(), 1);
        assert_eq!(and.xor_eval(i2, &[1, 1], &[1, 1]).unwrap(), 0);
        assert_eq!(and.xor_eval(CoordSet::single(0), &[0], &[1]).unwrap(), 0);
        assert!(xor.xor_eval(CoordSet::EMPTY, &[], &[]).is_err());
        assert!(xor.block_eval(CoordSet::single(0), &[2], &[0]).is_err());
    }

    #[test]
    fn inner_product_uses_leading_bits() {
        let g = make_gadget(GadgetKind::InnerProduct { prefix: 1 }, 4).unwrap();
        for v in 0..4u8 {
            for w in 0..4u8 {
                assert_eq!(g.eval(v, w), (v >> 1) & (w >> 1));
            }
        }
        assert!(make_gadget(GadgetKind::InnerProduct { prefix: 3 }, 4).is_err());
        assert!(make_gadget(GadgetKind::InnerProduct { prefix: 1 }, 6).is_err());
    }

    #[test]
    fn inner_product_symmetric_and_zero_row() {
        for (size, d) in [(4usize, 2u32), (8, 2), (16, 3), (16, 4)] {
            let g = make_gadget(GadgetKind::InnerProduct { prefix: d }, size).unwrap();
            assert_eq!(g, g.transpose());
            assert!(g.row(0).iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn constant_and_random() {
        let c = make_gadget(GadgetKind::Constant(0), 3).unwrap();
        assert!((0..3).all(|u| c.row(u).iter().all(|&b| b == 0)));
        let r1 = make_gadget(GadgetKind::Random { seed: 7 }, 4).unwrap();
        let r2 = make_gadget(GadgetKind::Random { seed: 7 }, 4).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn text_roundtrip_and_errors() {
        let g = make_gadget(GadgetKind::Random { seed: 3 }, 5).unwrap();
        assert_eq!(Gadget::parse(&g.to_text()).unwrap(), g);
        assert!(Gadget::parse("gadget v1\nlambda=2\n01\n1\n").is_err());
        assert!(Gadget::parse("gadget v2\nlambda=2\n01\n10\n").is_err());
        assert!(Gadget::parse("gadget v1\nlambda=2\n01\n12\n").is_err());
    }

    #[test]
    fn row_classes_group_identical_rows() {
        let g = make_gadget(GadgetKind::InnerProduct { prefix: 1 }, 4).unwrap();
        assert_eq!(g.row_classes(), vec![0, 0, 1, 1]);
    }
}
