use std::fmt::Write as _;

use num::{One, Signed};
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::exact::{format_rational, parse_rational, Rational};

use super::dtree::{DecisionTree, DtNode};
use super::gadget::Gadget;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

/// Bit-valued function of the owner's input in `Λ^n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Rule {
    Const(bool),
    /// Bit `bit` (least significant first) of the symbol at `coord`.
    Bit { coord: usize, bit: u32 },
    /// Whether the symbol at `coord` lies in `set`.
    In { coord: usize, set: Vec<u8> },
    Not(Box<Rule>),
    Xor(Vec<Rule>),
    And(Vec<Rule>),
    Or(Vec<Rule>),
    /// Explicit truth table over `Λ^n` in lexicographic order (coordinate 0 most significant).
    Table(Vec<u8>),
}

impl Rule {
    pub fn eval(&self, input: &[u8], q: usize) -> bool {
        match self {
            Rule::Const(b) => *b,
            Rule::Bit { coord, bit } => input[*coord] >> bit & 1 == 1,
            Rule::In { coord, set } => set.contains(&input[*coord]),
            Rule::Not(r) => !r.eval(input, q),
            Rule::Xor(rs) => rs.iter().fold(false, |a, r| a ^ r.eval(input, q)),
            Rule::And(rs) => rs.iter().all(|r| r.eval(input, q)),
            Rule::Or(rs) => rs.iter().any(|r| r.eval(input, q)),
            Rule::Table(t) => {
                let idx = input.iter().fold(0usize, |a, &s| a * q + s as usize);
                t[idx] == 1
            }
        }
    }

    fn validate(&self, n: usize, q: usize) -> Result<()> {
        match self {
            Rule::Const(_) => Ok(()),
            Rule::Bit { coord, bit } => {
                if *coord >= n || *bit >= 8 {
                    return invalid(format!("bit({coord},{bit}) out of range"));
                }
                Ok(())
            }
            Rule::In { coord, set } => {
                if *coord >= n || set.iter().any(|&s| s as usize >= q) {
                    return invalid(format!("in({coord},..) out of range"));
                }
                Ok(())
            }
            Rule::Not(r) => r.validate(n, q),
            Rule::Xor(rs) | Rule::And(rs) | Rule::Or(rs) => {
                rs.iter().try_for_each(|r| r.validate(n, q))
            }
            Rule::Table(t) => {
                let want = (q as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
                if t.len() as u64 != want || t.iter().any(|&b| b > 1) {
                    return invalid(format!("truth table must have {want} bits"));
                }
                Ok(())
            }
        }
    }

    fn write(&self, s: &mut String) {
        let list = |s: &mut String, name: &str, rs: &[Rule]| {
            s.push_str(name);
            s.push('(');
            for (k, r) in rs.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                r.write(s);
            }
            s.push(')');
        };
        match self {
            Rule::Const(b) => s.push(if *b { '1' } else { '0' }),
            Rule::Bit { coord, bit } => write!(s, "bit({coord},{bit})").unwrap(),
            Rule::In { coord, set } => {
                write!(s, "in({coord}").unwrap();
                for v in set {
                    write!(s, ",{v}").unwrap();
                }
                s.push(')');
            }
            Rule::Not(r) => {
                s.push_str("not(");
                r.write(s);
                s.push(')');
            }
            Rule::Xor(rs) => list(s, "xor", rs),
            Rule::And(rs) => list(s, "and", rs),
            Rule::Or(rs) => list(s, "or", rs),
            Rule::Table(t) => {
                s.push_str("table:");
                s.extend(t.iter().map(|&b| if b == 1 { '1' } else { '0' }));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ProtocolNode {
    Leaf(String),
    Node { owner: Party, rule: Rule, children: Box<[ProtocolNode; 2]> },
}

impl ProtocolNode {
    pub fn node(owner: Party, rule: Rule, zero: ProtocolNode, one: ProtocolNode) -> Self {
        ProtocolNode::Node { owner, rule, children: Box::new([zero, one]) }
    }

    pub fn leaf(o: impl Into<String>) -> Self {
        ProtocolNode::Leaf(o.into())
    }

    fn depth(&self) -> usize {
        match self {
            ProtocolNode::Leaf(_) => 0,
            ProtocolNode::Node { children, .. } => 1 + children[0].depth().max(children[1].depth()),
        }
    }

    fn validate(&self, n: usize, q: usize) -> Result<()> {
        match self {
            ProtocolNode::Leaf(o) => {
                if o.is_empty() || o.contains(['{', '}', ',']) {
                    return invalid(format!("bad leaf label `{o}`"));
                }
                Ok(())
            }
            ProtocolNode::Node { rule, children, .. } => {
                rule.validate(n, q)?;
                children[0].validate(n, q)?;
                children[1].validate(n, q)
            }
        }
    }

    fn write(&self, s: &mut String, indent: usize) {
        let pad = "  ".repeat(indent);
        match self {
            ProtocolNode::Leaf(o) => write!(s, "{pad}{{{o}}}").unwrap(),
            ProtocolNode::Node { owner, rule, children } => {
                let who = match owner {
                    Party::Alice => "alice",
                    Party::Bob => "bob",
                };
                write!(s, "{pad}{{{who}, ").unwrap();
                rule.write(s);
                s.push_str(",\n");
                children[0].write(s, indent + 1);
                s.push_str(",\n");
                children[1].write(s, indent + 1);
                s.push('}');
            }
        }
    }
}

/// Deterministic two-party protocol sending one bit per node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProtocolTree {
    n: usize,
    q: usize,
    root: ProtocolNode,
}

impl ProtocolTree {
    pub fn new(n: usize, q: usize, root: ProtocolNode) -> Result<Self> {
        if n == 0 || q < 2 {
            return invalid("protocols need n >= 1 and |Λ| >= 2");
        }
        root.validate(n, q)?;
        Ok(ProtocolTree { n, q, root })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.q
    }

    pub fn root(&self) -> &ProtocolNode {
        &self.root
    }

    /// Communication cost `C`: the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Transcript and output on the input pair `(x, y)`.
    pub fn run(&self, x: &[u8], y: &[u8]) -> (String, String) {
        let mut node = &self.root;
        let mut transcript = String::new();
        loop {
            match node {
                ProtocolNode::Leaf(o) => return (transcript, o.clone()),
                ProtocolNode::Node { owner, rule, children } => {
                    let input = if *owner == Party::Alice { x } else { y };
                    let bit = rule.eval(input, self.q);
                    transcript.push(if bit { '1' } else { '0' });
                    node = &children[bit as usize];
                }
            }
        }
    }

    /// The standard protocol that follows `tree`: at a query of coordinate `i` the
    /// `first` party sends its symbol bit by bit and the other party answers `g`.
    pub fn natural(tree: &DecisionTree, g: &Gadget, first: Party) -> Result<Self> {
        let q = g.size();
        let width = usize::BITS - (q - 1).leading_zeros();
        fn send(
            node: &DtNode,
            g: &Gadget,
            first: Party,
            width: u32,
            coord: usize,
            k: u32,
            sym: usize,
        ) -> ProtocolNode {
            if k == width {
                if sym >= g.size() {
                    return ProtocolNode::leaf(super::BOTTOM);
                }
                let ones: Vec<u8> = (0..g.size() as u8)
                    .filter(|&v| {
                        let bit = match first {
                            Party::Alice => g.eval(sym as u8, v),
                            Party::Bob => g.eval(v, sym as u8),
                        };
                        bit == 1
                    })
                    .collect();
                let DtNode::Query { children, .. } = node else { unreachable!() };
                return ProtocolNode::node(
                    first.other(),
                    Rule::In { coord, set: ones },
                    walk(&children[0], g, first, width),
                    walk(&children[1], g, first, width),
                );
            }
            ProtocolNode::node(
                first,
                Rule::Bit { coord, bit: k },
                send(node, g, first, width, coord, k + 1, sym),
                send(node, g, first, width, coord, k + 1, sym | 1 << k),
            )
        }
        fn walk(node: &DtNode, g: &Gadget, first: Party, width: u32) -> ProtocolNode {
            match node {
                DtNode::Leaf { output, .. } => ProtocolNode::leaf(output.clone()),
                DtNode::Query { coord, .. } => send(node, g, first, width, *coord, 0, 0),
            }
        }
        ProtocolTree::new(tree.n(), q, walk(tree.root(), g, first, width))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("protocol v1\nlambda={}\nn={}\n", self.q, self.n);
        self.root.write(&mut s, 0);
        s.push('\n');
        s
    }
}

/// Public-coin protocol: an exact rational mixture of deterministic trees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandomizedProtocol {
    branches: Vec<(Rational, ProtocolTree)>,
}

impl RandomizedProtocol {
    pub fn new(branches: Vec<(Rational, ProtocolTree)>) -> Result<Self> {
        if branches.is_empty() {
            return invalid("randomized protocol needs at least one tree");
        }
        if branches.iter().any(|(p, _)| !p.is_positive()) {
            return invalid("coin probabilities must be positive");
        }
        let total: Rational = branches.iter().map(|(p, _)| p.clone()).sum();
        if !total.is_one() {
            return invalid(format!("coin probabilities sum to {}", format_rational(&total)));
        }
        let (n, q) = (branches[0].1.n, branches[0].1.q);
        if branches.iter().any(|(_, t)| t.n != n || t.q != q) {
            return invalid("all trees must share n and the alphabet");
        }
        Ok(RandomizedProtocol { branches })
    }

    pub fn deterministic(tree: ProtocolTree) -> Self {
        RandomizedProtocol { branches: vec![(Rational::one(), tree)] }
    }

    pub fn branches(&self) -> &[(Rational, ProtocolTree)] {
        &self.branches
    }

    pub fn n(&self) -> usize {
        self.branches[0].1.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.branches[0].1.q
    }

    pub fn depth(&self) -> usize {
        self.branches.iter().map(|(_, t)| t.depth()).max().unwrap_or(0)
    }

    /// Parses `protocol v1` text: a single tree, or `coin <p> <tree>` items.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser::new(text);
        p.expect_word("protocol")?;
        p.expect_word("v1")?;
        p.expect_word("lambda")?;
        p.expect_char('=')?;
        let q = p.number()?;
        p.expect_word("n")?;
        p.expect_char('=')?;
        let n = p.number()?;
        let mut branches = Vec::new();
        if p.peek_word("coin") {
            while p.peek_word("coin") {
                p.expect_word("coin")?;
                let prob = parse_rational(&p.token()?).map_err(|e| p.error(&e.to_string()))?;
                let root = p.node()?;
                branches.push((prob, ProtocolTree::new(n, q, root)?));
            }
        } else {
            branches.push((Rational::one(), ProtocolTree::new(n, q, p.node()?)?));
        }
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error("trailing input after protocol"));
        }
        Self::new(branches)
    }

    pub fn to_text(&self) -> String {
        if self.branches.len() == 1 && self.branches[0].0.is_one() {
            return self.branches[0].1.to_text();
        }
        let (q, n) = (self.alphabet_size(), self.n());
        let mut s = format!("protocol v1\nlambda={q}\nn={n}\n");
        for (p, t) in &self.branches {
            writeln!(s, "coin {}", format_rational(p)).unwrap();
            t.root.write(&mut s, 0);
            s.push('\n');
        }
        s
    }
}

impl ProtocolTree {
    /// Parses a file holding exactly one deterministic tree.
    pub fn parse(text: &str) -> Result<Self> {
        let r = RandomizedProtocol::parse(text)?;
        if r.branches.len() != 1 {
            return invalid("expected a deterministic protocol");
        }
        Ok(r.branches.into_iter().next().unwrap().1)
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        // Strip comments up front so the scanner only deals with tokens.
        let cleaned: String = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .collect::<Vec<_>>()
            .join("\n");
        Parser { chars: cleaned.chars().collect(), pos: 0 }
    }

    fn line(&self) -> usize {
        1 + self.chars[..self.pos.min(self.chars.len())].iter().filter(|&&c| c == '\n').count()
    }

    fn error(&self, m: &str) -> LabError {
        LabError::Parse { line: self.line(), message: m.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expect_char(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_') {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn peek_word(&mut self, w: &str) -> bool {
        let save = self.pos;
        let got = self.ident();
        self.pos = save;
        got == w
    }

    fn expect_word(&mut self, w: &str) -> Result<()> {
        if self.ident() == w {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{w}`")))
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.ident().parse().map_err(|_| self.error("expected a number"))
    }

    /// Whitespace-delimited token (used for coin probabilities).
    fn token(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && !self.chars[self.pos].is_whitespace() && self.chars[self.pos] != '{' {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a token"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn node(&mut self) -> Result<ProtocolNode> {
        self.expect_char('{')?;
        let save = self.pos;
        let word = self.ident();
        if (word == "alice" || word == "bob") && self.peek() == Some(',') {
            let owner = if word == "alice" { Party::Alice } else { Party::Bob };
            self.expect_char(',')?;
            let rule = self.rule()?;
            self.expect_char(',')?;
            let zero = self.node()?;
            self.expect_char(',')?;
            let one = self.node()?;
            self.expect_char('}')?;
            return Ok(ProtocolNode::node(owner, rule, zero, one));
        }
        self.pos = save;
        let start = self.pos;
        while self.pos < self.chars.len() && !matches!(self.chars[self.pos], '}' | '{' | ',') {
            self.pos += 1;
        }
        let label: String = self.chars[start..self.pos].iter().collect::<String>().trim().to_string();
        if label.is_empty() {
            return Err(self.error("empty leaf label"));
        }
        self.expect_char('}')?;
        Ok(ProtocolNode::Leaf(label))
    }

    fn rule(&mut self) -> Result<Rule> {
        let word = self.ident();
        match word.as_str() {
            "0" => Ok(Rule::Const(false)),
            "1" => Ok(Rule::Const(true)),
            "table" => {
                self.expect_char(':')?;
                let bits = self.ident();
                let t = bits
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(0),
                        '1' => Ok(1),
                        _ => Err(self.error("table bits must be 0/1")),
                    })
                    .collect::<Result<Vec<u8>>>()?;
                Ok(Rule::Table(t))
            }
            "bit" => {
                self.expect_char('(')?;
                let coord = self.number()?;
                self.expect_char(',')?;
                let bit = self.number()? as u32;
                self.expect_char(')')?;
                Ok(Rule::Bit { coord, bit })
            }
            "in" => {
                self.expect_char('(')?;
                let coord = self.number()?;
                let mut set = Vec::new();
                while self.peek() == Some(',') {
                    self.pos += 1;
                    set.push(self.number()? as u8);
                }
                self.expect_char(')')?;
                Ok(Rule::In { coord, set })
            }
            "not" => {
                self.expect_char('(')?;
                let r = self.rule()?;
                self.expect_char(')')?;
                Ok(Rule::Not(Box::new(r)))
            }
            "xor" | "and" | "or" => {
                self.expect_char('(')?;
                let mut rs = vec![self.rule()?];
                while self.peek() == Some(',') {
                    self.pos += 1;
                    rs.push(self.rule()?);
                }
                self.expect_char(')')?;
                Ok(match word.as_str() {
                    "xor" => Rule::Xor(rs),
                    "and" => Rule::And(rs),
                    _ => Rule::Or(rs),
                })
            }
            _ => Err(self.error(&format!("unknown rule `{word}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gadget, GadgetKind};

    const XOR_TWO_ROUND: &str = "protocol v1\nlambda=2\nn=1\n\
        {alice, bit(0,0),\n  {bob, bit(0,0), {0}, {1}},\n  {bob, not(bit(0,0)), {1}, {0}}}\n";

    #[test]
    fn runs_match_hand_traces() {
        let leaf = ProtocolTree::new(1, 2, ProtocolNode::leaf("o")).unwrap();
        assert_eq!(leaf.run(&[0], &[1]), (String::new(), "o".to_string()));
        assert_eq!(leaf.depth(), 0);

        let one = ProtocolTree::new(
            1,
            2,
            ProtocolNode::node(Party::Alice, Rule::Bit { coord: 0, bit: 0 }, ProtocolNode::leaf("l0"), ProtocolNode::leaf("l1")),
        )
        .unwrap();
        assert_eq!(one.run(&[1], &[0]), ("1".to_string(), "l1".to_string()));

        let p = ProtocolTree::parse(XOR_TWO_ROUND).unwrap();
        assert_eq!(p.run(&[0], &[1]), ("01".to_string(), "1".to_string()));
        assert_eq!(p.depth(), 2);
    }

    #[test]
    fn text_roundtrip() {
        let p = ProtocolTree::parse(XOR_TWO_ROUND).unwrap();
        assert_eq!(ProtocolTree::parse(&p.to_text()).unwrap(), p);
        let r = RandomizedProtocol::new(vec![
            (crate::exact::ratio(1, 3), p.clone()),
            (crate::exact::ratio(2, 3), ProtocolTree::new(1, 2, ProtocolNode::leaf("x")).unwrap()),
        ])
        .unwrap();
        assert_eq!(RandomizedProtocol::parse(&r.to_text()).unwrap(), r);
    }

    #[test]
    fn rules_evaluate() {
        let t = Rule::Table(vec![0, 1, 1, 0]);
        assert!(t.eval(&[0, 1], 2));
        assert!(!t.eval(&[1, 1], 2));
        let r = Rule::Or(vec![Rule::In { coord: 1, set: vec![2] }, Rule::Xor(vec![Rule::Const(true), Rule::Bit { coord: 0, bit: 1 }])]);
        assert!(r.eval(&[0, 2], 3));
        assert!(r.eval(&[1, 0], 3));
        assert!(!r.eval(&[2, 0], 3));
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(ProtocolTree::parse("protocol v1\nlambda=2\nn=1\n{alice, bit(3,0), {0}, {1}}").is_err());
        assert!(ProtocolTree::parse("protocol v1\nlambda=2\nn=1\n{alice, bit(0,0), {0}}").is_err());
        assert!(RandomizedProtocol::parse("protocol v1\nlambda=2\nn=1\ncoin 1/2 {a}\ncoin 1/3 {b}").is_err());
        assert!(ProtocolTree::parse("protocol v1\nlambda=2\nn=1\n{alice, table:01, {0}, {1}}").is_ok());
        assert!(ProtocolTree::parse("protocol v1\nlambda=2\nn=2\n{alice, table:01, {0}, {1}}").is_err());
    }

    #[test]
    fn natural_protocol_computes_the_composed_function() {
        let g = make_gadget(GadgetKind::Random { seed: 11 }, 3).unwrap();
        let tree = DecisionTree::new(
            2,
            DtNode::query(1, DtNode::query(0, DtNode::leaf("a"), DtNode::leaf("b")), DtNode::leaf("c")),
        )
        .unwrap();
        for first in [Party::Alice, Party::Bob] {
            let p = ProtocolTree::natural(&tree, &g, first).unwrap();
            for x0 in 0..3u8 {
                for x1 in 0..3u8 {
                    for y0 in 0..3u8 {
                        for y1 in 0..3u8 {
                            let z = [g.eval(x0, y0), g.eval(x1, y1)];
                            let (_, out) = p.run(&[x0, x1], &[y0, y1]);
                            assert_eq!(out, tree.run(&z).0);
                        }
                    }
                }
            }
        }
    }
}
