use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DtNode {
    Leaf {
        output: String,
        /// Set when the leaf stands for a failed simulation run.
        #[serde(skip_serializing_if = "Option::is_none")]
        failure: Option<String>,
    },
    Query {
        coord: usize,
        children: Box<[DtNode; 2]>,
    },
}

impl DtNode {
    pub fn leaf(o: impl Into<String>) -> Self {
        DtNode::Leaf { output: o.into(), failure: None }
    }

    pub fn failed(reason: impl Into<String>) -> Self {
        let reason = reason.into();
        DtNode::Leaf { output: format!("FAIL:{reason}"), failure: Some(reason) }
    }

    pub fn query(coord: usize, zero: DtNode, one: DtNode) -> Self {
        DtNode::Query { coord, children: Box::new([zero, one]) }
    }

    fn check(&self, n: usize, seen: u32) -> Result<()> {
        match self {
            DtNode::Leaf { .. } => Ok(()),
            DtNode::Query { coord, children } => {
                if *coord >= n {
                    return invalid(format!("query of coordinate {coord} outside 0..{n}"));
                }
                if seen >> coord & 1 == 1 {
                    return invalid(format!("coordinate {coord} queried twice on one path"));
                }
                children[0].check(n, seen | 1 << coord)?;
                children[1].check(n, seen | 1 << coord)
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            DtNode::Leaf { .. } => 0,
            DtNode::Query { children, .. } => 1 + children[0].depth().max(children[1].depth()),
        }
    }

    fn leaves(&self) -> usize {
        match self {
            DtNode::Leaf { .. } => 1,
            DtNode::Query { children, .. } => children[0].leaves() + children[1].leaves(),
        }
    }

    fn failures(&self) -> usize {
        match self {
            DtNode::Leaf { failure, .. } => failure.is_some() as usize,
            DtNode::Query { children, .. } => children[0].failures() + children[1].failures(),
        }
    }

    fn write(&self, s: &mut String, indent: usize) {
        let pad = "  ".repeat(indent);
        match self {
            DtNode::Leaf { output, .. } => writeln!(s, "{pad}leaf {output}").unwrap(),
            DtNode::Query { coord, children } => {
                writeln!(s, "{pad}query z{coord}").unwrap();
                children[0].write(s, indent + 1);
                children[1].write(s, indent + 1);
            }
        }
    }
}

/// Query tree over `{0,1}^n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecisionTree {
    n: usize,
    root: DtNode,
}

impl DecisionTree {
    pub fn new(n: usize, root: DtNode) -> Result<Self> {
        if n == 0 || n > 31 {
            return invalid("decision trees need 1 <= n <= 31");
        }
        root.check(n, 0)?;
        Ok(DecisionTree { n, root })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn root(&self) -> &DtNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves()
    }

    pub fn failure_leaves(&self) -> usize {
        self.root.failures()
    }

    /// Output and number of queries on `z`.
    pub fn run(&self, z: &[u8]) -> (String, usize) {
        let mut node = &self.root;
        let mut queries = 0;
        loop {
            match node {
                DtNode::Leaf { output, .. } => return (output.clone(), queries),
                DtNode::Query { coord, children } => {
                    queries += 1;
                    node = &children[z[*coord] as usize];
                }
            }
        }
    }

    /// The tree querying every coordinate in order and emitting `f(z)`.
    pub fn full(n: usize, f: impl Fn(&[u8]) -> String) -> Result<Self> {
        fn build(i: usize, n: usize, z: &mut Vec<u8>, f: &dyn Fn(&[u8]) -> String) -> DtNode {
            if i == n {
                return DtNode::leaf(f(z));
            }
            z.push(0);
            let zero = build(i + 1, n, z, f);
            z.pop();
            z.push(1);
            let one = build(i + 1, n, z, f);
            z.pop();
            DtNode::query(i, zero, one)
        }
        DecisionTree::new(n, build(0, n, &mut Vec::new(), &f))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("decision-tree n={}\n", self.n);
        self.root.write(&mut s, 0);
        s
    }
}
