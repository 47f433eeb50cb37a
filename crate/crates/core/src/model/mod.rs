//! Foundational combinatorial objects shared by every other module.

mod constants;
mod coords;
mod dtree;
mod gadget;
mod protocol;
mod search;

pub use constants::{SimulationConstants, Threshold};
pub use coords::{bits_to_string, parse_bits, CoordSet, Restriction};
pub use dtree::{DecisionTree, DtNode};
pub use gadget::{make_gadget, Gadget, GadgetKind};
pub use protocol::{Party, ProtocolNode, ProtocolTree, RandomizedProtocol, Rule};
pub use search::{SearchProblem, BOTTOM};
