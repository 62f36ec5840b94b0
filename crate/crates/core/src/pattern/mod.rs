//! The nine query patterns, their grounded instances and gold answer sets.

mod answer;
mod ground;
mod record;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KgError, LiteralId, NodeRef, RelationId};

pub use answer::{answer_set, compare_verdict, project, GoldAnswer};
pub use ground::{enumerate_instances, ground, GroundConfig, Grounding, DEFAULT_MAX_ANSWERS};
pub use record::{canonical_hash, InstanceRecord};

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("compare values are tied under `{0}`")]
    Tie(CompareKind),
    #[error("unknown pattern `{0}`")]
    UnknownPattern(String),
    #[error(transparent)]
    Kg(#[from] KgError),
}

pub type Result<T> = std::result::Result<T, PatternError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PatternType {
    OneP,
    TwoP,
    ThreeP,
    TwoI,
    ThreeI,
    TwoU,
    IP,
    PI,
    Compare,
}

impl PatternType {
    pub const ALL: [PatternType; 9] = [
        PatternType::OneP,
        PatternType::TwoP,
        PatternType::ThreeP,
        PatternType::TwoI,
        PatternType::ThreeI,
        PatternType::TwoU,
        PatternType::IP,
        PatternType::PI,
        PatternType::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternType::OneP => "1p",
            PatternType::TwoP => "2p",
            PatternType::ThreeP => "3p",
            PatternType::TwoI => "2i",
            PatternType::ThreeI => "3i",
            PatternType::TwoU => "2u",
            PatternType::IP => "ip",
            PatternType::PI => "pi",
            PatternType::Compare => "compare",
        }
    }

    /// Number of sub-questions a verbalization of this pattern carries.
    pub fn arity(self) -> usize {
        match self {
            PatternType::OneP => 1,
            PatternType::TwoP | PatternType::TwoI | PatternType::TwoU | PatternType::Compare => 2,
            PatternType::ThreeP | PatternType::ThreeI | PatternType::IP | PatternType::PI => 3,
        }
    }
}

impl fmt::Display for PatternType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternType {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self> {
        PatternType::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PatternError::UnknownPattern(s.to_string()))
    }
}

impl TryFrom<String> for PatternType {
    type Error = PatternError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PatternType> for String {
    fn from(p: PatternType) -> String {
        p.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareKind {
    Same,
    Lesser,
    Greater,
}

impl CompareKind {
    pub const ALL: [CompareKind; 3] = [CompareKind::Same, CompareKind::Lesser, CompareKind::Greater];

    pub fn name(self) -> &'static str {
        match self {
            CompareKind::Same => "same",
            CompareKind::Lesser => "lesser",
            CompareKind::Greater => "greater",
        }
    }
}

impl fmt::Display for CompareKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One anchor entity followed along one relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Branch {
    pub anchor: EntityId,
    pub relation: RelationId,
}

impl Branch {
    pub fn new(anchor: EntityId, relation: RelationId) -> Self {
        Self { anchor, relation }
    }
}

/// A numeric fact `(entity, relation, literal)` used by compare instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NumericFact {
    pub entity: EntityId,
    pub literal: LiteralId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroundedInstance {
    OneP {
        anchor: EntityId,
        relation: RelationId,
    },
    TwoP {
        anchor: EntityId,
        relations: [RelationId; 2],
    },
    ThreeP {
        anchor: EntityId,
        relations: [RelationId; 3],
    },
    TwoI {
        branches: [Branch; 2],
    },
    ThreeI {
        branches: [Branch; 3],
    },
    TwoU {
        branches: [Branch; 2],
    },
    /// Intersection of two branches, then one projection.
    IP {
        branches: [Branch; 2],
        projection: RelationId,
    },
    /// Two-hop path from `anchor`, intersected with one branch.
    PI {
        anchor: EntityId,
        path: [RelationId; 2],
        branch: Branch,
    },
    Compare {
        relation: RelationId,
        first: NumericFact,
        second: NumericFact,
        kind: CompareKind,
    },
}

impl GroundedInstance {
    pub fn pattern(&self) -> PatternType {
        match self {
            GroundedInstance::OneP { .. } => PatternType::OneP,
            GroundedInstance::TwoP { .. } => PatternType::TwoP,
            GroundedInstance::ThreeP { .. } => PatternType::ThreeP,
            GroundedInstance::TwoI { .. } => PatternType::TwoI,
            GroundedInstance::ThreeI { .. } => PatternType::ThreeI,
            GroundedInstance::TwoU { .. } => PatternType::TwoU,
            GroundedInstance::IP { .. } => PatternType::IP,
            GroundedInstance::PI { .. } => PatternType::PI,
            GroundedInstance::Compare { .. } => PatternType::Compare,
        }
    }

    /// Anchor entities in serialization order.
    pub fn anchors(&self) -> Vec<EntityId> {
        match *self {
            GroundedInstance::OneP { anchor, .. }
            | GroundedInstance::TwoP { anchor, .. }
            | GroundedInstance::ThreeP { anchor, .. } => vec![anchor],
            GroundedInstance::TwoI { branches } | GroundedInstance::TwoU { branches } => {
                branches.iter().map(|b| b.anchor).collect()
            }
            GroundedInstance::ThreeI { branches } => branches.iter().map(|b| b.anchor).collect(),
            GroundedInstance::IP { branches, .. } => branches.iter().map(|b| b.anchor).collect(),
            GroundedInstance::PI { anchor, branch, .. } => vec![anchor, branch.anchor],
            GroundedInstance::Compare { first, second, .. } => vec![first.entity, second.entity],
        }
    }

    /// Relations in serialization order.
    pub fn relations(&self) -> Vec<RelationId> {
        match *self {
            GroundedInstance::OneP { relation, .. } => vec![relation],
            GroundedInstance::TwoP { relations, .. } => relations.to_vec(),
            GroundedInstance::ThreeP { relations, .. } => relations.to_vec(),
            GroundedInstance::TwoI { branches } | GroundedInstance::TwoU { branches } => {
                branches.iter().map(|b| b.relation).collect()
            }
            GroundedInstance::ThreeI { branches } => branches.iter().map(|b| b.relation).collect(),
            GroundedInstance::IP { branches, projection } => {
                vec![branches[0].relation, branches[1].relation, projection]
            }
            GroundedInstance::PI { path, branch, .. } => vec![path[0], path[1], branch.relation],
            GroundedInstance::Compare { relation, .. } => vec![relation],
        }
    }

    /// Order-insensitive form: intersection and union branches sorted.
    pub fn canonical(&self) -> GroundedInstance {
        let mut c = *self;
        match &mut c {
            GroundedInstance::TwoI { branches } | GroundedInstance::TwoU { branches } => branches.sort(),
            GroundedInstance::ThreeI { branches } => branches.sort(),
            GroundedInstance::IP { branches, .. } => branches.sort(),
            _ => {}
        }
        c
    }
}

pub(crate) fn entity_nodes(set: &std::collections::BTreeSet<NodeRef>) -> impl Iterator<Item = EntityId> + '_ {
    set.iter().filter_map(|n| n.entity())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_stable_names() {
        let names: Vec<&str> = PatternType::ALL.iter().map(|p| p.name()).collect();
        assert_eq!(names, ["1p", "2p", "3p", "2i", "3i", "2u", "ip", "pi", "compare"]);
        for p in PatternType::ALL {
            assert_eq!(p.name().parse::<PatternType>().unwrap(), p);
        }
        assert!("4p".parse::<PatternType>().is_err());
        assert_eq!(serde_json::to_string(&PatternType::IP).unwrap(), "\"ip\"");
    }

    #[test]
    fn arity_table() {
        let arity: Vec<usize> = PatternType::ALL.iter().map(|p| p.arity()).collect();
        assert_eq!(arity, [1, 2, 3, 2, 3, 2, 3, 3, 2]);
    }
}
