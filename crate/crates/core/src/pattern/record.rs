use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{answer_set, Branch, CompareKind, GroundedInstance, NumericFact, PatternError, PatternType, Result};
use crate::kg::{KnowledgeGraph, NodeRef};

/// Serialized instance, one JSONL line. Anchors and relations are graph ids;
/// `values` holds the literal texts of compare instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub pattern: PatternType,
    pub anchors: Vec<String>,
    pub relations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CompareKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    #[serde(default)]
    pub answers: Vec<String>,
}

#[derive(Serialize)]
struct HashKey<'a> {
    pattern: PatternType,
    anchors: &'a [String],
    relations: &'a [String],
    kind: Option<CompareKind>,
    values: &'a Option<Vec<String>>,
}

impl InstanceRecord {
    /// Record without answers.
    pub fn shape(kg: &KnowledgeGraph, inst: &GroundedInstance) -> Self {
        let (kind, values) = match *inst {
            GroundedInstance::Compare {
                first, second, kind, ..
            } => (
                Some(kind),
                Some(vec![
                    kg.literal(first.literal).text.clone(),
                    kg.literal(second.literal).text.clone(),
                ]),
            ),
            _ => (None, None),
        };
        Self {
            pattern: inst.pattern(),
            anchors: inst.anchors().iter().map(|&e| kg.entity_key(e).to_string()).collect(),
            relations: inst.relations().iter().map(|&r| kg.relation_key(r).to_string()).collect(),
            kind,
            values,
            answers: Vec::new(),
        }
    }

    /// Record with gold answer labels attached.
    pub fn from_instance(kg: &KnowledgeGraph, inst: &GroundedInstance) -> Result<Self> {
        let mut rec = Self::shape(kg, inst);
        rec.answers = answer_set(kg, inst)?.labels(kg);
        Ok(rec)
    }

    /// Resolves ids against `kg`. Fails on unknown ids or a wrong field count.
    pub fn to_instance(&self, kg: &KnowledgeGraph) -> Result<GroundedInstance> {
        let arity_err = || {
            PatternError::InvalidInstance(format!(
                "{} record with {} anchors and {} relations",
                self.pattern,
                self.anchors.len(),
                self.relations.len()
            ))
        };
        let a = self
            .anchors
            .iter()
            .map(|id| kg.entity(id))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let r = self
            .relations
            .iter()
            .map(|id| kg.relation(id))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let inst = match (self.pattern, a.as_slice(), r.as_slice()) {
            (PatternType::OneP, &[anchor], &[relation]) => GroundedInstance::OneP { anchor, relation },
            (PatternType::TwoP, &[anchor], &[r1, r2]) => GroundedInstance::TwoP {
                anchor,
                relations: [r1, r2],
            },
            (PatternType::ThreeP, &[anchor], &[r1, r2, r3]) => GroundedInstance::ThreeP {
                anchor,
                relations: [r1, r2, r3],
            },
            (PatternType::TwoI, &[a1, a2], &[r1, r2]) => GroundedInstance::TwoI {
                branches: [Branch::new(a1, r1), Branch::new(a2, r2)],
            },
            (PatternType::ThreeI, &[a1, a2, a3], &[r1, r2, r3]) => GroundedInstance::ThreeI {
                branches: [Branch::new(a1, r1), Branch::new(a2, r2), Branch::new(a3, r3)],
            },
            (PatternType::TwoU, &[a1, a2], &[r1, r2]) => GroundedInstance::TwoU {
                branches: [Branch::new(a1, r1), Branch::new(a2, r2)],
            },
            (PatternType::IP, &[a1, a2], &[r1, r2, r3]) => GroundedInstance::IP {
                branches: [Branch::new(a1, r1), Branch::new(a2, r2)],
                projection: r3,
            },
            (PatternType::PI, &[a1, a2], &[r1, r2, r3]) => GroundedInstance::PI {
                anchor: a1,
                path: [r1, r2],
                branch: Branch::new(a2, r3),
            },
            (PatternType::Compare, &[e1, e2], &[relation]) => {
                let kind = self
                    .kind
                    .ok_or_else(|| PatternError::InvalidInstance("compare record without kind".into()))?;
                let values = self
                    .values
                    .as_deref()
                    .filter(|v| v.len() == 2)
                    .ok_or_else(|| PatternError::InvalidInstance("compare record needs two values".into()))?;
                let fact = |entity, text: &str| -> Result<NumericFact> {
                    kg.tails(entity, relation)
                        .into_iter()
                        .flatten()
                        .find_map(|n| match *n {
                            NodeRef::Literal(l) if kg.literal(l).text == text => Some(NumericFact { entity, literal: l }),
                            _ => None,
                        })
                        .ok_or_else(|| PatternError::InvalidInstance(format!("no literal `{text}` on `{}`", kg.entity_key(entity))))
                };
                GroundedInstance::Compare {
                    relation,
                    first: fact(e1, &values[0])?,
                    second: fact(e2, &values[1])?,
                    kind,
                }
            }
            _ => return Err(arity_err()),
        };
        Ok(inst)
    }
}

/// Stable identity of an instance, insensitive to intersection/union branch order.
pub fn canonical_hash(kg: &KnowledgeGraph, inst: &GroundedInstance) -> String {
    let rec = InstanceRecord::shape(kg, &inst.canonical());
    let key = HashKey {
        pattern: rec.pattern,
        anchors: &rec.anchors,
        relations: &rec.relations,
        kind: rec.kind,
        values: &rec.values,
    };
    let json = serde_json::to_vec(&key).expect("hash key serializes");
    let digest = Sha256::digest(&json);
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}
