use std::collections::{BTreeSet, HashSet};

use super::{entity_nodes, Branch, CompareKind, GroundedInstance, NumericFact, PatternError, Result};
use crate::kg::{EntityId, KnowledgeGraph, NodeRef, RelationId};

/// Gold answer of an instance: a node set, or a compare verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldAnswer {
    Entities(BTreeSet<NodeRef>),
    Verdict(String),
}

impl GoldAnswer {
    pub fn is_empty(&self) -> bool {
        match self {
            GoldAnswer::Entities(s) => s.is_empty(),
            GoldAnswer::Verdict(v) => v.is_empty(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GoldAnswer::Entities(s) => s.len(),
            GoldAnswer::Verdict(_) => 1,
        }
    }

    /// Answer labels in node order; repeated labels collapse to the first.
    pub fn labels(&self, kg: &KnowledgeGraph) -> Vec<String> {
        match self {
            GoldAnswer::Entities(set) => {
                let mut seen = HashSet::new();
                set.iter()
                    .map(|&n| kg.node_label(n))
                    .filter(|l| seen.insert(*l))
                    .map(str::to_string)
                    .collect()
            }
            GoldAnswer::Verdict(v) => vec![v.clone()],
        }
    }
}

/// Tails of every entity in `from` under `relation`.
pub fn project(kg: &KnowledgeGraph, from: impl IntoIterator<Item = EntityId>, relation: RelationId) -> BTreeSet<NodeRef> {
    let mut out = BTreeSet::new();
    for e in from {
        if let Some(tails) = kg.tails(e, relation) {
            out.extend(tails.iter().copied());
        }
    }
    out
}

pub(crate) fn branch_set(kg: &KnowledgeGraph, b: Branch) -> BTreeSet<NodeRef> {
    project(kg, [b.anchor], b.relation)
}

pub(crate) fn path_set(kg: &KnowledgeGraph, anchor: EntityId, relations: &[RelationId]) -> BTreeSet<NodeRef> {
    let mut current = BTreeSet::from([NodeRef::Entity(anchor)]);
    for &r in relations {
        current = project(kg, entity_nodes(&current).collect::<Vec<_>>(), r);
    }
    current
}

/// Compares two numeric values. `same` yields "Yes"/"No"; `lesser`/`greater`
/// yield the label of the entity holding the extreme value.
pub fn compare_verdict(v1: f64, v2: f64, kind: CompareKind, label1: &str, label2: &str) -> Result<String> {
    match kind {
        CompareKind::Same => Ok(if v1 == v2 { "Yes" } else { "No" }.to_string()),
        _ if v1 == v2 => Err(PatternError::Tie(kind)),
        CompareKind::Lesser => Ok(if v1 < v2 { label1 } else { label2 }.to_string()),
        CompareKind::Greater => Ok(if v1 > v2 { label1 } else { label2 }.to_string()),
    }
}

fn check_ids(kg: &KnowledgeGraph, inst: &GroundedInstance) -> Result<()> {
    for e in inst.anchors() {
        if !kg.contains_entity(e) {
            return Err(PatternError::InvalidInstance(format!("unregistered entity #{}", e.0)));
        }
    }
    for r in inst.relations() {
        if !kg.contains_relation(r) {
            return Err(PatternError::InvalidInstance(format!("unregistered relation #{}", r.0)));
        }
    }
    Ok(())
}

fn numeric_value(kg: &KnowledgeGraph, fact: NumericFact, relation: RelationId) -> Result<f64> {
    let stored = kg
        .tails(fact.entity, relation)
        .is_some_and(|t| t.contains(&NodeRef::Literal(fact.literal)));
    if !stored {
        return Err(PatternError::InvalidInstance(format!(
            "`{}` has no such `{}` value",
            kg.entity_label(fact.entity),
            kg.relation_label(relation)
        )));
    }
    Ok(kg.literal(fact.literal).value)
}

fn intersect(mut sets: impl Iterator<Item = BTreeSet<NodeRef>>) -> BTreeSet<NodeRef> {
    let first = sets.next().unwrap_or_default();
    sets.fold(first, |acc, s| acc.intersection(&s).copied().collect())
}

/// Exact gold answer of an instance under set semantics.
pub fn answer_set(kg: &KnowledgeGraph, inst: &GroundedInstance) -> Result<GoldAnswer> {
    check_ids(kg, inst)?;
    let set = match *inst {
        GroundedInstance::OneP { anchor, relation } => path_set(kg, anchor, &[relation]),
        GroundedInstance::TwoP { anchor, relations } => path_set(kg, anchor, &relations),
        GroundedInstance::ThreeP { anchor, relations } => path_set(kg, anchor, &relations),
        GroundedInstance::TwoI { branches } => intersect(branches.iter().map(|&b| branch_set(kg, b))),
        GroundedInstance::ThreeI { branches } => intersect(branches.iter().map(|&b| branch_set(kg, b))),
        GroundedInstance::TwoU { branches } => {
            let mut s = branch_set(kg, branches[0]);
            s.extend(branch_set(kg, branches[1]));
            s
        }
        GroundedInstance::IP { branches, projection } => {
            let inter = intersect(branches.iter().map(|&b| branch_set(kg, b)));
            project(kg, entity_nodes(&inter).collect::<Vec<_>>(), projection)
        }
        GroundedInstance::PI { anchor, path, branch } => {
            let hop = path_set(kg, anchor, &path);
            hop.intersection(&branch_set(kg, branch)).copied().collect()
        }
        GroundedInstance::Compare {
            relation,
            first,
            second,
            kind,
        } => {
            let v1 = numeric_value(kg, first, relation)?;
            let v2 = numeric_value(kg, second, relation)?;
            let verdict = compare_verdict(
                v1,
                v2,
                kind,
                kg.entity_label(first.entity),
                kg.entity_label(second.entity),
            )?;
            return Ok(GoldAnswer::Verdict(verdict));
        }
    };
    Ok(GoldAnswer::Entities(set))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn borders() -> KnowledgeGraph {
        let mut tsv = String::new();
        for c in ["Mongolia", "Kazakhstan", "North Korea", "Finland", "Norway"] {
            tsv.push_str(&format!("Russia\tshares border with\t{c}\n"));
        }
        for c in ["Mongolia", "Kazakhstan", "North Korea", "India", "Nepal"] {
            tsv.push_str(&format!("China\tshares border with\t{c}\n"));
        }
        tsv.push_str("Mongolia\tcapital\tUlaanbaatar\nKazakhstan\tcapital\tAstana\n");
        KnowledgeGraph::from_tsv(&tsv).unwrap()
    }

    fn b(kg: &KnowledgeGraph, a: &str, r: &str) -> Branch {
        Branch::new(kg.entity(a).unwrap(), kg.relation(r).unwrap())
    }

    #[test]
    fn russia_china_intersection() {
        let kg = borders();
        let inst = GroundedInstance::TwoI {
            branches: [b(&kg, "Russia", "shares border with"), b(&kg, "China", "shares border with")],
        };
        let mut got = answer_set(&kg, &inst).unwrap().labels(&kg);
        got.sort();
        assert_eq!(got, ["Kazakhstan", "Mongolia", "North Korea"]);
    }

    #[test]
    fn ip_projects_the_intersection() {
        let kg = borders();
        let inst = GroundedInstance::IP {
            branches: [b(&kg, "Russia", "shares border with"), b(&kg, "China", "shares border with")],
            projection: kg.relation("capital").unwrap(),
        };
        let mut got = answer_set(&kg, &inst).unwrap().labels(&kg);
        got.sort();
        assert_eq!(got, ["Astana", "Ulaanbaatar"]);
    }

    #[test]
    fn union_is_idempotent() {
        let kg = borders();
        let br = b(&kg, "Russia", "shares border with");
        let union = answer_set(&kg, &GroundedInstance::TwoU { branches: [br, br] }).unwrap();
        let single = answer_set(
            &kg,
            &GroundedInstance::OneP {
                anchor: br.anchor,
                relation: br.relation,
            },
        )
        .unwrap();
        assert_eq!(union, single);
    }

    #[test]
    fn verdicts() {
        assert_eq!(compare_verdict(20.0, 18.0, CompareKind::Same, "a", "b").unwrap(), "No");
        assert_eq!(
            compare_verdict(94660000.0, 424931.0, CompareKind::Lesser, "Vietnam", "Halifax").unwrap(),
            "Halifax"
        );
        assert_eq!(
            compare_verdict(94660000.0, 424931.0, CompareKind::Greater, "Vietnam", "Halifax").unwrap(),
            "Vietnam"
        );
        assert_eq!(compare_verdict(7.5, 7.5, CompareKind::Same, "a", "b").unwrap(), "Yes");
        assert!(matches!(
            compare_verdict(3.0, 3.0, CompareKind::Lesser, "a", "b"),
            Err(PatternError::Tie(CompareKind::Lesser))
        ));
    }

    #[test]
    fn compare_instance_checks_stored_values() {
        let kg = KnowledgeGraph::from_tsv(
            "Vietnam\tpopulation\t94660000\tL\nHalifax\tpopulation\t424931\tL\n",
        )
        .unwrap();
        let pop = kg.relation("population").unwrap();
        let fact = |e: &str| {
            let e = kg.entity(e).unwrap();
            let lit = kg.neighbors(e, pop).unwrap().iter().next().unwrap();
            match lit {
                NodeRef::Literal(l) => NumericFact { entity: e, literal: *l },
                _ => unreachable!(),
            }
        };
        let inst = GroundedInstance::Compare {
            relation: pop,
            first: fact("Vietnam"),
            second: fact("Halifax"),
            kind: CompareKind::Lesser,
        };
        assert_eq!(answer_set(&kg, &inst).unwrap(), GoldAnswer::Verdict("Halifax".into()));
        let swapped = GroundedInstance::Compare {
            relation: pop,
            first: NumericFact {
                entity: fact("Vietnam").entity,
                literal: fact("Halifax").literal,
            },
            second: fact("Halifax"),
            kind: CompareKind::Lesser,
        };
        assert!(matches!(answer_set(&kg, &swapped), Err(PatternError::InvalidInstance(_))));
    }

    #[test]
    fn unregistered_ids_rejected() {
        let kg = borders();
        let inst = GroundedInstance::OneP {
            anchor: EntityId(999),
            relation: RelationId(0),
        };
        assert!(matches!(answer_set(&kg, &inst), Err(PatternError::InvalidInstance(_))));
    }
}
