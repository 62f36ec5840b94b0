//! Naive query evaluator over the raw triple list. Every variable binding is
//! enumerated with nested loops; no index of the graph is consulted.

#![allow(dead_code)]

use std::collections::BTreeSet;

use lpkg_core::kg::{EntityId, KnowledgeGraph, NodeRef, RelationId, Triple};
use lpkg_core::pattern::{Branch, CompareKind, GroundedInstance};

#[derive(Debug, PartialEq, Eq)]
pub enum BruteAnswer {
    Nodes(BTreeSet<NodeRef>),
    Verdict(String),
}

fn tails_of(triples: &[Triple], h: EntityId, r: RelationId) -> Vec<NodeRef> {
    triples
        .iter()
        .filter(|t| t.head == h && t.relation == r)
        .map(|t| t.tail)
        .collect()
}

fn one(triples: &[Triple], b: Branch) -> BTreeSet<NodeRef> {
    tails_of(triples, b.anchor, b.relation).into_iter().collect()
}

/// `{ y | (a, r1, x1) ∧ (x1, r2, x2) ∧ ... ∧ (x_{n-1}, r_n, y) }`
fn chain(triples: &[Triple], a: EntityId, rels: &[RelationId]) -> BTreeSet<NodeRef> {
    let mut out = BTreeSet::new();
    fn go(triples: &[Triple], at: EntityId, rels: &[RelationId], out: &mut BTreeSet<NodeRef>) {
        for t in triples {
            if t.head != at || t.relation != rels[0] {
                continue;
            }
            if rels.len() == 1 {
                out.insert(t.tail);
            } else if let NodeRef::Entity(next) = t.tail {
                go(triples, next, &rels[1..], out);
            }
        }
    }
    go(triples, a, rels, &mut out);
    out
}

fn value_of(kg: &KnowledgeGraph, node: NodeRef) -> f64 {
    match node {
        NodeRef::Literal(l) => kg.literal(l).value,
        NodeRef::Entity(_) => panic!("compare fact must be literal"),
    }
}

pub fn brute_answer(kg: &KnowledgeGraph, inst: &GroundedInstance) -> BruteAnswer {
    let tr = kg.triples();
    let nodes = match *inst {
        GroundedInstance::OneP { anchor, relation } => chain(tr, anchor, &[relation]),
        GroundedInstance::TwoP { anchor, relations } => chain(tr, anchor, &relations),
        GroundedInstance::ThreeP { anchor, relations } => chain(tr, anchor, &relations),
        GroundedInstance::TwoI { branches } => {
            let (a, b) = (one(tr, branches[0]), one(tr, branches[1]));
            a.into_iter().filter(|x| b.contains(x)).collect()
        }
        GroundedInstance::ThreeI { branches } => {
            let (a, b, c) = (one(tr, branches[0]), one(tr, branches[1]), one(tr, branches[2]));
            a.into_iter().filter(|x| b.contains(x) && c.contains(x)).collect()
        }
        GroundedInstance::TwoU { branches } => {
            let mut a = one(tr, branches[0]);
            a.extend(one(tr, branches[1]));
            a
        }
        GroundedInstance::IP { branches, projection } => {
            let mut out = BTreeSet::new();
            for x in one(tr, branches[0]) {
                if !one(tr, branches[1]).contains(&x) {
                    continue;
                }
                if let NodeRef::Entity(e) = x {
                    out.extend(tails_of(tr, e, projection));
                }
            }
            out
        }
        GroundedInstance::PI { anchor, path, branch } => {
            let right = one(tr, branch);
            chain(tr, anchor, &path).into_iter().filter(|y| right.contains(y)).collect()
        }
        GroundedInstance::Compare {
            first, second, kind, ..
        } => {
            let v1 = value_of(kg, NodeRef::Literal(first.literal));
            let v2 = value_of(kg, NodeRef::Literal(second.literal));
            let (l1, l2) = (kg.entity_label(first.entity), kg.entity_label(second.entity));
            let verdict = match kind {
                CompareKind::Same => {
                    if v1 == v2 {
                        "Yes"
                    } else {
                        "No"
                    }
                }
                CompareKind::Lesser => {
                    if v1 < v2 {
                        l1
                    } else {
                        l2
                    }
                }
                CompareKind::Greater => {
                    if v1 > v2 {
                        l1
                    } else {
                        l2
                    }
                }
            };
            return BruteAnswer::Verdict(verdict.to_string());
        }
    };
    BruteAnswer::Nodes(nodes)
}

/// All unordered pairs of distinct `(anchor, relation)` branches whose
/// intersection is non-empty, found by scanning every pair of triples.
pub fn brute_valid_2i(kg: &KnowledgeGraph) -> BTreeSet<[Branch; 2]> {
    let tr = kg.triples();
    let mut out = BTreeSet::new();
    for t1 in tr {
        for t2 in tr {
            if t1.tail != t2.tail {
                continue;
            }
            let b1 = Branch::new(t1.head, t1.relation);
            let b2 = Branch::new(t2.head, t2.relation);
            if b1 == b2 {
                continue;
            }
            let mut pair = [b1, b2];
            pair.sort();
            out.insert(pair);
        }
    }
    out
}
