//! Seeded grounding of patterns against a graph, plus exhaustive enumeration.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::answer::{branch_set, path_set};
use super::{
    answer_set, canonical_hash, entity_nodes, Branch, CompareKind, GoldAnswer, GroundedInstance, NumericFact,
    PatternError, PatternType, Result,
};
use crate::kg::{EntityId, KnowledgeGraph, LiteralId, NodeRef, RelationId};

pub const DEFAULT_MAX_ANSWERS: usize = 100;

/// Consecutive rejected draws after which sampling gives up on a pattern.
const MAX_MISSES: usize = 20_000;
/// Exhaustive top-up is only attempted on graphs with at most this many forward keys.
const ENUMERATION_KEY_LIMIT: usize = 3_000;

#[derive(Debug, Clone)]
pub struct GroundConfig {
    pub budget: usize,
    pub seed: u64,
    /// Largest branch or hop answer set an instance may have.
    pub max_answers: usize,
    /// Canonical instance hashes that must not be emitted.
    pub exclude: HashSet<String>,
}

impl GroundConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            max_answers: DEFAULT_MAX_ANSWERS,
            exclude: HashSet::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grounding {
    pub pattern: PatternType,
    pub instances: Vec<GroundedInstance>,
    pub requested: usize,
    /// Candidates skipped because their hash was excluded.
    pub excluded: usize,
}

impl Grounding {
    pub fn shortfall(&self) -> usize {
        self.requested.saturating_sub(self.instances.len())
    }
}

/// Draws up to `budget` distinct valid instances of `pattern`.
pub fn ground(kg: &KnowledgeGraph, pattern: PatternType, config: &GroundConfig) -> Result<Grounding> {
    if config.budget == 0 {
        return Err(PatternError::ZeroBudget);
    }
    let pool = Pool::new(kg);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(pattern as u64);

    let mut seen: HashSet<GroundedInstance> = HashSet::new();
    let mut rejected_hashes: HashSet<GroundedInstance> = HashSet::new();
    let mut out = Vec::with_capacity(config.budget);
    let mut misses = 0;
    let mut accept = |inst: GroundedInstance, out: &mut Vec<GroundedInstance>| -> bool {
        let key = inst.canonical();
        if seen.contains(&key) || rejected_hashes.contains(&key) {
            return false;
        }
        if valid_answer(kg, &inst, config.max_answers).is_none() {
            return false;
        }
        if !config.exclude.is_empty() && config.exclude.contains(&canonical_hash(kg, &inst)) {
            rejected_hashes.insert(key);
            return false;
        }
        seen.insert(key);
        out.push(inst);
        true
    };

    while out.len() < config.budget && misses < MAX_MISSES {
        let hit = match pool.sample(kg, pattern, &mut rng) {
            Some(inst) => accept(inst, &mut out),
            None => false,
        };
        if hit {
            misses = 0;
        } else {
            misses += 1;
        }
    }

    if out.len() < config.budget && kg.forward_len() <= ENUMERATION_KEY_LIMIT {
        let mut rest = enumerate_instances(kg, pattern, config.max_answers);
        rest.shuffle(&mut rng);
        for inst in rest {
            if out.len() == config.budget {
                break;
            }
            accept(inst, &mut out);
        }
    }

    if out.len() < config.budget {
        tracing::warn!(
            pattern = pattern.name(),
            requested = config.budget,
            found = out.len(),
            "pattern grounding shortfall"
        );
    }
    Ok(Grounding {
        pattern,
        instances: out,
        requested: config.budget,
        excluded: rejected_hashes.len(),
    })
}

fn within(set: &BTreeSet<NodeRef>, cap: usize) -> bool {
    !set.is_empty() && set.len() <= cap
}

fn has_entity(set: &BTreeSet<NodeRef>) -> bool {
    set.iter().any(|n| n.entity().is_some())
}

/// Gold answer of `inst` if it satisfies every validity constraint.
pub(crate) fn valid_answer(kg: &KnowledgeGraph, inst: &GroundedInstance, cap: usize) -> Option<GoldAnswer> {
    let ok = match *inst {
        GroundedInstance::OneP { anchor, relation } => within(&path_set(kg, anchor, &[relation]), cap),
        GroundedInstance::TwoP { anchor, relations } => hops_ok(kg, anchor, &relations, cap),
        GroundedInstance::ThreeP { anchor, relations } => hops_ok(kg, anchor, &relations, cap),
        GroundedInstance::TwoI { branches } | GroundedInstance::TwoU { branches } => {
            branches[0] != branches[1] && branches.iter().all(|&b| within(&branch_set(kg, b), cap))
        }
        GroundedInstance::ThreeI { branches } => {
            branches[0] != branches[1]
                && branches[0] != branches[2]
                && branches[1] != branches[2]
                && branches.iter().all(|&b| within(&branch_set(kg, b), cap))
        }
        GroundedInstance::IP { branches, .. } => {
            branches[0] != branches[1] && branches.iter().all(|&b| within(&branch_set(kg, b), cap))
        }
        GroundedInstance::PI { anchor, path, branch } => {
            hops_ok(kg, anchor, &path, cap) && within(&branch_set(kg, branch), cap)
        }
        GroundedInstance::Compare {
            relation,
            first,
            second,
            ..
        } => {
            first.entity != second.entity
                && kg.entity_label(first.entity) != kg.entity_label(second.entity)
                && unique_literal(kg, first.entity, relation) == Some(first.literal)
                && unique_literal(kg, second.entity, relation) == Some(second.literal)
        }
    };
    if !ok {
        return None;
    }
    if let GroundedInstance::IP { branches, .. } = *inst {
        let a = branch_set(kg, branches[0]);
        let inter: BTreeSet<NodeRef> = a.intersection(&branch_set(kg, branches[1])).copied().collect();
        if !has_entity(&inter) {
            return None;
        }
    }
    let gold = answer_set(kg, inst).ok()?;
    match &gold {
        GoldAnswer::Entities(s) if s.is_empty() || s.len() > cap.saturating_mul(2) => None,
        _ => Some(gold),
    }
}

/// Every hop set is non-empty and within the cap; intermediate hops hold entities.
fn hops_ok(kg: &KnowledgeGraph, anchor: EntityId, relations: &[RelationId], cap: usize) -> bool {
    let mut current = BTreeSet::from([NodeRef::Entity(anchor)]);
    for (i, &r) in relations.iter().enumerate() {
        let from: Vec<EntityId> = entity_nodes(&current).collect();
        current = super::project(kg, from, r);
        if !within(&current, cap) {
            return false;
        }
        if i + 1 < relations.len() && !has_entity(&current) {
            return false;
        }
    }
    true
}

/// The single literal tail of `(entity, relation)`, if there is exactly one.
fn unique_literal(kg: &KnowledgeGraph, entity: EntityId, relation: RelationId) -> Option<LiteralId> {
    let tails = kg.tails(entity, relation)?;
    let mut lits = tails.iter().filter_map(|n| match n {
        NodeRef::Literal(l) => Some(*l),
        NodeRef::Entity(_) => None,
    });
    let first = lits.next()?;
    lits.next().is_none().then_some(first)
}

/// Candidate lists shared by the samplers, all in ascending id order.
struct Pool {
    keys: Vec<(EntityId, RelationId)>,
    entity_keys: Vec<(EntityId, RelationId)>,
    targets: [Vec<EntityId>; 3],
    numeric: Vec<(RelationId, Vec<NumericFact>)>,
}

impl Pool {
    fn new(kg: &KnowledgeGraph) -> Self {
        let keys: Vec<_> = kg.forward_keys().collect();
        let entity_keys = keys
            .iter()
            .copied()
            .filter(|&(h, r)| kg.tails(h, r).is_some_and(has_entity))
            .collect();
        let mut targets: [Vec<EntityId>; 3] = Default::default();
        for e in kg.entity_ids() {
            let n = kg.in_edges(e).len();
            for (i, t) in targets.iter_mut().enumerate() {
                if n > i {
                    t.push(e);
                }
            }
        }
        let numeric = kg
            .numeric_relations()
            .filter_map(|r| {
                let mut facts: Vec<NumericFact> = kg
                    .numeric_pairs(r)
                    .ok()?
                    .iter()
                    .filter_map(|&(e, _)| unique_literal(kg, e, r).map(|literal| NumericFact { entity: e, literal }))
                    .collect();
                facts.dedup();
                (facts.len() >= 2).then_some((r, facts))
            })
            .collect();
        Self {
            keys,
            entity_keys,
            targets,
            numeric,
        }
    }

    fn sample(&self, kg: &KnowledgeGraph, pattern: PatternType, rng: &mut ChaCha8Rng) -> Option<GroundedInstance> {
        match pattern {
            PatternType::OneP => {
                let &(anchor, relation) = self.keys.choose(rng)?;
                Some(GroundedInstance::OneP { anchor, relation })
            }
            PatternType::TwoP => {
                let (anchor, r) = self.walk(kg, 2, rng)?;
                Some(GroundedInstance::TwoP {
                    anchor,
                    relations: [r[0], r[1]],
                })
            }
            PatternType::ThreeP => {
                let (anchor, r) = self.walk(kg, 3, rng)?;
                Some(GroundedInstance::ThreeP {
                    anchor,
                    relations: [r[0], r[1], r[2]],
                })
            }
            PatternType::TwoI => {
                let b = self.converging(kg, 2, rng)?;
                Some(GroundedInstance::TwoI { branches: [b[0], b[1]] })
            }
            PatternType::ThreeI => {
                let b = self.converging(kg, 3, rng)?;
                Some(GroundedInstance::ThreeI {
                    branches: [b[0], b[1], b[2]],
                })
            }
            PatternType::TwoU => {
                let &(a1, r1) = self.keys.choose(rng)?;
                let &(a2, r2) = self.keys.choose(rng)?;
                Some(GroundedInstance::TwoU {
                    branches: [Branch::new(a1, r1), Branch::new(a2, r2)],
                })
            }
            PatternType::IP => {
                let b = self.converging(kg, 2, rng)?;
                let branches = [b[0], b[1]];
                let inter: Vec<EntityId> = {
                    let s = branch_set(kg, branches[0]);
                    let t = branch_set(kg, branches[1]);
                    entity_nodes(&s.intersection(&t).copied().collect()).collect()
                };
                let &mid = inter.choose(rng)?;
                let &projection = kg.out_relations(mid).choose(rng)?;
                Some(GroundedInstance::IP { branches, projection })
            }
            PatternType::PI => {
                let &target = self.targets[0].choose(rng)?;
                let &(r2, mid) = kg.in_edges(target).choose(rng)?;
                let &(r1, anchor) = kg.in_edges(mid).choose(rng)?;
                let &(r3, a2) = kg.in_edges(target).choose(rng)?;
                Some(GroundedInstance::PI {
                    anchor,
                    path: [r1, r2],
                    branch: Branch::new(a2, r3),
                })
            }
            PatternType::Compare => {
                let (relation, facts) = self.numeric.choose(rng)?;
                let i = rng.gen_range(0..facts.len());
                let mut j = rng.gen_range(0..facts.len() - 1);
                if j >= i {
                    j += 1;
                }
                let kind = *CompareKind::ALL.choose(rng)?;
                let inst = GroundedInstance::Compare {
                    relation: *relation,
                    first: facts[i],
                    second: facts[j],
                    kind,
                };
                match answer_set(kg, &inst) {
                    Ok(_) => Some(inst),
                    Err(_) => None,
                }
            }
        }
    }

    /// Random relation path of `hops` relations starting at an entity-tailed key.
    fn walk(&self, kg: &KnowledgeGraph, hops: usize, rng: &mut ChaCha8Rng) -> Option<(EntityId, Vec<RelationId>)> {
        let &(anchor, r1) = self.entity_keys.choose(rng)?;
        let mut relations = vec![r1];
        let mut current = anchor;
        let mut rel = r1;
        for _ in 1..hops {
            let next: Vec<EntityId> = kg.tails(current, rel)?.iter().filter_map(|n| n.entity()).collect();
            current = *next.choose(rng)?;
            rel = *kg.out_relations(current).choose(rng)?;
            relations.push(rel);
        }
        Some((anchor, relations))
    }

    /// `n` distinct branches sharing a random common tail entity.
    fn converging(&self, kg: &KnowledgeGraph, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Branch>> {
        let &target = self.targets[n - 1].choose(rng)?;
        let edges = kg.in_edges(target);
        let picked = rand::seq::index::sample(rng, edges.len(), n);
        Some(
            picked
                .iter()
                .map(|i| Branch::new(edges[i].1, edges[i].0))
                .collect(),
        )
    }
}

/// Every valid instance of `pattern`, deduplicated up to branch order, ascending.
///
/// Intended for small graphs; the cost grows with the square of the key count
/// for `2u`.
pub fn enumerate_instances(kg: &KnowledgeGraph, pattern: PatternType, cap: usize) -> Vec<GroundedInstance> {
    let pool = Pool::new(kg);
    let mut found: BTreeSet<GroundedInstance> = BTreeSet::new();
    let mut push = |inst: GroundedInstance| {
        if valid_answer(kg, &inst, cap).is_some() {
            found.insert(inst.canonical());
        }
    };
    let next_relations = |set: &BTreeSet<NodeRef>| -> BTreeSet<RelationId> {
        entity_nodes(set)
            .flat_map(|e| kg.out_relations(e).iter().copied())
            .collect()
    };
    match pattern {
        PatternType::OneP => {
            for &(anchor, relation) in &pool.keys {
                push(GroundedInstance::OneP { anchor, relation });
            }
        }
        PatternType::TwoP | PatternType::ThreeP => {
            for &(anchor, r1) in &pool.entity_keys {
                let s1 = path_set(kg, anchor, &[r1]);
                for r2 in next_relations(&s1) {
                    if pattern == PatternType::TwoP {
                        push(GroundedInstance::TwoP {
                            anchor,
                            relations: [r1, r2],
                        });
                        continue;
                    }
                    let s2 = path_set(kg, anchor, &[r1, r2]);
                    for r3 in next_relations(&s2) {
                        push(GroundedInstance::ThreeP {
                            anchor,
                            relations: [r1, r2, r3],
                        });
                    }
                }
            }
        }
        PatternType::TwoI | PatternType::IP => {
            for e in kg.entity_ids() {
                let edges = kg.in_edges(e);
                for i in 0..edges.len() {
                    for j in i + 1..edges.len() {
                        let branches = [Branch::new(edges[i].1, edges[i].0), Branch::new(edges[j].1, edges[j].0)];
                        if pattern == PatternType::TwoI {
                            push(GroundedInstance::TwoI { branches });
                            continue;
                        }
                        let inter: BTreeSet<NodeRef> = branch_set(kg, branches[0])
                            .intersection(&branch_set(kg, branches[1]))
                            .copied()
                            .collect();
                        for projection in next_relations(&inter) {
                            push(GroundedInstance::IP { branches, projection });
                        }
                    }
                }
            }
        }
        PatternType::ThreeI => {
            for e in kg.entity_ids() {
                let edges = kg.in_edges(e);
                let b = |k: usize| Branch::new(edges[k].1, edges[k].0);
                for i in 0..edges.len() {
                    for j in i + 1..edges.len() {
                        for k in j + 1..edges.len() {
                            push(GroundedInstance::ThreeI {
                                branches: [b(i), b(j), b(k)],
                            });
                        }
                    }
                }
            }
        }
        PatternType::TwoU => {
            for i in 0..pool.keys.len() {
                for j in i + 1..pool.keys.len() {
                    let (a1, r1) = pool.keys[i];
                    let (a2, r2) = pool.keys[j];
                    push(GroundedInstance::TwoU {
                        branches: [Branch::new(a1, r1), Branch::new(a2, r2)],
                    });
                }
            }
        }
        PatternType::PI => {
            for target in kg.entity_ids() {
                for &(r2, mid) in kg.in_edges(target) {
                    for &(r1, anchor) in kg.in_edges(mid) {
                        for &(r3, a2) in kg.in_edges(target) {
                            push(GroundedInstance::PI {
                                anchor,
                                path: [r1, r2],
                                branch: Branch::new(a2, r3),
                            });
                        }
                    }
                }
            }
        }
        PatternType::Compare => {
            for (relation, facts) in &pool.numeric {
                for (i, &first) in facts.iter().enumerate() {
                    for (j, &second) in facts.iter().enumerate() {
                        if i == j {
                            continue;
                        }
                        for kind in CompareKind::ALL {
                            let inst = GroundedInstance::Compare {
                                relation: *relation,
                                first,
                                second,
                                kind,
                            };
                            if answer_set(kg, &inst).is_ok() {
                                push(inst);
                            }
                        }
                    }
                }
            }
        }
    }
    found.into_iter().collect()
}
