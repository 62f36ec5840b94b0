//! Immutable triple store with forward, inverse and numeric-tail indices.
//!
//! Files are tab separated `head<TAB>relation<TAB>tail[<TAB>L]`. The optional
//! fourth column `L` marks the tail as a numeric literal; without it the tail
//! is always an entity, even when it looks like a number.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("empty knowledge graph")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("entity `{id}` has conflicting labels `{first}` and `{second}`")]
    ConflictingLabel {
        id: String,
        first: String,
        second: String,
    },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, KgError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LiteralId(pub u32);

/// Tail of a triple: an entity, or an interned numeric literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Entity(EntityId),
    Literal(LiteralId),
}

impl NodeRef {
    pub fn entity(self) -> Option<EntityId> {
        match self {
            NodeRef::Entity(e) => Some(e),
            NodeRef::Literal(_) => None,
        }
    }
}

/// A numeric literal. `text` is the original token (units included).
#[derive(Debug, Clone, PartialEq)]
pub struct Literal {
    pub value: f64,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: NodeRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgFormat {
    Tsv,
    NTriples,
}

impl std::str::FromStr for KgFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tsv" | "tsv-triples" => Ok(KgFormat::Tsv),
            "nt" | "ntriples" | "ntriples-subset" => Ok(KgFormat::NTriples),
            other => Err(format!("unknown graph format `{other}`")),
        }
    }
}

/// Id <-> label dictionary. Ids are dense indices in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
struct Dictionary {
    ids: Vec<String>,
    labels: Vec<String>,
    by_id: HashMap<String, u32>,
}

impl Dictionary {
    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&ix) = self.by_id.get(id) {
            return ix;
        }
        let ix = self.ids.len() as u32;
        self.ids.push(id.to_string());
        self.labels.push(id.to_string());
        self.by_id.insert(id.to_string(), ix);
        ix
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entities: Dictionary,
    relations: Dictionary,
    literals: Vec<Literal>,
    triples: Vec<Triple>,
    forward: BTreeMap<(EntityId, RelationId), BTreeSet<NodeRef>>,
    inverse: BTreeMap<(EntityId, RelationId), BTreeSet<EntityId>>,
    numeric: BTreeMap<RelationId, Vec<(EntityId, f64)>>,
    out_relations: Vec<Vec<RelationId>>,
    in_edges: Vec<Vec<(RelationId, EntityId)>>,
    label_index: HashMap<String, Vec<EntityId>>,
    relation_label_index: HashMap<String, RelationId>,
}

/// Tail as written in a source file, before interning.
#[derive(Debug, Clone, PartialEq)]
pub enum RawTail {
    Entity(String),
    Literal(String),
}

/// Incremental construction; `build` freezes the graph and derives all indices.
#[derive(Debug, Default)]
pub struct KnowledgeGraphBuilder {
    entities: Dictionary,
    relations: Dictionary,
    literals: Vec<Literal>,
    literal_ix: HashMap<String, u32>,
    triples: Vec<Triple>,
    seen: std::collections::HashSet<Triple>,
    explicit_labels: HashMap<u32, String>,
}

impl KnowledgeGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a triple; duplicates are stored once. Returns false for a duplicate.
    pub fn add(&mut self, head: &str, relation: &str, tail: RawTail) -> std::result::Result<bool, String> {
        let h = EntityId(self.entities.intern(head));
        let r = RelationId(self.relations.intern(relation));
        let t = match tail {
            RawTail::Entity(t) => NodeRef::Entity(EntityId(self.entities.intern(&t))),
            RawTail::Literal(text) => {
                let ix = match self.literal_ix.get(&text) {
                    Some(&ix) => ix,
                    None => {
                        let value = parse_leading_decimal(&text)
                            .ok_or_else(|| format!("literal `{text}` has no leading decimal value"))?;
                        let ix = self.literals.len() as u32;
                        self.literals.push(Literal {
                            value,
                            text: text.clone(),
                        });
                        self.literal_ix.insert(text, ix);
                        ix
                    }
                };
                NodeRef::Literal(LiteralId(ix))
            }
        };
        let triple = Triple {
            head: h,
            relation: r,
            tail: t,
        };
        if self.seen.insert(triple) {
            self.triples.push(triple);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn entity(&mut self, head: &str, relation: &str, tail: &str) -> &mut Self {
        self.add(head, relation, RawTail::Entity(tail.to_string()))
            .expect("entity tails never fail");
        self
    }

    pub fn literal(&mut self, head: &str, relation: &str, value: &str) -> std::result::Result<&mut Self, String> {
        self.add(head, relation, RawTail::Literal(value.to_string()))?;
        Ok(self)
    }

    /// Sets a display label. Applies to entities and relations sharing the id.
    /// Ids unknown to the graph are ignored.
    pub fn label(&mut self, id: &str, label: &str) -> Result<()> {
        if let Some(&ix) = self.entities.by_id.get(id) {
            if let Some(prev) = self.explicit_labels.get(&ix) {
                if prev != label {
                    return Err(KgError::ConflictingLabel {
                        id: id.to_string(),
                        first: prev.clone(),
                        second: label.to_string(),
                    });
                }
            }
            self.explicit_labels.insert(ix, label.to_string());
            self.entities.labels[ix as usize] = label.to_string();
        }
        if let Some(&ix) = self.relations.by_id.get(id) {
            self.relations.labels[ix as usize] = label.to_string();
        }
        Ok(())
    }

    pub fn build(self) -> Result<KnowledgeGraph> {
        if self.triples.is_empty() {
            return Err(KgError::Empty);
        }
        let n = self.entities.len();
        let mut forward: BTreeMap<(EntityId, RelationId), BTreeSet<NodeRef>> = BTreeMap::new();
        let mut inverse: BTreeMap<(EntityId, RelationId), BTreeSet<EntityId>> = BTreeMap::new();
        let mut numeric: BTreeMap<RelationId, Vec<(EntityId, f64)>> = BTreeMap::new();
        let mut out_rel: Vec<BTreeSet<RelationId>> = vec![BTreeSet::new(); n];
        let mut in_edges: Vec<BTreeSet<(RelationId, EntityId)>> = vec![BTreeSet::new(); n];
        for t in &self.triples {
            forward.entry((t.head, t.relation)).or_default().insert(t.tail);
            out_rel[t.head.0 as usize].insert(t.relation);
            match t.tail {
                NodeRef::Entity(e) => {
                    inverse.entry((e, t.relation)).or_default().insert(t.head);
                    in_edges[e.0 as usize].insert((t.relation, t.head));
                }
                NodeRef::Literal(l) => {
                    numeric
                        .entry(t.relation)
                        .or_default()
                        .push((t.head, self.literals[l.0 as usize].value));
                }
            }
        }
        for pairs in numeric.values_mut() {
            pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        }
        let mut label_index: HashMap<String, Vec<EntityId>> = HashMap::new();
        for (ix, label) in self.entities.labels.iter().enumerate() {
            label_index.entry(label.clone()).or_default().push(EntityId(ix as u32));
        }
        let relation_label_index = self
            .relations
            .labels
            .iter()
            .enumerate()
            .map(|(ix, l)| (l.clone(), RelationId(ix as u32)))
            .collect();
        Ok(KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            literals: self.literals,
            triples: self.triples,
            forward,
            inverse,
            numeric,
            out_relations: out_rel.into_iter().map(|s| s.into_iter().collect()).collect(),
            in_edges: in_edges.into_iter().map(|s| s.into_iter().collect()).collect(),
            label_index,
            relation_label_index,
        })
    }
}

/// Parses the leading decimal token of a literal such as `20 years old` or `424931`.
pub fn parse_leading_decimal(text: &str) -> Option<f64> {
    let token = text.split_whitespace().next()?;
    let token = token.trim_start_matches('+').replace(',', "");
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

impl KnowledgeGraph {
    pub fn load(path: &Path, format: KgFormat) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        match format {
            KgFormat::Tsv => Self::from_tsv(&text),
            KgFormat::NTriples => Self::from_ntriples(&text),
        }
    }

    /// Loads a graph and applies a `id<TAB>label` file.
    pub fn load_with_labels(path: &Path, format: KgFormat, labels: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let label_text = fs::read_to_string(labels).map_err(|source| KgError::Io {
            path: labels.display().to_string(),
            source,
        })?;
        let mut builder = match format {
            KgFormat::Tsv => tsv_builder(&text)?,
            KgFormat::NTriples => ntriples_builder(&text)?,
        };
        for (n, line) in label_text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, label) = line.split_once('\t').ok_or_else(|| KgError::Malformed {
                line: n + 1,
                message: "label record needs `id<TAB>label`".into(),
            })?;
            builder.label(id, label.trim_end_matches('\r'))?;
        }
        builder.build()
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        tsv_builder(text)?.build()
    }

    pub fn from_ntriples(text: &str) -> Result<Self> {
        ntriples_builder(text)?.build()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn literal_count(&self) -> usize {
        self.literals.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn entity(&self, id: &str) -> Result<EntityId> {
        self.entities
            .by_id
            .get(id)
            .map(|&ix| EntityId(ix))
            .ok_or_else(|| KgError::UnknownEntity(id.to_string()))
    }

    pub fn relation(&self, id: &str) -> Result<RelationId> {
        self.relations
            .by_id
            .get(id)
            .map(|&ix| RelationId(ix))
            .ok_or_else(|| KgError::UnknownRelation(id.to_string()))
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        (e.0 as usize) < self.entities.len()
    }

    pub fn contains_relation(&self, r: RelationId) -> bool {
        (r.0 as usize) < self.relations.len()
    }

    pub fn entity_key(&self, e: EntityId) -> &str {
        &self.entities.ids[e.0 as usize]
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        &self.entities.labels[e.0 as usize]
    }

    pub fn relation_key(&self, r: RelationId) -> &str {
        &self.relations.ids[r.0 as usize]
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        &self.relations.labels[r.0 as usize]
    }

    pub fn literal(&self, l: LiteralId) -> &Literal {
        &self.literals[l.0 as usize]
    }

    pub fn node_label(&self, n: NodeRef) -> &str {
        match n {
            NodeRef::Entity(e) => self.entity_label(e),
            NodeRef::Literal(l) => &self.literal(l).text,
        }
    }

    /// Entities carrying exactly this label.
    pub fn entities_by_label(&self, label: &str) -> &[EntityId] {
        self.label_index.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn relation_by_label(&self, label: &str) -> Option<RelationId> {
        self.relation_label_index.get(label).copied()
    }

    /// Tails of `(head, relation, ·)`.
    pub fn neighbors(&self, head: EntityId, relation: RelationId) -> Result<&BTreeSet<NodeRef>> {
        static EMPTY: BTreeSet<NodeRef> = BTreeSet::new();
        self.check(head, relation)?;
        Ok(self.forward.get(&(head, relation)).unwrap_or(&EMPTY))
    }

    /// Same as [`neighbors`](Self::neighbors) without the registration check.
    pub(crate) fn tails(&self, head: EntityId, relation: RelationId) -> Option<&BTreeSet<NodeRef>> {
        self.forward.get(&(head, relation))
    }

    /// Heads of `(·, relation, tail)` for an entity tail.
    pub fn inverse_neighbors(&self, tail: EntityId, relation: RelationId) -> Result<&BTreeSet<EntityId>> {
        static EMPTY: BTreeSet<EntityId> = BTreeSet::new();
        self.check(tail, relation)?;
        Ok(self.inverse.get(&(tail, relation)).unwrap_or(&EMPTY))
    }

    pub fn numeric_pairs(&self, relation: RelationId) -> Result<&[(EntityId, f64)]> {
        if !self.contains_relation(relation) {
            return Err(KgError::UnknownRelation(format!("#{}", relation.0)));
        }
        Ok(self.numeric.get(&relation).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// Relations with at least one numeric tail, ascending.
    pub fn numeric_relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.numeric.keys().copied()
    }

    /// Relations leaving `e`, ascending.
    pub fn out_relations(&self, e: EntityId) -> &[RelationId] {
        &self.out_relations[e.0 as usize]
    }

    /// Distinct `(relation, head)` pairs pointing at `e`, ascending.
    pub fn in_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_edges[e.0 as usize]
    }

    /// All populated `(head, relation)` keys of the forward index, ascending.
    pub fn forward_keys(&self) -> impl Iterator<Item = (EntityId, RelationId)> + '_ {
        self.forward.keys().copied()
    }

    pub fn forward_len(&self) -> usize {
        self.forward.len()
    }

    fn check(&self, e: EntityId, r: RelationId) -> Result<()> {
        if !self.contains_entity(e) {
            return Err(KgError::UnknownEntity(format!("#{}", e.0)));
        }
        if !self.contains_relation(r) {
            return Err(KgError::UnknownRelation(format!("#{}", r.0)));
        }
        Ok(())
    }

    /// Writes the graph back as TSV in stored triple order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(self.entity_key(t.head));
            out.push('\t');
            out.push_str(self.relation_key(t.relation));
            out.push('\t');
            match t.tail {
                NodeRef::Entity(e) => out.push_str(self.entity_key(e)),
                NodeRef::Literal(l) => {
                    out.push_str(&self.literal(l).text);
                    out.push_str("\tL");
                }
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} entities, {} relations, {} triples",
            self.entity_count(),
            self.relation_count(),
            self.triple_count()
        )
    }
}

fn tsv_builder(text: &str) -> Result<KnowledgeGraphBuilder> {
    let mut b = KnowledgeGraphBuilder::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let malformed = |message: String| KgError::Malformed { line: n + 1, message };
        let tail = match fields.as_slice() {
            [_, _, t] => RawTail::Entity(t.to_string()),
            [_, _, t, "L"] => RawTail::Literal(t.to_string()),
            [_, _, _, m] => return Err(malformed(format!("unknown tail marker `{m}`, expected `L`"))),
            _ => return Err(malformed(format!("expected 3 or 4 tab-separated fields, found {}", fields.len()))),
        };
        if fields[..3].iter().any(|f| f.is_empty()) {
            return Err(malformed("empty field".into()));
        }
        b.add(fields[0], fields[1], tail).map_err(malformed)?;
    }
    Ok(b)
}

/// Subset of N-Triples: `<h> <r> <t> .` or `<h> <r> "literal" .`; comments allowed.
fn ntriples_builder(text: &str) -> Result<KnowledgeGraphBuilder> {
    let mut b = KnowledgeGraphBuilder::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: &str| KgError::Malformed {
            line: n + 1,
            message: message.to_string(),
        };
        let body = line
            .strip_suffix('.')
            .ok_or_else(|| malformed("statement must end with `.`"))?
            .trim_end();
        let mut rest = body;
        let mut iri = || -> Result<String> {
            rest = rest.trim_start();
            let inner = rest.strip_prefix('<').ok_or_else(|| malformed("expected `<iri>`"))?;
            let end = inner.find('>').ok_or_else(|| malformed("unterminated `<iri>`"))?;
            let value = inner[..end].to_string();
            rest = &inner[end + 1..];
            Ok(value)
        };
        let head = iri()?;
        let relation = iri()?;
        let tail_src = rest.trim();
        let tail = if let Some(inner) = tail_src.strip_prefix('"') {
            let end = inner.find('"').ok_or_else(|| malformed("unterminated literal"))?;
            RawTail::Literal(inner[..end].to_string())
        } else if let Some(inner) = tail_src.strip_prefix('<') {
            let end = inner.find('>').ok_or_else(|| malformed("unterminated `<iri>`"))?;
            if !inner[end + 1..].trim().is_empty() {
                return Err(malformed("trailing tokens after object"));
            }
            RawTail::Entity(inner[..end].to_string())
        } else {
            return Err(malformed("object must be `<iri>` or a quoted literal"));
        };
        b.add(&head, &relation, tail).map_err(|m| malformed(&m))?;
    }
    Ok(b)
}
