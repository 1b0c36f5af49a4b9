//! In-memory triple store.
//!
//! Triples are loaded once, deduplicated, and indexed in both directions.
//! Every relation `r` gets a materialized inverse `r^-1`, so callers never
//! special-case traversal direction: `search_adjacent(e, "r^-1")` returns
//! the heads of triples `(h, r, e)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finder::Plan;

/// Suffix marking the inverse direction of a relation label.
pub const INVERSE_SUFFIX: &str = "^-1";

/// Returns the label for traversing `relation` in the opposite direction.
pub fn inverse_relation(relation: &str) -> String {
    match relation.strip_suffix(INVERSE_SUFFIX) {
        Some(base) => base.to_string(),
        None => format!("{relation}{INVERSE_SUFFIX}"),
    }
}

pub fn is_inverse(relation: &str) -> bool {
    relation.ends_with(INVERSE_SUFFIX)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    /// The other endpoint when `entity` is one of them.
    pub fn other(&self, entity: &str) -> Option<&str> {
        if self.head == entity {
            Some(&self.tail)
        } else if self.tail == entity {
            Some(&self.head)
        } else {
            None
        }
    }
}

/// Input syntax accepted by [`TripleStore::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleFormat {
    Tsv,
    NTriples,
}

impl std::str::FromStr for TripleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Self::Tsv),
            "ntriples" | "nt" => Ok(Self::NTriples),
            other => Err(Error::Config(format!("unknown triple format `{other}`"))),
        }
    }
}

/// Immutable, indexed set of triples.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    triples: BTreeSet<Triple>,
    forward: BTreeMap<(String, String), Vec<String>>,
    reverse: BTreeMap<(String, String), Vec<String>>,
    relations_of: BTreeMap<String, Vec<String>>,
    labels: BTreeMap<String, String>,
}

impl TripleStore {
    /// Builds a store from any triple iterator. Duplicates collapse.
    /// An empty input yields an empty store; use [`TripleStore::load`] for
    /// the file-backed path that rejects empty graphs.
    pub fn from_triples<I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = Triple>,
    {
        let mut set = BTreeSet::new();
        for t in triples {
            validate_triple(&t).map_err(|message| Error::Parse { line: 0, message })?;
            set.insert(t);
        }
        Ok(Self::index(set))
    }

    fn index(triples: BTreeSet<Triple>) -> Self {
        let mut forward: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
        let mut reverse: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
        let mut relations: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        // BTreeSet iteration is sorted by (head, relation, tail), so forward
        // lists come out sorted; reverse lists are sorted afterwards.
        for t in &triples {
            forward
                .entry((t.head.clone(), t.relation.clone()))
                .or_default()
                .push(t.tail.clone());
            reverse
                .entry((t.tail.clone(), t.relation.clone()))
                .or_default()
                .push(t.head.clone());
            relations.entry(t.head.clone()).or_default().insert(t.relation.clone());
            relations
                .entry(t.tail.clone())
                .or_default()
                .insert(inverse_relation(&t.relation));
        }
        for heads in reverse.values_mut() {
            heads.sort();
            heads.dedup();
        }
        Self {
            triples,
            forward,
            reverse,
            relations_of: relations
                .into_iter()
                .map(|(e, rs)| (e, rs.into_iter().collect()))
                .collect(),
            labels: BTreeMap::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>, format: TripleFormat) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, format)
    }

    pub fn parse(text: &str, format: TripleFormat) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let parsed = match format {
                TripleFormat::Tsv => parse_tsv_line(raw),
                TripleFormat::NTriples => parse_ntriples_line(raw),
            };
            match parsed {
                Ok(Some(t)) => {
                    validate_triple(&t).map_err(|message| Error::Parse { line, message })?;
                    set.insert(t);
                }
                Ok(None) => {}
                Err(message) => return Err(Error::Parse { line, message }),
            }
        }
        if set.is_empty() {
            return Err(Error::EmptyGraph);
        }
        Ok(Self::index(set))
    }

    /// Attaches `entity-id TAB label` side data.
    pub fn with_labels_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut labels = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let (id, label) = raw.split_once('\t').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected `entity-id<TAB>label`".into(),
            })?;
            if id.is_empty() || label.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "empty entity id or label".into(),
                });
            }
            labels.insert(id.to_string(), label.to_string());
        }
        Ok(self.with_labels(labels))
    }

    pub fn with_labels(mut self, labels: BTreeMap<String, String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    /// Forward plus inverse index entries, one per stored direction.
    pub fn directed_entry_count(&self) -> usize {
        let f: usize = self.forward.values().map(Vec::len).sum();
        let r: usize = self.reverse.values().map(Vec::len).sum();
        f + r
    }

    /// Rebuilds the triple set from the forward index alone.
    pub fn forward_triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.forward
            .iter()
            .flat_map(|((h, r), tails)| tails.iter().map(move |t| Triple::new(h.clone(), r.clone(), t.clone())))
    }

    pub fn has_entity(&self, entity: &str) -> bool {
        self.relations_of.contains_key(entity)
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.relations_of.keys().map(String::as_str)
    }

    /// Sorted relation labels leaving `entity`, inverse-marked labels included.
    pub fn relations_of(&self, entity: &str) -> &[String] {
        self.relations_of.get(entity).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every relation label in the store, inverse-marked labels included.
    pub fn relation_vocabulary(&self) -> BTreeSet<String> {
        self.relations_of.values().flatten().cloned().collect()
    }

    pub fn label(&self, entity: &str) -> Option<&str> {
        self.labels.get(entity).map(String::as_str)
    }

    pub fn labels(&self) -> &BTreeMap<String, String> {
        &self.labels
    }

    /// Label when present, else the id itself.
    pub fn display_name<'a>(&'a self, entity: &'a str) -> &'a str {
        self.label(entity).unwrap_or(entity)
    }

    /// Entities `t` with `(entity, relation, t)` stored; heads when the
    /// relation carries the inverse marker.
    pub fn search_adjacent(&self, entity: &str, relation: &str) -> &[String] {
        let hit = match relation.strip_suffix(INVERSE_SUFFIX) {
            Some(base) => self.reverse.get(&(entity.to_string(), base.to_string())),
            None => self.forward.get(&(entity.to_string(), relation.to_string())),
        };
        hit.map(Vec::as_slice).unwrap_or(&[])
    }

    /// The stored triple behind one directed step.
    pub fn canonical_triple(source: &str, relation: &str, target: &str) -> Triple {
        match relation.strip_suffix(INVERSE_SUFFIX) {
            Some(base) => Triple::new(target, base, source),
            None => Triple::new(source, relation, target),
        }
    }

    /// Stored triples with `entity` as head or tail, sorted.
    pub fn incident_triples(&self, entity: &str) -> Vec<Triple> {
        let mut out = BTreeSet::new();
        for rel in self.relations_of(entity) {
            for other in self.search_adjacent(entity, rel) {
                out.insert(Self::canonical_triple(entity, rel, other));
            }
        }
        out.into_iter().collect()
    }

    pub fn step<S: AsRef<str>>(&self, from: &BTreeSet<String>, relation: S) -> BTreeSet<String> {
        let relation = relation.as_ref();
        from.iter()
            .flat_map(|e| self.search_adjacent(e, relation).iter().cloned())
            .collect()
    }

    /// Entities reachable from `start` by following `relations` in order.
    pub fn execute_plan<S: AsRef<str>>(&self, start: &BTreeSet<String>, relations: &[S]) -> BTreeSet<String> {
        let mut current = start.clone();
        for rel in relations {
            if current.is_empty() {
                break;
            }
            current = self.step(&current, rel);
        }
        current
    }

    /// All relation sequences of length `1..=max_len` with at least one walk
    /// from `start` into `targets`. Ordered by length, then lexicographically.
    pub fn enumerate_plans(&self, start: &BTreeSet<String>, targets: &BTreeSet<String>, max_len: usize) -> Vec<Plan> {
        let mut found: Vec<Vec<String>> = Vec::new();
        let mut prefix = Vec::new();
        self.extend_plans(start, targets, max_len, &mut prefix, &mut found);
        found.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        found.dedup();
        found.into_iter().map(|r| Plan::new(r, 1.0)).collect()
    }

    fn extend_plans(
        &self,
        reached: &BTreeSet<String>,
        targets: &BTreeSet<String>,
        max_len: usize,
        prefix: &mut Vec<String>,
        found: &mut Vec<Vec<String>>,
    ) {
        if prefix.len() == max_len {
            return;
        }
        let next: BTreeSet<&String> = reached.iter().flat_map(|e| self.relations_of(e)).collect();
        for rel in next {
            let reached_next = self.step(reached, rel);
            if reached_next.is_empty() {
                continue;
            }
            prefix.push(rel.clone());
            if !reached_next.is_disjoint(targets) {
                found.push(prefix.clone());
            }
            self.extend_plans(&reached_next, targets, max_len, prefix, found);
            prefix.pop();
        }
    }

    /// Entity ids a gold answer string refers to: the id itself when stored,
    /// plus every entity whose label matches case-insensitively.
    pub fn resolve_answer(&self, answer: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if self.has_entity(answer) {
            out.insert(answer.to_string());
        }
        let folded = answer.to_lowercase();
        for (id, label) in &self.labels {
            if label.to_lowercase() == folded {
                out.insert(id.clone());
            }
        }
        out
    }

    /// Id match, or case-insensitive label match.
    pub fn matches_answer(&self, entity: &str, answer: &str) -> bool {
        if entity == answer {
            return true;
        }
        let folded = answer.to_lowercase();
        if entity.to_lowercase() == folded {
            return true;
        }
        self.label(entity).is_some_and(|l| l.to_lowercase() == folded)
    }

    /// Restriction of this store to `triples`, carrying labels for the
    /// entities that remain.
    pub fn restrict(&self, triples: BTreeSet<Triple>) -> Self {
        let mut out = Self::index(triples);
        out.labels = self
            .labels
            .iter()
            .filter(|(id, _)| out.has_entity(id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        out
    }
}

fn validate_triple(t: &Triple) -> std::result::Result<(), String> {
    if t.head.is_empty() {
        return Err("empty head field".into());
    }
    if t.relation.is_empty() {
        return Err("empty relation field".into());
    }
    if t.tail.is_empty() {
        return Err("empty tail field".into());
    }
    if is_inverse(&t.relation) {
        return Err(format!(
            "relation `{}` uses the reserved inverse suffix `{INVERSE_SUFFIX}`",
            t.relation
        ));
    }
    Ok(())
}

fn parse_tsv_line(raw: &str) -> std::result::Result<Option<Triple>, String> {
    let raw = raw.strip_suffix('\r').unwrap_or(raw);
    if raw.is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = raw.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    Ok(Some(Triple::new(fields[0], fields[1], fields[2])))
}

fn parse_ntriples_line(raw: &str) -> std::result::Result<Option<Triple>, String> {
    let line = raw.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let mut rest = line;
    let head = nt_term(&mut rest, false)?;
    let relation = nt_term(&mut rest, false)?;
    let tail = nt_term(&mut rest, true)?;
    if rest.trim() != "." {
        return Err("expected terminating `.`".into());
    }
    Ok(Some(Triple::new(head, relation, tail)))
}

/// Reads one N-Triples term off the front of `input`.
fn nt_term(input: &mut &str, allow_literal: bool) -> std::result::Result<String, String> {
    let s = input.trim_start();
    if let Some(body) = s.strip_prefix('<') {
        let end = body.find('>').ok_or("unterminated IRI")?;
        *input = &body[end + 1..];
        return Ok(body[..end].to_string());
    }
    if s.starts_with("_:") {
        let end = s.find(char::is_whitespace).unwrap_or(s.len());
        *input = &s[end..];
        return Ok(s[..end].to_string());
    }
    if allow_literal {
        if let Some(body) = s.strip_prefix('"') {
            let mut value = String::new();
            let mut chars = body.char_indices();
            while let Some((i, c)) = chars.next() {
                match c {
                    '\\' => match chars.next() {
                        Some((_, 'n')) => value.push('\n'),
                        Some((_, 't')) => value.push('\t'),
                        Some((_, 'r')) => value.push('\r'),
                        Some((_, other)) => value.push(other),
                        None => return Err("dangling escape in literal".into()),
                    },
                    '"' => {
                        let mut after = &body[i + 1..];
                        // language tag or datatype are dropped
                        if let Some(tag) = after.strip_prefix('@') {
                            let end = tag.find(char::is_whitespace).unwrap_or(tag.len());
                            after = &tag[end..];
                        } else if let Some(dt) = after.strip_prefix("^^<") {
                            let end = dt.find('>').ok_or("unterminated datatype IRI")?;
                            after = &dt[end + 1..];
                        }
                        *input = after;
                        return Ok(value);
                    }
                    c => value.push(c),
                }
            }
            return Err("unterminated literal".into());
        }
    }
    Err(format!(
        "unexpected term at `{}`",
        s.chars().take(20).collect::<String>()
    ))
}

/// One question with its linked topic entities and gold answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    pub topic_entities: Vec<String>,
    #[serde(default)]
    pub answers: Vec<String>,
}

impl QaExample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.topic_entities.is_empty() {
            return Err(format!("question `{}` has no topic entities", self.id));
        }
        if self.topic_entities.iter().any(String::is_empty) {
            return Err(format!("question `{}` has an empty topic entity", self.id));
        }
        Ok(())
    }

    pub fn topic_set(&self) -> BTreeSet<String> {
        self.topic_entities.iter().cloned().collect()
    }
}

/// Reads a JSONL dataset, one [`QaExample`] per non-blank line.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QaExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Vec<QaExample>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let ex: QaExample = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        ex.validate()
            .map_err(|message| Error::Parse { line: idx + 1, message })?;
        out.push(ex);
    }
    Ok(out)
}
