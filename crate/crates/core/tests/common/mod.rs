//! Random graphs and brute-force oracles shared by the integration and
//! acceptance tests. The oracles scan raw triple lists and never touch the
//! store's indexes.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use eperm_core::finder::Plan;
use eperm_core::kg::{QaExample, Triple, TripleStore};
use eperm_core::scoring::{ScoredCandidate, ScorerBackend};
use eperm_core::Result;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub const WORDS: &[&str] = &[
    "river", "city", "founded", "capital", "team", "player", "located", "country", "language", "born", "north", "film",
    "actor", "music", "school", "party", "leader", "border", "island", "region",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Raw triples over `n_entities` entities and `n_relations` relation labels.
/// Entity and relation names are built from [`WORDS`] so lexical scoring
/// sees real overlaps.
pub fn random_triples(rng: &mut ChaCha8Rng, n_entities: usize, n_relations: usize, n_triples: usize) -> Vec<Triple> {
    let entities: Vec<String> = (0..n_entities)
        .map(|i| format!("{} {}", WORDS[rng.random_range(0..WORDS.len())], i))
        .collect();
    let relations: Vec<String> = (0..n_relations)
        .map(|i| {
            format!(
                "{}.{}_{i}",
                WORDS[rng.random_range(0..WORDS.len())],
                WORDS[rng.random_range(0..WORDS.len())]
            )
        })
        .collect();
    (0..n_triples)
        .map(|_| {
            Triple::new(
                entities[rng.random_range(0..n_entities)].clone(),
                relations[rng.random_range(0..n_relations)].clone(),
                entities[rng.random_range(0..n_entities)].clone(),
            )
        })
        .collect()
}

pub fn random_store(
    rng: &mut ChaCha8Rng,
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
) -> (TripleStore, Vec<Triple>) {
    let raw = random_triples(rng, n_entities, n_relations, n_triples);
    let store = TripleStore::from_triples(raw.clone()).expect("non-empty random store");
    (store, raw)
}

/// Neighbours of `entity` along `relation`, by linear scan. A `^-1` suffix
/// walks triples backwards.
pub fn scan_adjacent(raw: &[Triple], entity: &str, relation: &str) -> BTreeSet<String> {
    match relation.strip_suffix("^-1") {
        Some(base) => raw
            .iter()
            .filter(|t| t.tail == entity && t.relation == base)
            .map(|t| t.head.clone())
            .collect(),
        None => raw
            .iter()
            .filter(|t| t.head == entity && t.relation == relation)
            .map(|t| t.tail.clone())
            .collect(),
    }
}

/// Every entity chain that starts in `start` and follows `relations`.
pub fn walk_chains(raw: &[Triple], start: &BTreeSet<String>, relations: &[String]) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for s in start {
        let mut chain = vec![s.clone()];
        extend(raw, relations, &mut chain, &mut out);
    }
    out
}

fn extend(raw: &[Triple], relations: &[String], chain: &mut Vec<String>, out: &mut BTreeSet<Vec<String>>) {
    let hop = chain.len() - 1;
    if hop == relations.len() {
        out.insert(chain.clone());
        return;
    }
    let from = chain.last().expect("non-empty").clone();
    for next in scan_adjacent(raw, &from, &relations[hop]) {
        chain.push(next);
        extend(raw, relations, chain, out);
        chain.pop();
    }
}

pub fn walk_endpoints(raw: &[Triple], start: &BTreeSet<String>, relations: &[String]) -> BTreeSet<String> {
    walk_chains(raw, start, relations)
        .into_iter()
        .map(|c| c.last().expect("non-empty").clone())
        .collect()
}

/// All labels a walk may use: every relation in both directions.
pub fn directed_labels(raw: &[Triple]) -> BTreeSet<String> {
    raw.iter()
        .flat_map(|t| [t.relation.clone(), format!("{}^-1", t.relation)])
        .collect()
}

/// Relation sequences of length `1..=max_len` with a walk from `start`
/// into `targets`, found by enumerating every walk.
pub fn brute_plans(
    raw: &[Triple],
    start: &BTreeSet<String>,
    targets: &BTreeSet<String>,
    max_len: usize,
) -> BTreeSet<Vec<String>> {
    let labels: Vec<String> = directed_labels(raw).into_iter().collect();
    let mut out = BTreeSet::new();
    let mut walk: Vec<(String, String)> = Vec::new();
    for s in start {
        brute_walk(raw, &labels, s, targets, max_len, &mut walk, &mut out);
    }
    out
}

fn brute_walk(
    raw: &[Triple],
    labels: &[String],
    at: &str,
    targets: &BTreeSet<String>,
    max_len: usize,
    walk: &mut Vec<(String, String)>,
    out: &mut BTreeSet<Vec<String>>,
) {
    if walk.len() == max_len {
        return;
    }
    for rel in labels {
        for next in scan_adjacent(raw, at, rel) {
            walk.push((rel.clone(), next.clone()));
            if targets.contains(&next) {
                out.insert(walk.iter().map(|(r, _)| r.clone()).collect());
            }
            brute_walk(raw, labels, &next, targets, max_len, walk, out);
            walk.pop();
        }
    }
}

/// A plan read off a random walk from `start`, so it grounds at least once.
pub fn random_walk_plan(rng: &mut ChaCha8Rng, raw: &[Triple], start: &str, len: usize) -> Vec<String> {
    let labels: Vec<String> = directed_labels(raw).into_iter().collect();
    let mut at = start.to_string();
    let mut plan = Vec::new();
    for _ in 0..len {
        let options: Vec<(String, String)> = labels
            .iter()
            .flat_map(|r| scan_adjacent(raw, &at, r).into_iter().map(move |n| (r.clone(), n)))
            .collect();
        if options.is_empty() {
            break;
        }
        let (rel, next) = options[rng.random_range(0..options.len())].clone();
        plan.push(rel);
        at = next;
    }
    plan
}

/// Deterministic pseudo-random scores derived from the item text, so
/// rankings are irregular but reproducible.
#[derive(Debug, Clone, Copy)]
pub struct HashScorer(pub u64);

impl HashScorer {
    pub fn score(&self, text: &str) -> f64 {
        // FNV-1a
        let mut h: u64 = 0xcbf29ce484222325 ^ self.0;
        for b in text.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        (h % 1001) as f64 / 1000.0
    }
}

impl ScorerBackend for HashScorer {
    fn rate_relations(&self, _: &str, _: &str, candidates: &[String], _: usize) -> Result<Vec<ScoredCandidate>> {
        Ok(candidates
            .iter()
            .map(|c| ScoredCandidate::new(c.clone(), self.score(c)))
            .collect())
    }

    fn rate_entity(&self, _: &str, _: &Plan, candidate: &str, _: &[Triple]) -> Result<f64> {
        Ok(self.score(candidate))
    }
}

/// A random question over [`WORDS`] with one topic entity present in `store`
/// and gold answers drawn from what some plan reaches.
pub fn random_example(rng: &mut ChaCha8Rng, raw: &[Triple], id: usize) -> QaExample {
    let topic = raw[rng.random_range(0..raw.len())].head.clone();
    let words: Vec<&str> = (0..rng.random_range(3..7))
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect();
    let len = rng.random_range(1..3);
    let plan = random_walk_plan(rng, raw, &topic, len);
    let reach: Vec<String> = walk_endpoints(raw, &BTreeSet::from([topic.clone()]), &plan)
        .into_iter()
        .collect();
    let answers = if reach.is_empty() {
        vec![topic.clone()]
    } else {
        vec![reach[rng.random_range(0..reach.len())].clone()]
    };
    QaExample {
        id: format!("q{id}"),
        question: format!("{}?", words.join(" ")),
        topic_entities: vec![topic],
        answers,
    }
}

pub fn count_by<K: Ord, I: IntoIterator<Item = K>>(items: I) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}
