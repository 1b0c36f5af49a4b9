//! Question-guided subgraph retrieval.
//!
//! Starting from the topic entities, each iteration asks the scorer for the
//! top-K relations around every frontier entity and pulls in the triples
//! those relations reach. Every entity is expanded at most once, so no
//! (entity, relation) pair is followed twice.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Triple, TripleStore};
use crate::scoring::{score_relations, ScoredCandidate, ScorerBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Relations kept per entity per iteration.
    pub k: usize,
    /// Number of expansion iterations.
    pub depth: usize,
    /// Cap on the entities carried into the next iteration.
    pub max_frontier: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 3,
            depth: 2,
            max_frontier: 200,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.depth == 0 || self.max_frontier == 0 {
            return Err(Error::Config(
                "retriever.k, retriever.depth and retriever.max_frontier must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// The relations chosen at one frontier entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierStep {
    pub entity: String,
    pub chosen: Vec<ScoredCandidate>,
}

#[derive(Debug, Clone)]
pub struct Subgraph {
    question: String,
    topics: Vec<String>,
    store: TripleStore,
    history: Vec<Vec<FrontierStep>>,
}

impl Subgraph {
    /// Treats all of `store` as the retrieved subgraph.
    pub fn whole(store: &TripleStore, question: &str, topics: &[String]) -> Self {
        Self {
            question: question.to_string(),
            topics: sorted_unique(topics),
            store: store.clone(),
            history: Vec::new(),
        }
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn store(&self) -> &TripleStore {
        &self.store
    }

    pub fn history(&self) -> &[Vec<FrontierStep>] {
        &self.history
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.store.triples()
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn to_file(&self) -> SubgraphFile {
        SubgraphFile {
            question: self.question.clone(),
            topics: self.topics.clone(),
            triples: self
                .store
                .triples()
                .map(|t| [t.head.clone(), t.relation.clone(), t.tail.clone()])
                .collect(),
            labels: self.store.labels().clone(),
            history: self.history.clone(),
        }
    }

    pub fn from_file(file: SubgraphFile) -> Result<Self> {
        let store = TripleStore::from_triples(file.triples.into_iter().map(|[h, r, t]| Triple::new(h, r, t)))?
            .with_labels(file.labels);
        Ok(Self {
            question: file.question,
            topics: sorted_unique(&file.topics),
            store,
            history: file.history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.to_file())?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

/// On-disk form of a [`Subgraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgraphFile {
    pub question: String,
    pub topics: Vec<String>,
    pub triples: Vec<[String; 3]>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub history: Vec<Vec<FrontierStep>>,
}

fn sorted_unique(items: &[String]) -> Vec<String> {
    items.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn retrieve_subgraph(
    store: &TripleStore,
    question: &str,
    topics: &[String],
    config: &RetrievalConfig,
    backend: &dyn ScorerBackend,
) -> Result<Subgraph> {
    config.validate()?;
    if topics.is_empty() {
        return Err(Error::Config("at least one topic entity is required".into()));
    }
    if let Some(missing) = topics.iter().find(|t| !store.has_entity(t)) {
        return Err(Error::UnknownEntity(missing.clone()));
    }

    let topics = sorted_unique(topics);
    let mut triples = BTreeSet::new();
    let mut expanded: BTreeSet<String> = BTreeSet::new();
    let mut history = Vec::new();
    let mut frontier = topics.clone();

    for _ in 0..config.depth {
        if frontier.is_empty() {
            break;
        }
        let steps: Vec<FrontierStep> = frontier
            .par_iter()
            .map(|entity| {
                let candidates = store.relations_of(entity);
                let chosen = if candidates.is_empty() {
                    Vec::new()
                } else {
                    score_relations(backend, question, store.display_name(entity), candidates, config.k)?
                };
                Ok(FrontierStep {
                    entity: entity.clone(),
                    chosen,
                })
            })
            .collect::<Result<_>>()?;

        let mut reached: BTreeMap<String, f64> = BTreeMap::new();
        for step in &steps {
            expanded.insert(step.entity.clone());
            for rel in &step.chosen {
                for tail in store.search_adjacent(&step.entity, &rel.item) {
                    triples.insert(TripleStore::canonical_triple(&step.entity, &rel.item, tail));
                    let slot = reached.entry(tail.clone()).or_insert(rel.score);
                    *slot = slot.max(rel.score);
                }
            }
        }
        history.push(steps);

        let mut next: Vec<ScoredCandidate> = reached
            .into_iter()
            .filter(|(e, _)| !expanded.contains(e))
            .map(|(e, s)| ScoredCandidate::new(e, s))
            .collect();
        next.sort_by(crate::scoring::rank_order);
        next.truncate(config.max_frontier);
        frontier = next.into_iter().map(|c| c.item).collect();
        frontier.sort();
    }

    Ok(Subgraph {
        question: question.to_string(),
        topics,
        store: store.restrict(triples),
        history,
    })
}
