//! Relevance scoring of relations and entities against a question.
//!
//! Backends implement [`ScorerBackend`]; callers go through
//! [`score_relations`] and [`score_entities`], which enforce the shared
//! output contract (clamped scores, candidate filtering, budget truncation,
//! score-descending order with lexicographic tie-break).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finder::Plan;
use crate::kg::{Triple, INVERSE_SUFFIX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub item: String,
    pub score: f64,
}

impl ScoredCandidate {
    pub fn new(item: impl Into<String>, score: f64) -> Self {
        Self {
            item: item.into(),
            score: clamp_score(score),
        }
    }
}

/// Score descending, then item ascending.
pub fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.item.cmp(&b.item))
}

/// Maps any float into `[0, 1]`; NaN becomes 0.
pub fn clamp_score(score: f64) -> f64 {
    if score.is_nan() {
        0.0
    } else {
        score.clamp(0.0, 1.0)
    }
}

/// A source of relevance judgements. Implementations must be shareable
/// across worker threads.
pub trait ScorerBackend: Send + Sync {
    /// Scores some or all of `candidates`. Items not returned count as 0.
    fn rate_relations(
        &self,
        question: &str,
        topic_entity: &str,
        candidates: &[String],
        budget: usize,
    ) -> Result<Vec<ScoredCandidate>>;

    /// Scores one candidate entity given the triples around it. Context
    /// triples carry display names rather than raw ids.
    fn rate_entity(&self, question: &str, plan: &Plan, candidate: &str, context: &[Triple]) -> Result<f64>;
}

/// Scores relation candidates and keeps the best `budget` of them.
pub fn score_relations(
    backend: &dyn ScorerBackend,
    question: &str,
    topic_entity: &str,
    candidates: &[String],
    budget: usize,
) -> Result<Vec<ScoredCandidate>> {
    if budget == 0 {
        return Err(Error::Config("relation budget must be at least 1".into()));
    }
    let unique: BTreeSet<&String> = candidates.iter().collect();
    if unique.is_empty() {
        return Ok(Vec::new());
    }
    let unique: Vec<String> = unique.into_iter().cloned().collect();
    let raw = backend.rate_relations(question, topic_entity, &unique, budget)?;

    let mut scores: BTreeMap<&str, f64> = unique.iter().map(|c| (c.as_str(), 0.0)).collect();
    for rated in &raw {
        let hit = if scores.contains_key(rated.item.as_str()) {
            Some(rated.item.as_str())
        } else {
            unique
                .iter()
                .find(|c| c.eq_ignore_ascii_case(rated.item.trim()))
                .map(String::as_str)
        };
        if let Some(label) = hit {
            let slot = scores.get_mut(label).expect("candidate present");
            *slot = slot.max(clamp_score(rated.score));
        }
    }
    let mut out: Vec<ScoredCandidate> = scores
        .into_iter()
        .map(|(item, score)| ScoredCandidate::new(item, score))
        .collect();
    out.sort_by(rank_order);
    out.truncate(budget);
    Ok(out)
}

pub fn score_entities(
    backend: &dyn ScorerBackend,
    question: &str,
    plan: &Plan,
    candidate: &str,
    context: &[Triple],
) -> Result<ScoredCandidate> {
    let score = backend.rate_entity(question, plan, candidate, context)?;
    Ok(ScoredCandidate::new(candidate, score))
}

/// Lowercased alphanumeric runs.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Fraction of question tokens that also occur in `evidence`.
pub fn token_overlap(question: &BTreeSet<String>, evidence: &BTreeSet<String>) -> f64 {
    if question.is_empty() {
        return 0.0;
    }
    let shared = question.intersection(evidence).count();
    clamp_score(shared as f64 / question.len() as f64)
}

fn relation_tokens(label: &str) -> BTreeSet<String> {
    tokens(label.strip_suffix(INVERSE_SUFFIX).unwrap_or(label))
}

/// Overlap between the question and a relation label; the inverse marker
/// does not contribute tokens.
pub fn relation_overlap(question: &str, relation: &str) -> f64 {
    token_overlap(&tokens(question), &relation_tokens(relation))
}

pub fn triple_tokens(t: &Triple) -> BTreeSet<String> {
    let mut out = tokens(&t.head);
    out.extend(tokens(&t.relation));
    out.extend(tokens(&t.tail));
    out
}

/// Deterministic token-overlap scorer.
///
/// `score = |tokens(question) ∩ tokens(evidence)| / |tokens(question)|`,
/// where evidence is the relation label, or the union of all context triples.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl ScorerBackend for LexicalScorer {
    fn rate_relations(
        &self,
        question: &str,
        _topic_entity: &str,
        candidates: &[String],
        _budget: usize,
    ) -> Result<Vec<ScoredCandidate>> {
        let q = tokens(question);
        Ok(candidates
            .iter()
            .map(|c| ScoredCandidate::new(c.clone(), token_overlap(&q, &relation_tokens(c))))
            .collect())
    }

    fn rate_entity(&self, question: &str, _plan: &Plan, _candidate: &str, context: &[Triple]) -> Result<f64> {
        let evidence: BTreeSet<String> = context.iter().flat_map(triple_tokens).collect();
        Ok(token_overlap(&tokens(question), &evidence))
    }
}

/// Gives every relation and entity the same score.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl ScorerBackend for ConstantScorer {
    fn rate_relations(
        &self,
        _question: &str,
        _topic_entity: &str,
        candidates: &[String],
        _budget: usize,
    ) -> Result<Vec<ScoredCandidate>> {
        Ok(candidates
            .iter()
            .map(|c| ScoredCandidate::new(c.clone(), self.0))
            .collect())
    }

    fn rate_entity(&self, _: &str, _: &Plan, _: &str, _: &[Triple]) -> Result<f64> {
        Ok(clamp_score(self.0))
    }
}
