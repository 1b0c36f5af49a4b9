//! Sources of weighted plans: a chat model, a plan file, or a heuristic
//! over the retrieved subgraph.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finder::{plan_order, Plan};
use crate::kg::inverse_relation;
use crate::llm::client::ChatClient;
use crate::llm::parse::parse_plan_reply;
use crate::llm::remote::render_plan_prompt;
use crate::llm::template::PromptSet;
use crate::retriever::Subgraph;
use crate::scoring::{relation_overlap, tokens};

/// Minimum token similarity for repairing an unknown relation label.
pub const REPAIR_THRESHOLD: f64 = 0.8;

/// One line of a plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub id: String,
    pub plans: Vec<Plan>,
}

/// Plans keyed by question id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanFile {
    entries: BTreeMap<String, Vec<Plan>>,
}

impl PlanFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: PlanEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            let plans = entry
                .plans
                .into_iter()
                .map(|p| Plan::new(p.relations, p.weight))
                .collect();
            entries.insert(entry.id, plans);
        }
        Ok(Self { entries })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = PlanEntry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.id, e.plans)).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&[Plan]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn write_plan_file(path: impl AsRef<Path>, entries: &[PlanEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

#[derive(Clone)]
pub enum PlanSource {
    /// Relation sequences that connect the topics to other subgraph
    /// entities, weighted by their lexical overlap with the question.
    KgHeuristic {
        max_len: usize,
    },
    File(Arc<PlanFile>),
    Remote {
        client: Arc<dyn ChatClient>,
        prompts: Arc<PromptSet>,
        parse_retries: u32,
    },
}

impl std::fmt::Debug for PlanSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanSource::KgHeuristic { max_len } => write!(f, "KgHeuristic(max_len={max_len})"),
            PlanSource::File(file) => write!(f, "File({} entries)", file.len()),
            PlanSource::Remote { .. } => f.write_str("Remote"),
        }
    }
}

/// At most `s` plans for one question, highest weight first.
pub fn generate_plans(
    source: &PlanSource,
    question_id: &str,
    question: &str,
    subgraph: &Subgraph,
    s: usize,
) -> Result<Vec<Plan>> {
    if s == 0 {
        return Err(Error::Config("plan count must be at least 1".into()));
    }
    let mut plans = match source {
        PlanSource::KgHeuristic { max_len } => heuristic_plans(question, subgraph, *max_len)?,
        PlanSource::File(file) => file
            .get(question_id)
            .ok_or_else(|| Error::MissingPlans(question_id.to_string()))?
            .to_vec(),
        PlanSource::Remote {
            client,
            prompts,
            parse_retries,
        } => remote_plans(client.as_ref(), prompts, *parse_retries, question, subgraph)?,
    };
    if !matches!(source, PlanSource::File(_)) {
        plans.sort_by(plan_order);
    } else {
        plans.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap_or(std::cmp::Ordering::Equal));
    }
    plans.truncate(s);
    Ok(plans)
}

/// Entities the heuristic aims plans at: non-topic entities with a label,
/// or every non-topic entity when the graph carries no labels.
pub fn heuristic_targets(subgraph: &Subgraph) -> BTreeSet<String> {
    let store = subgraph.store();
    let topics: BTreeSet<&str> = subgraph.topics().iter().map(String::as_str).collect();
    let labelled = !store.labels().is_empty();
    store
        .entities()
        .filter(|e| !topics.contains(e))
        .filter(|e| !labelled || store.label(e).is_some())
        .map(str::to_string)
        .collect()
}

fn heuristic_plans(question: &str, subgraph: &Subgraph, max_len: usize) -> Result<Vec<Plan>> {
    if max_len == 0 {
        return Err(Error::Config("plans.max_len must be at least 1".into()));
    }
    let start: BTreeSet<String> = subgraph.topics().iter().cloned().collect();
    let targets = heuristic_targets(subgraph);
    Ok(subgraph
        .store()
        .enumerate_plans(&start, &targets, max_len)
        .into_iter()
        .filter(|p| !backtracks(&p.relations))
        .map(|p| {
            let weight =
                p.relations.iter().map(|r| relation_overlap(question, r)).sum::<f64>() / p.relations.len() as f64;
            Plan::new(p.relations, weight)
        })
        .collect())
}

/// True when some relation is immediately followed by its own inverse.
fn backtracks(relations: &[String]) -> bool {
    relations.windows(2).any(|w| w[1] == inverse_relation(&w[0]))
}

/// `|A ∩ B| / max(|A|, |B|)` over label tokens.
pub fn label_similarity(a: &str, b: &str) -> f64 {
    let ta = tokens(a);
    let tb = tokens(b);
    let denom = ta.len().max(tb.len());
    if denom == 0 {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / denom as f64
}

/// The vocabulary label for `raw`: itself if known, else the most similar
/// label scoring above [`REPAIR_THRESHOLD`].
pub fn repair_relation(raw: &str, vocabulary: &BTreeSet<String>) -> Option<String> {
    if vocabulary.contains(raw) {
        return Some(raw.to_string());
    }
    let mut best: Option<(f64, &String)> = None;
    for label in vocabulary {
        let sim = label_similarity(raw, label);
        if sim > REPAIR_THRESHOLD && best.is_none_or(|(b, _)| sim > b) {
            best = Some((sim, label));
        }
    }
    best.map(|(_, l)| l.clone())
}

fn remote_plans(
    client: &dyn ChatClient,
    prompts: &PromptSet,
    parse_retries: u32,
    question: &str,
    subgraph: &Subgraph,
) -> Result<Vec<Plan>> {
    let prompt = render_plan_prompt(prompts, question)?;
    let mut raw = Vec::new();
    for attempt in 0..=parse_retries {
        raw = parse_plan_reply(&client.complete(&prompt)?);
        if !raw.is_empty() {
            break;
        }
        log::warn!("plan reply had no plans (attempt {})", attempt + 1);
    }
    if raw.is_empty() {
        return Err(Error::Reply("plan reply contained no plans".into()));
    }
    let vocabulary = subgraph.store().relation_vocabulary();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (rank, candidate) in raw.into_iter().enumerate() {
        let repaired: Option<Vec<String>> = candidate
            .relations
            .iter()
            .map(|r| repair_relation(r, &vocabulary))
            .collect();
        let Some(relations) = repaired else {
            log::debug!("dropping plan with unknown relations: {:?}", candidate.relations);
            continue;
        };
        if !seen.insert(relations.clone()) {
            continue;
        }
        let given: Vec<f64> = candidate.scores.iter().flatten().copied().collect();
        let weight = if given.is_empty() {
            1.0 / (rank + 1) as f64
        } else {
            given.iter().sum::<f64>() / given.len() as f64
        };
        out.push(Plan::new(relations, weight));
    }
    Ok(out)
}
