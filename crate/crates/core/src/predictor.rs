//! Ranking answers from scored evidence paths.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finder::EvidencePath;
use crate::kg::TripleStore;
use crate::llm::client::ChatClient;
use crate::llm::parse::parse_answer_list;
use crate::llm::remote::render_answer_prompt;
use crate::llm::template::PromptSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Aggregate,
    Remote,
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aggregate" => Ok(Strategy::Aggregate),
            "remote" => Ok(Strategy::Remote),
            other => Err(Error::Config(format!("unknown predictor strategy `{other}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Aggregate => "aggregate",
            Strategy::Remote => "remote",
        })
    }
}

/// How the scores of paths sharing a terminal entity are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    #[default]
    Max,
    Sum,
}

impl FromStr for Grouping {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(Grouping::Max),
            "sum" => Ok(Grouping::Sum),
            other => Err(Error::Config(format!("unknown predictor grouping `{other}`"))),
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Max => "max",
            Grouping::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub answer: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub answers: Vec<RankedAnswer>,
    pub strategy: Strategy,
    pub trace: Vec<EvidencePath>,
}

impl Prediction {
    pub fn top(&self) -> Option<&str> {
        self.answers.first().map(|a| a.answer.as_str())
    }

    pub fn answer_ids(&self) -> Vec<String> {
        self.answers.iter().map(|a| a.answer.clone()).collect()
    }
}

fn answer_order(a: &RankedAnswer, b: &RankedAnswer) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.answer.cmp(&b.answer))
}

/// Groups paths by terminal entity and ranks the entities by grouped score.
pub fn predict_aggregate(paths: &[EvidencePath], group: Grouping) -> Prediction {
    let mut grouped: BTreeMap<&str, f64> = BTreeMap::new();
    for path in paths {
        let Some(end) = path.terminal() else { continue };
        let score = path.aggregate_score;
        grouped
            .entry(end)
            .and_modify(|s| match group {
                Grouping::Max => *s = s.max(score),
                Grouping::Sum => *s += score,
            })
            .or_insert(score);
    }
    let mut answers: Vec<RankedAnswer> = grouped
        .into_iter()
        .map(|(answer, confidence)| RankedAnswer {
            answer: answer.to_string(),
            confidence,
        })
        .collect();
    answers.sort_by(answer_order);
    Prediction {
        answers,
        strategy: Strategy::Aggregate,
        trace: paths.to_vec(),
    }
}

/// Maps reply items onto path terminals by id or label. Items naming no
/// terminal are kept verbatim.
fn resolve_reply(store: &TripleStore, paths: &[EvidencePath], items: &[String]) -> (Vec<String>, usize) {
    let mut terminals: Vec<&str> = paths.iter().filter_map(EvidencePath::terminal).collect();
    terminals.sort_unstable();
    terminals.dedup();
    let mut out: Vec<String> = Vec::new();
    let mut resolved = 0;
    for item in items {
        let hit = terminals
            .iter()
            .find(|t| **t == item)
            .or_else(|| terminals.iter().find(|t| store.matches_answer(t, item)));
        let name = match hit {
            Some(t) => {
                resolved += 1;
                t.to_string()
            }
            None => item.clone(),
        };
        if !out.contains(&name) {
            out.push(name);
        }
    }
    (out, resolved)
}

/// Asks the model to pick answers from the rendered paths. A reply with no
/// usable answers falls back to [`predict_aggregate`].
pub fn predict_remote(
    client: &dyn ChatClient,
    prompts: &PromptSet,
    store: &TripleStore,
    question: &str,
    paths: &[EvidencePath],
    group: Grouping,
) -> Result<Prediction> {
    let prompt = render_answer_prompt(prompts, store, question, paths)?;
    let reply = client.complete(&prompt)?;
    let items = parse_answer_list(&reply);
    let (names, resolved) = resolve_reply(store, paths, &items);
    if names.is_empty() || (!paths.is_empty() && resolved == 0) {
        log::warn!("answer reply not usable, falling back to path scores: {reply:?}");
        return Ok(predict_aggregate(paths, group));
    }
    let answers = names
        .into_iter()
        .enumerate()
        .map(|(i, answer)| RankedAnswer {
            answer,
            confidence: 1.0 / (i + 1) as f64,
        })
        .collect();
    Ok(Prediction {
        answers,
        strategy: Strategy::Remote,
        trace: paths.to_vec(),
    })
}

#[derive(Clone)]
pub enum Predictor {
    Aggregate {
        group: Grouping,
    },
    Remote {
        client: Arc<dyn ChatClient>,
        prompts: Arc<PromptSet>,
        group: Grouping,
    },
}

impl Predictor {
    pub fn strategy(&self) -> Strategy {
        match self {
            Predictor::Aggregate { .. } => Strategy::Aggregate,
            Predictor::Remote { .. } => Strategy::Remote,
        }
    }

    pub fn predict(&self, store: &TripleStore, question: &str, paths: &[EvidencePath]) -> Result<Prediction> {
        match self {
            Predictor::Aggregate { group } => Ok(predict_aggregate(paths, *group)),
            Predictor::Remote { client, prompts, group } => {
                predict_remote(client.as_ref(), prompts, store, question, paths, *group)
            }
        }
    }
}

impl fmt::Debug for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predictor::Aggregate { group } => write!(f, "Aggregate({group})"),
            Predictor::Remote { group, .. } => write!(f, "Remote({group})"),
        }
    }
}
