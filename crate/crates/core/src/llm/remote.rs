//! Scoring through a chat endpoint, and the prompt renderings shared with
//! the predictor and the training-data emitter.

use std::sync::Arc;

use crate::error::Result;
use crate::finder::{EvidencePath, Plan};
use crate::kg::{Triple, TripleStore};
use crate::llm::client::ChatClient;
use crate::llm::parse::{parse_entity_score, parse_tagged_scores};
use crate::llm::template::PromptSet;
use crate::scoring::{ScoredCandidate, ScorerBackend};

/// Score with three decimals and no trailing zeros beyond the first.
pub fn format_score(score: f64) -> String {
    let mut s = format!("{score:.3}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    s
}

pub fn render_relation_prompt(
    prompts: &PromptSet,
    question: &str,
    topic_entity: &str,
    candidates: &[String],
    budget: usize,
) -> Result<String> {
    let relations = candidates.join("; ");
    let budget = budget.to_string();
    Ok(prompts.relation.render(&[
        ("question", question),
        ("topic_entity", topic_entity),
        ("relation", &relations),
        ("budget", &budget),
    ])?)
}

pub fn render_entity_prompt(
    prompts: &PromptSet,
    question: &str,
    plan: &Plan,
    candidate: &str,
    context: &[Triple],
) -> Result<String> {
    let plans = plan.relations.join(", ");
    let information = context
        .iter()
        .map(|t| format!("{} → {} → {}", t.head, t.relation, t.tail))
        .collect::<Vec<_>>()
        .join("\n\n");
    Ok(prompts.entity.render(&[
        ("question", question),
        ("plans", &plans),
        ("candidate", candidate),
        ("information", &information),
    ])?)
}

/// One `path Score:x` block per evidence path, entities shown by label.
pub fn render_path_block(store: &TripleStore, paths: &[EvidencePath]) -> String {
    paths
        .iter()
        .map(|p| {
            format!(
                "{} Score:{}",
                p.render_with(|e| store.display_name(e)),
                format_score(p.aggregate_score)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// The exact prompt the remote predictor sends for `paths`.
pub fn render_answer_prompt(
    prompts: &PromptSet,
    store: &TripleStore,
    question: &str,
    paths: &[EvidencePath],
) -> Result<String> {
    let block = render_path_block(store, paths);
    Ok(prompts.answer.render(&[("paths", &block), ("question", question)])?)
}

pub fn render_plan_prompt(prompts: &PromptSet, question: &str) -> Result<String> {
    Ok(prompts.plan.render(&[("question", question)])?)
}

/// [`ScorerBackend`] that asks a chat model.
///
/// A reply that still fails to parse after `parse_retries` extra requests
/// scores 0 rather than aborting the question.
#[derive(Clone)]
pub struct RemoteScorer {
    client: Arc<dyn ChatClient>,
    prompts: Arc<PromptSet>,
    parse_retries: u32,
}

impl RemoteScorer {
    pub fn new(client: Arc<dyn ChatClient>, prompts: Arc<PromptSet>, parse_retries: u32) -> Self {
        Self {
            client,
            prompts,
            parse_retries,
        }
    }

    pub fn client(&self) -> &Arc<dyn ChatClient> {
        &self.client
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    fn ask<T>(&self, prompt: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
        for attempt in 0..=self.parse_retries {
            let reply = self.client.complete(prompt)?;
            match parse(&reply) {
                Ok(v) => return Ok(Some(v)),
                Err(e) => log::warn!("unparseable reply (attempt {}): {e}", attempt + 1),
            }
        }
        Ok(None)
    }
}

impl ScorerBackend for RemoteScorer {
    fn rate_relations(
        &self,
        question: &str,
        topic_entity: &str,
        candidates: &[String],
        budget: usize,
    ) -> Result<Vec<ScoredCandidate>> {
        let prompt = render_relation_prompt(&self.prompts, question, topic_entity, candidates, budget)?;
        let parsed = self.ask(&prompt, |r| parse_tagged_scores(r, budget))?;
        Ok(match parsed {
            Some(reply) => reply
                .entries
                .into_iter()
                .map(|e| ScoredCandidate::new(e.choice, e.score))
                .collect(),
            None => Vec::new(),
        })
    }

    fn rate_entity(&self, question: &str, plan: &Plan, candidate: &str, context: &[Triple]) -> Result<f64> {
        let prompt = render_entity_prompt(&self.prompts, question, plan, candidate, context)?;
        Ok(self.ask(&prompt, parse_entity_score)?.unwrap_or(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finder::PathStep;
    use crate::llm::client::ReplayClient;
    use crate::scoring::score_relations;

    #[test]
    fn score_formatting() {
        assert_eq!(format_score(0.322), "0.322");
        assert_eq!(format_score(0.22), "0.22");
        assert_eq!(format_score(1.0), "1.0");
        assert_eq!(format_score(0.0), "0.0");
        assert_eq!(format_score(1.0 / 3.0), "0.333");
    }

    #[test]
    fn path_block_uses_labels_and_scores() {
        let store = TripleStore::parse("c\tr\tb\n", crate::kg::TripleFormat::Tsv)
            .unwrap()
            .with_labels([("b".to_string(), "B".to_string())].into());
        let path = EvidencePath {
            steps: vec![PathStep {
                source: "c".into(),
                relation: "r".into(),
                target: "b".into(),
                hop_score: 0.5,
            }],
            aggregate_score: 0.322,
            origin_plan: 0,
        };
        assert_eq!(
            render_path_block(&store, &[path.clone(), path]),
            "c → r → B Score:0.322\n\nc → r → B Score:0.322"
        );
    }

    #[test]
    fn relation_scores_come_from_the_tag_grammar() {
        let prompts = Arc::new(PromptSet::default());
        let cands = vec!["a.b".to_string(), "c.d".to_string(), "e.f".to_string()];
        let prompt = render_relation_prompt(&prompts, "q", "T", &cands, 2).unwrap();
        let reply = "<count>2</count><choice>c.d</choice><reason>x</reason><score>0.8</score>\
                     <count>1</count><choice>a.b</choice><score>0.3</score>";
        let client: Arc<dyn ChatClient> = Arc::new(ReplayClient::from_pairs([(prompt, reply)]));
        let scorer = RemoteScorer::new(client, prompts, 0);
        let got = score_relations(&scorer, "q", "T", &cands, 2).unwrap();
        assert_eq!(
            got,
            vec![ScoredCandidate::new("c.d", 0.8), ScoredCandidate::new("a.b", 0.3)]
        );
    }

    #[test]
    fn unparseable_replies_fall_back_to_zero() {
        let client: Arc<dyn ChatClient> = Arc::new(ReplayClient::default().with_fallback("no idea"));
        let scorer = RemoteScorer::new(client, Arc::new(PromptSet::default()), 1);
        let plan = Plan::new(vec!["r".into()], 1.0);
        assert_eq!(scorer.rate_entity("q", &plan, "x", &[]).unwrap(), 0.0);
        let cands = vec!["b".to_string(), "a".to_string()];
        let got = score_relations(&scorer, "q", "T", &cands, 5).unwrap();
        assert_eq!(
            got,
            vec![ScoredCandidate::new("a", 0.0), ScoredCandidate::new("b", 0.0)]
        );
    }

    #[test]
    fn transport_errors_propagate() {
        let client: Arc<dyn ChatClient> = Arc::new(ReplayClient::default());
        let scorer = RemoteScorer::new(client, Arc::new(PromptSet::default()), 0);
        let plan = Plan::new(vec!["r".into()], 1.0);
        assert!(scorer.rate_entity("q", &plan, "x", &[]).is_err());
    }
}
