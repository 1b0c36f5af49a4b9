//! Retrieve, plan, find, predict: the stages wired together.

use std::sync::Arc;

use crate::error::Result;
use crate::finder::{find_evidence_paths_traced, EvidencePath, FinderConfig, Plan, WalkTrace};
use crate::kg::{QaExample, TripleStore};
use crate::plans::{generate_plans, PlanSource};
use crate::predictor::{Prediction, Predictor};
use crate::retriever::{retrieve_subgraph, RetrievalConfig, Subgraph};
use crate::scoring::ScorerBackend;

#[derive(Clone)]
pub struct Pipeline {
    pub store: Arc<TripleStore>,
    pub scorer: Arc<dyn ScorerBackend>,
    pub plan_source: PlanSource,
    pub predictor: Predictor,
    pub retrieval: RetrievalConfig,
    pub finder: FinderConfig,
    /// When false, the predictor sees no evidence paths at all.
    pub finder_enabled: bool,
}

/// Everything one question produced, stage by stage.
#[derive(Debug, Clone)]
pub struct QuestionRun {
    pub subgraph: Subgraph,
    pub plans: Vec<Plan>,
    pub walks: Vec<WalkTrace>,
    pub paths: Vec<EvidencePath>,
    pub prediction: Prediction,
}

impl Pipeline {
    pub fn validate(&self) -> Result<()> {
        self.retrieval.validate()?;
        self.finder.validate()
    }

    pub fn retrieve(&self, question: &str, topics: &[String]) -> Result<Subgraph> {
        retrieve_subgraph(&self.store, question, topics, &self.retrieval, self.scorer.as_ref())
    }

    pub fn plans(&self, question_id: &str, question: &str, subgraph: &Subgraph) -> Result<Vec<Plan>> {
        generate_plans(
            &self.plan_source,
            question_id,
            question,
            subgraph,
            self.finder.plan_count,
        )
    }

    pub fn paths(&self, subgraph: &Subgraph, plans: &[Plan]) -> Result<(Vec<EvidencePath>, Vec<WalkTrace>)> {
        if !self.finder_enabled {
            return Ok((Vec::new(), Vec::new()));
        }
        let out = find_evidence_paths_traced(
            subgraph,
            subgraph.question(),
            subgraph.topics(),
            plans,
            &self.finder,
            self.scorer.as_ref(),
        )?;
        Ok((out.paths, out.walks))
    }

    pub fn predict(&self, question: &str, paths: &[EvidencePath]) -> Result<Prediction> {
        self.predictor.predict(&self.store, question, paths)
    }

    pub fn run(&self, question_id: &str, question: &str, topics: &[String]) -> Result<QuestionRun> {
        let subgraph = self.retrieve(question, topics)?;
        let plans = if self.finder_enabled {
            self.plans(question_id, question, &subgraph)?
        } else {
            Vec::new()
        };
        let (paths, walks) = self.paths(&subgraph, &plans)?;
        let prediction = self.predict(question, &paths)?;
        Ok(QuestionRun {
            subgraph,
            plans,
            walks,
            paths,
            prediction,
        })
    }

    pub fn run_example(&self, example: &QaExample) -> Result<QuestionRun> {
        self.run(&example.id, &example.question, &example.topic_entities)
    }
}
