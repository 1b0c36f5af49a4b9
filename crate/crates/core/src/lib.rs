//! Knowledge-graph question answering over weighted evidence paths.
//!
//! The pipeline retrieves a question-relevant subgraph, grounds weighted
//! relation plans into scored evidence paths, and ranks answers from those
//! paths. Scoring is pluggable: a deterministic lexical scorer for offline
//! use, or a chat-completion endpoint.

pub mod config;
pub mod error;
pub mod eval;
pub mod finder;
pub mod kg;
pub mod llm;
pub mod pipeline;
pub mod plans;
pub mod predictor;
pub mod retriever;
pub mod scoring;
pub mod training;

pub use config::{Backend, PlanSourceKind, RunConfig};
pub use error::{Error, ErrorKind, Result};
pub use eval::{evaluate, sweep, EvalReport, QuestionResult, SweepCell};
pub use finder::{
    aggregate_score, find_evidence_paths, find_evidence_paths_traced, EvidencePath, FinderConfig, PathRecord, PathStep,
    Plan,
};
pub use kg::{QaExample, Triple, TripleFormat, TripleStore};
pub use pipeline::{Pipeline, QuestionRun};
pub use plans::{generate_plans, PlanEntry, PlanFile, PlanSource};
pub use predictor::{predict_aggregate, predict_remote, Grouping, Prediction, Predictor, RankedAnswer, Strategy};
pub use retriever::{retrieve_subgraph, RetrievalConfig, Subgraph};
pub use scoring::{ConstantScorer, LexicalScorer, ScoredCandidate, ScorerBackend};
pub use training::{emit_find_dataset, emit_reason_dataset, label_plans, InstructionRecord, LabeledPlan};
