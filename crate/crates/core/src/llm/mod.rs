//! Prompt templates, chat transport and reply parsers.

pub mod client;
pub mod parse;
pub mod remote;
pub mod template;

pub use client::{prompt_hash, ChatClient, EndpointConfig, HttpChatClient, RecordingClient, ReplayClient};
pub use parse::{parse_answer_list, parse_entity_score, parse_plan_reply, parse_tagged_scores, TaggedScoreReply};
pub use remote::{render_answer_prompt, RemoteScorer};
pub use template::{PromptSet, PromptTemplate, TemplateError, TemplateKind};
