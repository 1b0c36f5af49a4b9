//! Prompt templates with `{name}` placeholders.
//!
//! `{{` and `}}` are literal braces. Rendering is a single pass, so slot
//! values are never re-scanned for placeholders.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("missing slot: {0}")]
    MissingSlot(String),
    #[error("malformed template at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("template for {kind} uses placeholders {found:?}, expected {expected:?}")]
    SlotMismatch {
        kind: &'static str,
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateKind {
    RelationScoring,
    EntityScoring,
    AnswerPrediction,
    PlanGeneration,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] = [
        TemplateKind::RelationScoring,
        TemplateKind::EntityScoring,
        TemplateKind::AnswerPrediction,
        TemplateKind::PlanGeneration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::RelationScoring => "relation_scoring",
            TemplateKind::EntityScoring => "entity_scoring",
            TemplateKind::AnswerPrediction => "answer_prediction",
            TemplateKind::PlanGeneration => "plan_generation",
        }
    }

    /// The placeholders each template kind must use, no more and no fewer.
    pub fn slots(self) -> &'static [&'static str] {
        match self {
            TemplateKind::RelationScoring => &["budget", "question", "relation", "topic_entity"],
            TemplateKind::EntityScoring => &["candidate", "information", "plans", "question"],
            TemplateKind::AnswerPrediction => &["paths", "question"],
            TemplateKind::PlanGeneration => &["question"],
        }
    }

    pub fn builtin_body(self) -> &'static str {
        match self {
            TemplateKind::RelationScoring => include_str!("../../prompts/relation_scoring.txt"),
            TemplateKind::EntityScoring => include_str!("../../prompts/entity_scoring.txt"),
            TemplateKind::AnswerPrediction => include_str!("../../prompts/answer_prediction.txt"),
            TemplateKind::PlanGeneration => include_str!("../../prompts/plan_generation.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: TemplateKind,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn builtin(kind: TemplateKind) -> Self {
        Self::new(kind, kind.builtin_body()).expect("bundled templates are well formed")
    }

    /// Parses `body` and checks that its placeholders are exactly
    /// `kind.slots()`.
    pub fn new(kind: TemplateKind, body: &str) -> Result<Self, TemplateError> {
        let segments = parse(body)?;
        let found: BTreeSet<String> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(name) => Some(name.clone()),
                Segment::Text(_) => None,
            })
            .collect();
        let expected: BTreeSet<String> = kind.slots().iter().map(|s| s.to_string()).collect();
        if found != expected {
            return Err(TemplateError::SlotMismatch {
                kind: kind.name(),
                found: found.into_iter().collect(),
                expected: expected.into_iter().collect(),
            });
        }
        Ok(Self { kind, segments })
    }

    pub fn from_file(kind: TemplateKind, path: &Path) -> Result<Self, TemplateError> {
        let body = fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(kind, &body)
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(name) => Some(name.as_str()),
                Segment::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, slots: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => {
                    let value = slots
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::MissingSlot(name.clone()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

fn parse(body: &str) -> Result<Vec<Segment>, TemplateError> {
    let mut segments = Vec::new();
    let mut text = String::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < body.len() {
        let rest = &body[i..];
        if rest.starts_with("{{") {
            text.push('{');
            i += 2;
        } else if rest.starts_with("}}") {
            text.push('}');
            i += 2;
        } else if bytes[i] == b'{' {
            let end = rest.find('}').ok_or_else(|| TemplateError::Malformed {
                offset: i,
                message: "unclosed `{`".into(),
            })?;
            let name = &rest[1..end];
            let valid = !name.is_empty()
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !name.starts_with(|c: char| c.is_ascii_digit());
            if !valid {
                return Err(TemplateError::Malformed {
                    offset: i,
                    message: format!("invalid placeholder `{{{name}}}`"),
                });
            }
            if !text.is_empty() {
                segments.push(Segment::Text(std::mem::take(&mut text)));
            }
            segments.push(Segment::Slot(name.to_string()));
            i += end + 1;
        } else if bytes[i] == b'}' {
            return Err(TemplateError::Malformed {
                offset: i,
                message: "unmatched `}`".into(),
            });
        } else {
            let ch = rest.chars().next().expect("non-empty");
            text.push(ch);
            i += ch.len_utf8();
        }
    }
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    Ok(segments)
}

/// One template per prompt kind.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub relation: PromptTemplate,
    pub entity: PromptTemplate,
    pub answer: PromptTemplate,
    pub plan: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            relation: PromptTemplate::builtin(TemplateKind::RelationScoring),
            entity: PromptTemplate::builtin(TemplateKind::EntityScoring),
            answer: PromptTemplate::builtin(TemplateKind::AnswerPrediction),
            plan: PromptTemplate::builtin(TemplateKind::PlanGeneration),
        }
    }
}

impl PromptSet {
    /// Loads `<kind>.txt` from `dir` where present, falling back to the
    /// bundled template otherwise.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let load = |kind: TemplateKind| {
            let path = dir.join(format!("{}.txt", kind.name()));
            if path.exists() {
                PromptTemplate::from_file(kind, &path)
            } else {
                Ok(PromptTemplate::builtin(kind))
            }
        };
        Ok(Self {
            relation: load(TemplateKind::RelationScoring)?,
            entity: load(TemplateKind::EntityScoring)?,
            answer: load(TemplateKind::AnswerPrediction)?,
            plan: load(TemplateKind::PlanGeneration)?,
        })
    }
}
