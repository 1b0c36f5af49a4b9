//! Plan labelling by answer coverage, and the two instruction datasets
//! (plan finding and answer reasoning) built from it.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finder::{EvidencePath, Plan};
use crate::kg::{QaExample, TripleStore};
use crate::llm::remote::{render_answer_prompt, render_plan_prompt};
use crate::llm::template::PromptSet;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPlan {
    pub plan: Plan,
    pub coverage: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Find,
    Reason,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Find => "find",
            Task::Reason => "reason",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub task: Task,
    pub prompt: String,
    pub completion: String,
    pub source_qid: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EmitSummary {
    pub written: usize,
    pub skipped: usize,
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("train.t must lie in [0, 1], got {t}")));
    }
    Ok(())
}

/// Entity ids that the example's gold answers refer to.
pub fn gold_entities(store: &TripleStore, example: &QaExample) -> BTreeSet<String> {
    example.answers.iter().flat_map(|a| store.resolve_answer(a)).collect()
}

/// Share of the entities a plan retrieves that are gold answers; 0 when
/// the plan retrieves nothing.
pub fn coverage(retrieved: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    if retrieved.is_empty() {
        return 0.0;
    }
    retrieved.intersection(gold).count() as f64 / retrieved.len() as f64
}

pub fn label_plans(store: &TripleStore, example: &QaExample, candidates: &[Plan], t: f64) -> Result<Vec<LabeledPlan>> {
    check_threshold(t)?;
    let start = example.topic_set();
    let gold = gold_entities(store, example);
    Ok(candidates
        .iter()
        .map(|plan| {
            let c = coverage(&store.execute_plan(&start, &plan.relations), &gold);
            LabeledPlan {
                plan: plan.clone(),
                coverage: c,
                valid: c >= t,
            }
        })
        .collect())
}

/// `<PATH>r1<SEP>r2</PATH>`, one line per plan.
pub fn format_plans(plans: &[&Plan]) -> String {
    plans
        .iter()
        .map(|p| format!("<PATH>{}</PATH>", p.relations.join("<SEP>")))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_answers(answers: &[String]) -> String {
    format!("The answer is {}", answers.join(", "))
}

/// The find-task record for one example, or `None` if no plan is valid.
pub fn find_record(
    store: &TripleStore,
    prompts: &PromptSet,
    example: &QaExample,
    t: f64,
    max_len: usize,
) -> Result<Option<InstructionRecord>> {
    let gold = gold_entities(store, example);
    let candidates = store.enumerate_plans(&example.topic_set(), &gold, max_len);
    let mut labeled: Vec<LabeledPlan> = label_plans(store, example, &candidates, t)?
        .into_iter()
        .filter(|l| l.valid)
        .collect();
    if labeled.is_empty() {
        return Ok(None);
    }
    // stable: ties keep the enumeration order
    labeled.sort_by(|a, b| b.coverage.partial_cmp(&a.coverage).unwrap_or(std::cmp::Ordering::Equal));
    let plans: Vec<&Plan> = labeled.iter().map(|l| &l.plan).collect();
    Ok(Some(InstructionRecord {
        task: Task::Find,
        prompt: render_plan_prompt(prompts, &example.question)?,
        completion: format_plans(&plans),
        source_qid: example.id.clone(),
    }))
}

/// The reason-task record for one example, or `None` without paths or
/// gold answers. The prompt is the one the remote predictor would send.
pub fn reason_record(
    store: &TripleStore,
    prompts: &PromptSet,
    example: &QaExample,
    paths: &[EvidencePath],
) -> Result<Option<InstructionRecord>> {
    if paths.is_empty() || example.answers.is_empty() {
        return Ok(None);
    }
    Ok(Some(InstructionRecord {
        task: Task::Reason,
        prompt: render_answer_prompt(prompts, store, &example.question, paths)?,
        completion: format_answers(&example.answers),
        source_qid: example.id.clone(),
    }))
}

fn write_records(out: &Path, records: &[InstructionRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(out).map_err(|e| Error::io(out, e))?;
    file.write_all(&buf).map_err(|e| Error::io(out, e))
}

fn emit(out: &Path, rows: Vec<Option<InstructionRecord>>) -> Result<EmitSummary> {
    let total = rows.len();
    let records: Vec<InstructionRecord> = rows.into_iter().flatten().collect();
    write_records(out, &records)?;
    Ok(EmitSummary {
        written: records.len(),
        skipped: total - records.len(),
    })
}

pub fn emit_find_dataset(
    examples: &[QaExample],
    store: &TripleStore,
    prompts: &PromptSet,
    t: f64,
    max_len: usize,
    out: impl AsRef<Path>,
) -> Result<EmitSummary> {
    check_threshold(t)?;
    if max_len == 0 {
        return Err(Error::Config("train.max_plan_len must be at least 1".into()));
    }
    let rows = examples
        .par_iter()
        .map(|ex| find_record(store, prompts, ex, t, max_len))
        .collect::<Result<Vec<_>>>()?;
    emit(out.as_ref(), rows)
}

pub fn emit_reason_dataset(
    examples: &[QaExample],
    paths: &[Vec<EvidencePath>],
    store: &TripleStore,
    prompts: &PromptSet,
    out: impl AsRef<Path>,
) -> Result<EmitSummary> {
    if examples.len() != paths.len() {
        return Err(Error::Config(format!(
            "{} examples but {} path lists",
            examples.len(),
            paths.len()
        )));
    }
    let rows = examples
        .iter()
        .zip(paths)
        .map(|(ex, p)| reason_record(store, prompts, ex, p))
        .collect::<Result<Vec<_>>>()?;
    emit(out.as_ref(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finder::PathStep;
    use crate::kg::TripleFormat;
    use crate::llm::parse::parse_plan_reply;

    fn nato() -> TripleStore {
        TripleStore::parse(
            "NATO\torganization.headquarters\tm.04300hm\n\
             m.04300hm\tmailing_address.citytown\tBrussels\n\
             NATO\torganizations_founded\tNorway\n\
             Norway\tadministrative_divisions\tOslo\n",
            TripleFormat::Tsv,
        )
        .unwrap()
    }

    fn example(answers: &[&str]) -> QaExample {
        QaExample {
            id: "q1".into(),
            question: "Where are the NATO headquarters located?".into(),
            topic_entities: vec!["NATO".into()],
            answers: answers.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn plan(rels: &[&str]) -> Plan {
        Plan::new(rels.iter().map(|s| s.to_string()).collect(), 1.0)
    }

    #[test]
    fn coverage_of_fixture_paths() {
        let hq = plan(&["organization.headquarters", "mailing_address.citytown"]);
        let oslo = plan(&["organizations_founded", "administrative_divisions"]);
        let labels = label_plans(&nato(), &example(&["Brussels"]), &[hq, oslo], 0.5).unwrap();
        assert_eq!(labels[0].coverage, 1.0);
        assert!(labels[0].valid);
        assert_eq!(labels[1].coverage, 0.0);
        assert!(!labels[1].valid);
    }

    #[test]
    fn one_third_coverage() {
        let store = TripleStore::parse("s\tr\tA\ns\tr\tB\ns\tr\tC\n", TripleFormat::Tsv).unwrap();
        let ex = QaExample {
            id: "x".into(),
            question: "?".into(),
            topic_entities: vec!["s".into()],
            answers: vec!["A".into()],
        };
        let p = [plan(&["r"])];
        let at = |t| label_plans(&store, &ex, &p, t).unwrap()[0].clone();
        assert!((at(0.3).coverage - 1.0 / 3.0).abs() < 1e-12);
        assert!(at(1.0 / 3.0).valid);
        assert!(!at(0.34).valid);
    }

    #[test]
    fn unexecutable_plan_has_zero_coverage() {
        let l = label_plans(&nato(), &example(&["Brussels"]), &[plan(&["nope"])], 0.0).unwrap();
        assert_eq!(l[0].coverage, 0.0);
        assert!(label_plans(&nato(), &example(&[]), &[], 1.5).is_err());
    }

    #[test]
    fn find_dataset_contains_the_headquarters_plan() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("find.jsonl");
        let prompts = PromptSet::default();
        let summary = emit_find_dataset(&[example(&["Brussels"])], &nato(), &prompts, 0.5, 2, &out).unwrap();
        assert_eq!(summary, EmitSummary { written: 1, skipped: 0 });
        let rec: InstructionRecord = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
        assert_eq!(rec.task, Task::Find);
        let plans = parse_plan_reply(&rec.completion);
        assert_eq!(
            plans[0].relations,
            ["organization.headquarters", "mailing_address.citytown"]
        );
    }

    #[test]
    fn strict_threshold_skips_half_covered_question() {
        let store = TripleStore::parse("s\tr\tA\ns\tr\tB\n", TripleFormat::Tsv).unwrap();
        let ex = QaExample {
            id: "x".into(),
            question: "?".into(),
            topic_entities: vec!["s".into()],
            answers: vec!["A".into()],
        };
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("find.jsonl");
        let summary = emit_find_dataset(&[ex], &store, &PromptSet::default(), 1.0, 1, &out).unwrap();
        assert_eq!(summary, EmitSummary { written: 0, skipped: 1 });
    }

    #[test]
    fn reason_records_match_the_predictor_prompt() {
        let store = nato();
        let prompts = PromptSet::default();
        let step = |s: &str, r: &str, t: &str| PathStep {
            source: s.into(),
            relation: r.into(),
            target: t.into(),
            hop_score: 0.5,
        };
        let paths = vec![
            EvidencePath {
                steps: vec![
                    step("NATO", "organization.headquarters", "m.04300hm"),
                    step("m.04300hm", "mailing_address.citytown", "Brussels"),
                ],
                aggregate_score: 0.25,
                origin_plan: 0,
            },
            EvidencePath {
                steps: vec![step("NATO", "organizations_founded", "Norway")],
                aggregate_score: 0.1,
                origin_plan: 1,
            },
        ];
        let ex = example(&["Brussels"]);
        let rec = reason_record(&store, &prompts, &ex, &paths).unwrap().unwrap();
        assert_eq!(
            rec.prompt,
            render_answer_prompt(&prompts, &store, &ex.question, &paths).unwrap()
        );
        let tail = &rec.prompt[rec.prompt.find("Reasoning Paths and their scores:").unwrap()..];
        assert_eq!(tail.matches("Score:").count(), 2);
        assert_eq!(rec.completion, "The answer is Brussels");

        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("reason.jsonl");
        let summary = emit_reason_dataset(&[ex.clone(), ex], &[paths, Vec::new()], &store, &prompts, &out).unwrap();
        assert_eq!(summary, EmitSummary { written: 1, skipped: 1 });
    }
}
