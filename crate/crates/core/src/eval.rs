//! Hits@1 / F1 evaluation and (s, S) sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{QaExample, TripleStore};
use crate::pipeline::Pipeline;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `predicted` against `gold`.
///
/// A prediction counts as correct if it matches some gold answer by id or
/// case-insensitive label. Empty against empty scores 1 throughout; an
/// empty prediction against non-empty gold scores 0.
pub fn set_scores(store: &TripleStore, predicted: &[String], gold: &[String]) -> SetScores {
    if predicted.is_empty() && gold.is_empty() {
        return SetScores {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let hit = |p: &String| gold.iter().any(|g| store.matches_answer(p, g));
    let found = |g: &String| predicted.iter().any(|p| store.matches_answer(p, g));
    let precision = if predicted.is_empty() {
        0.0
    } else {
        predicted.iter().filter(|p| hit(p)).count() as f64 / predicted.len() as f64
    };
    let recall = if gold.is_empty() {
        1.0
    } else {
        gold.iter().filter(|g| found(g)).count() as f64 / gold.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SetScores { precision, recall, f1 }
}

/// Whether the rank-1 prediction is a gold answer. No prediction is a miss.
pub fn hit_at_1(store: &TripleStore, predicted: &[String], gold: &[String]) -> bool {
    predicted
        .first()
        .is_some_and(|top| gold.iter().any(|g| store.matches_answer(top, g)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
    pub correct: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl QuestionResult {
    pub fn scored(store: &TripleStore, id: &str, predicted: Vec<String>, gold: &[String]) -> Self {
        let s = set_scores(store, &predicted, gold);
        Self {
            id: id.to_string(),
            correct: hit_at_1(store, &predicted, gold),
            predicted,
            gold: gold.to_vec(),
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            error: None,
        }
    }

    pub fn failed(id: &str, gold: &[String], error: String) -> Self {
        Self {
            id: id.to_string(),
            predicted: Vec::new(),
            gold: gold.to_vec(),
            correct: false,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hits_at_1: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub questions: usize,
    pub errors: usize,
    pub per_question: Vec<QuestionResult>,
    pub config: BTreeMap<String, String>,
}

impl EvalReport {
    /// Macro averages over `per_question`; all zero for an empty list.
    pub fn from_results(per_question: Vec<QuestionResult>, config: BTreeMap<String, String>) -> Self {
        let n = per_question.len();
        let mean = |f: &dyn Fn(&QuestionResult) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_question.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            hits_at_1: mean(&|q| if q.correct { 1.0 } else { 0.0 }),
            f1: mean(&|q| q.f1),
            precision: mean(&|q| q.precision),
            recall: mean(&|q| q.recall),
            questions: n,
            errors: per_question.iter().filter(|q| q.error.is_some()).count(),
            per_question,
            config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "questions  {}", self.questions);
        let _ = writeln!(out, "errors     {}", self.errors);
        let _ = writeln!(out, "hits@1     {:.4}", self.hits_at_1);
        let _ = writeln!(out, "f1         {:.4}", self.f1);
        let _ = writeln!(out, "precision  {:.4}", self.precision);
        let _ = writeln!(out, "recall     {:.4}", self.recall);
        out
    }
}

/// Runs the pipeline on every example. Failures are recorded per question.
pub fn evaluate(pipeline: &Pipeline, dataset: &[QaExample], config: BTreeMap<String, String>) -> EvalReport {
    let results: Vec<QuestionResult> = dataset
        .par_iter()
        .map(|ex| match pipeline.run_example(ex) {
            Ok(run) => QuestionResult::scored(&pipeline.store, &ex.id, run.prediction.answer_ids(), &ex.answers),
            Err(e) => {
                log::warn!("question {} failed: {e}", ex.id);
                QuestionResult::failed(&ex.id, &ex.answers, e.to_string())
            }
        })
        .collect();
    EvalReport::from_results(results, config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub s: usize,
    /// `None` means no per-hop filtering.
    pub width: Option<usize>,
    pub report: EvalReport,
}

pub fn format_width(width: Option<usize>) -> String {
    width.map_or_else(|| "inf".to_string(), |w| w.to_string())
}

/// One report per `(s, S)` pair, `s` varying slowest.
pub fn sweep(
    pipeline: &Pipeline,
    dataset: &[QaExample],
    config: &BTreeMap<String, String>,
    s_values: &[usize],
    widths: &[Option<usize>],
) -> Result<Vec<SweepCell>> {
    if s_values.is_empty() || widths.is_empty() {
        return Err(Error::Config("sweep needs at least one s and one S value".into()));
    }
    let mut cells = Vec::with_capacity(s_values.len() * widths.len());
    for &s in s_values {
        for &width in widths {
            let mut p = pipeline.clone();
            p.finder.plan_count = s;
            p.finder.width = width;
            p.validate()?;
            let mut snapshot = config.clone();
            snapshot.insert("finder.s".into(), s.to_string());
            snapshot.insert("finder.top_s".into(), format_width(width));
            cells.push(SweepCell {
                s,
                width,
                report: evaluate(&p, dataset, snapshot),
            });
        }
    }
    Ok(cells)
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("s,S,hits_at_1,f1,precision,recall\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            c.s,
            format_width(c.width),
            c.report.hits_at_1,
            c.report.f1,
            c.report.precision,
            c.report.recall
        );
    }
    out
}

pub fn sweep_table(cells: &[SweepCell]) -> String {
    let mut out = format!(
        "{:>4} {:>4} {:>8} {:>8} {:>9} {:>8}\n",
        "s", "S", "hits@1", "f1", "precision", "recall"
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{:>4} {:>4} {:>8.4} {:>8.4} {:>9.4} {:>8.4}",
            c.s,
            format_width(c.width),
            c.report.hits_at_1,
            c.report.f1,
            c.report.precision,
            c.report.recall
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::TripleFormat;

    fn store() -> TripleStore {
        TripleStore::parse("x\tr\tA\nx\tr\tB\n", TripleFormat::Tsv)
            .unwrap()
            .with_labels([("A".to_string(), "Alpha".to_string())].into())
    }

    fn v(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_predictions_one_gold() {
        let s = set_scores(&store(), &v(&["A", "B"]), &v(&["A"]));
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_conventions() {
        let st = store();
        assert_eq!(set_scores(&st, &[], &[]).f1, 1.0);
        assert_eq!(set_scores(&st, &[], &v(&["A"])).f1, 0.0);
        assert_eq!(set_scores(&st, &v(&["A"]), &[]).f1, 0.0);
        assert!(!hit_at_1(&st, &[], &v(&["A"])));
    }

    #[test]
    fn label_matching_is_case_insensitive() {
        let st = store();
        assert!(hit_at_1(&st, &v(&["A"]), &v(&["ALPHA"])));
        assert!(!hit_at_1(&st, &v(&["B", "A"]), &v(&["alpha"])));
    }

    #[test]
    fn report_means() {
        let st = store();
        let results = vec![
            QuestionResult::scored(&st, "1", v(&["A"]), &v(&["A"])),
            QuestionResult::scored(&st, "2", v(&["B"]), &v(&["A"])),
            QuestionResult::failed("3", &v(&["A"]), "boom".into()),
        ];
        let r = EvalReport::from_results(results, BTreeMap::new());
        assert!((r.hits_at_1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.errors, 1);
    }

    #[test]
    fn csv_shape() {
        let report = EvalReport::from_results(Vec::new(), BTreeMap::new());
        let cells = vec![
            SweepCell {
                s: 1,
                width: Some(3),
                report: report.clone(),
            },
            SweepCell {
                s: 2,
                width: None,
                report,
            },
        ];
        assert_eq!(
            sweep_csv(&cells),
            "s,S,hits_at_1,f1,precision,recall\n1,3,0.000000,0.000000,0.000000,0.000000\n2,inf,0.000000,0.000000,0.000000,0.000000\n"
        );
    }
}
