use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use eperm_core::config::parse_width;
use eperm_core::eval::{evaluate, sweep as run_sweep, sweep_csv, sweep_table};
use eperm_core::finder::{read_paths, write_paths, EvidencePath, PathRecord};
use eperm_core::llm::remote::format_score;
use eperm_core::plans::{write_plan_file, PlanEntry, PlanFile};
use eperm_core::training::{emit_find_dataset, emit_reason_dataset};
use eperm_core::{Error, Prediction, QaExample, Result, RunConfig, Subgraph, TripleStore};
use rayon::prelude::*;

use crate::QuestionArgs;

fn print_out(text: &str) -> Result<()> {
    io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn resolve_question(cfg: &RunConfig, q: &QuestionArgs) -> Result<QaExample> {
    if let Some(id) = &q.id {
        let data = cfg.load_dataset()?;
        let mut ex = data
            .into_iter()
            .find(|e| &e.id == id)
            .ok_or_else(|| Error::Config(format!("no dataset entry with id `{id}`")))?;
        if let Some(text) = &q.question {
            ex.question = text.clone();
        }
        if !q.topics.is_empty() {
            ex.topic_entities = q.topics.clone();
        }
        return Ok(ex);
    }
    let question = q
        .question
        .clone()
        .ok_or_else(|| Error::Config("give --question and --topic, or --id".into()))?;
    if q.topics.is_empty() {
        return Err(Error::Config("at least one --topic is required".into()));
    }
    Ok(QaExample {
        id: "q".into(),
        question,
        topic_entities: q.topics.clone(),
        answers: Vec::new(),
    })
}

fn answer_name(store: &TripleStore, id: &str) -> String {
    match store.label(id) {
        Some(label) if label != id => format!("{label} [{id}]"),
        _ => id.to_string(),
    }
}

fn render_prediction(store: &TripleStore, prediction: &Prediction) -> String {
    let mut out = String::new();
    if prediction.answers.is_empty() {
        out.push_str("no answer\n");
    }
    for (rank, a) in prediction.answers.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\n",
            rank + 1,
            answer_name(store, &a.answer),
            a.confidence
        ));
    }
    out
}

fn render_paths(store: &TripleStore, paths: &[EvidencePath]) -> String {
    let mut out = String::new();
    for p in paths {
        let hops: Vec<String> = p.hop_scores().iter().map(|s| format_score(*s)).collect();
        out.push_str(&format!(
            "{}  hops=[{}]  score={:.6}\n",
            p.render_with(|e| store.display_name(e)),
            hops.join(", "),
            p.aggregate_score
        ));
    }
    out
}

pub fn answer(cfg: &RunConfig, q: &QuestionArgs, from_paths: Option<&Path>, explain: bool) -> Result<()> {
    let store = Arc::new(cfg.load_store()?);
    let pipeline = cfg.pipeline(store.clone())?;
    let (prediction, paths) = match from_paths {
        Some(file) => {
            // Topics are already baked into the paths; only the text matters.
            let question = match (&q.question, &q.id) {
                (_, Some(_)) => resolve_question(cfg, q)?.question,
                (Some(text), None) => text.clone(),
                (None, None) => String::new(),
            };
            let paths = read_paths(file)?;
            (pipeline.predict(&question, &paths)?, paths)
        }
        None => {
            let ex = resolve_question(cfg, q)?;
            let run = pipeline.run(&ex.id, &ex.question, &ex.topic_entities)?;
            (run.prediction, run.paths)
        }
    };
    let mut text = render_prediction(&store, &prediction);
    if explain {
        text.push_str("\nevidence paths:\n");
        text.push_str(&render_paths(&store, &paths));
    }
    print_out(&text)
}

pub fn retrieve(cfg: &RunConfig, q: &QuestionArgs, out: Option<&Path>) -> Result<()> {
    let store = Arc::new(cfg.load_store()?);
    let pipeline = cfg.pipeline(store)?;
    let ex = resolve_question(cfg, q)?;
    let sub = pipeline.retrieve(&ex.question, &ex.topic_entities)?;
    match out {
        Some(path) => {
            sub.save(path)?;
            eprintln!("{} triples -> {}", sub.len(), path.display());
            Ok(())
        }
        None => print_out(&(serde_json::to_string_pretty(&sub.to_file())? + "\n")),
    }
}

pub fn plans(cfg: &RunConfig, subgraph: &Path, id: &str, out: Option<&Path>) -> Result<()> {
    let store = Arc::new(cfg.load_store()?);
    let pipeline = cfg.pipeline(store)?;
    let sub = Subgraph::load(subgraph)?;
    let plans = pipeline.plans(id, sub.question(), &sub)?;
    let entry = PlanEntry {
        id: id.to_string(),
        plans,
    };
    match out {
        Some(path) => write_plan_file(path, &[entry]),
        None => print_out(&(serde_json::to_string(&entry)? + "\n")),
    }
}

pub fn paths(
    cfg: &RunConfig,
    subgraph: &Path,
    plans: &Path,
    id: &str,
    out: Option<&Path>,
    explain: bool,
) -> Result<()> {
    let store = Arc::new(cfg.load_store()?);
    let pipeline = cfg.pipeline(store)?;
    let sub = Subgraph::load(subgraph)?;
    let file = PlanFile::load(plans)?;
    let plans = file.get(id).ok_or_else(|| Error::MissingPlans(id.to_string()))?;
    let mut plans = plans.to_vec();
    plans.truncate(cfg.finder.plan_count);
    let (found, _) = pipeline.paths(&sub, &plans)?;
    if explain {
        eprint!("{}", render_paths(sub.store(), &found));
    }
    match out {
        Some(path) => write_paths(path, &found),
        None => {
            let mut text = String::new();
            for p in &found {
                let record: PathRecord = p.to_record();
                text.push_str(&serde_json::to_string(&record)?);
                text.push('\n');
            }
            print_out(&text)
        }
    }
}

pub fn emit_train(cfg: &RunConfig, find_out: &Path, reason_out: &Path) -> Result<()> {
    let store = Arc::new(cfg.load_store()?);
    let data = cfg.load_dataset()?;
    let prompts = cfg.prompt_set()?;
    let find = emit_find_dataset(&data, &store, &prompts, cfg.train_t, cfg.train_max_plan_len, find_out)?;

    let pipeline = cfg.pipeline(store.clone())?;
    let paths: Vec<Vec<EvidencePath>> = data
        .par_iter()
        .map(|ex| match pipeline.run_example(ex) {
            Ok(run) => run.paths,
            Err(e) => {
                log::warn!("question {}: {e}", ex.id);
                Vec::new()
            }
        })
        .collect();
    let reason = emit_reason_dataset(&data, &paths, &store, &prompts, reason_out)?;
    print_out(&format!(
        "find: {} written, {} skipped\nreason: {} written, {} skipped\n",
        find.written, find.skipped, reason.written, reason.skipped
    ))
}

pub fn eval(cfg: &RunConfig, report: Option<&Path>) -> Result<()> {
    let store = Arc::new(cfg.load_store()?);
    let pipeline = cfg.pipeline(store)?;
    let data = cfg.load_dataset()?;
    let result = evaluate(&pipeline, &data, cfg.snapshot());
    let json = result.to_json()?;
    match report {
        Some(path) => {
            fs::write(path, &json).map_err(|e| Error::io(path, e))?;
            print_out(&result.summary_table())
        }
        None => {
            eprint!("{}", result.summary_table());
            print_out(&json)
        }
    }
}

pub fn sweep(cfg: &RunConfig, s_values: &[usize], widths: &[String], csv: Option<&Path>) -> Result<()> {
    let store = Arc::new(cfg.load_store()?);
    let pipeline = cfg.pipeline(store)?;
    let data = cfg.load_dataset()?;
    let widths: Vec<Option<usize>> = widths.iter().map(|w| parse_width(w)).collect::<Result<_>>()?;
    let cells = run_sweep(&pipeline, &data, &cfg.snapshot(), s_values, &widths)?;
    let table = sweep_table(&cells);
    let text = sweep_csv(&cells);
    match csv {
        Some(path) => {
            fs::write(path, &text).map_err(|e| Error::io(path, e))?;
            print_out(&table)
        }
        None => {
            eprint!("{table}");
            print_out(&text)
        }
    }
}
