//! Run configuration: a sectioned `key = value` file whose every key can
//! also be set by dotted name (`retriever.k = 4`).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::finder::FinderConfig;
use crate::kg::{load_dataset, QaExample, TripleFormat, TripleStore};
use crate::llm::client::{ChatClient, EndpointConfig, HttpChatClient, RecordingClient, ReplayClient};
use crate::llm::remote::RemoteScorer;
use crate::llm::template::PromptSet;
use crate::pipeline::Pipeline;
use crate::plans::{PlanFile, PlanSource};
use crate::predictor::{Grouping, Predictor, Strategy};
use crate::retriever::RetrievalConfig;
use crate::scoring::{LexicalScorer, ScorerBackend};
use crate::training::DEFAULT_THRESHOLD;

/// Every accepted key, in file order.
pub const KEYS: &[&str] = &[
    "data.kg",
    "data.format",
    "data.labels",
    "data.dataset",
    "retriever.k",
    "retriever.depth",
    "retriever.max_frontier",
    "plans.source",
    "plans.file",
    "plans.max_len",
    "finder.enabled",
    "finder.s",
    "finder.top_s",
    "finder.use_plan_weight",
    "finder.context_cap",
    "predictor.strategy",
    "predictor.group",
    "train.t",
    "train.max_plan_len",
    "endpoint.url",
    "endpoint.model",
    "endpoint.timeout_secs",
    "endpoint.retries",
    "endpoint.backoff_ms",
    "endpoint.concurrency",
    "endpoint.parse_retries",
    "endpoint.trace",
    "endpoint.replay",
    "endpoint.record",
    "endpoint.prompts",
    "run.seed",
    "run.workers",
    "run.backend",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Lexical,
    Remote,
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lexical" => Ok(Backend::Lexical),
            "remote" => Ok(Backend::Remote),
            other => Err(Error::Config(format!(
                "unknown backend `{other}` (expected lexical or remote)"
            ))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Lexical => "lexical",
            Backend::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlanSourceKind {
    #[default]
    KgHeuristic,
    File,
    Remote,
}

impl FromStr for PlanSourceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kg-heuristic" | "kg_heuristic" | "heuristic" => Ok(PlanSourceKind::KgHeuristic),
            "file" => Ok(PlanSourceKind::File),
            "remote" => Ok(PlanSourceKind::Remote),
            other => Err(Error::Config(format!("unknown plan source `{other}`"))),
        }
    }
}

impl fmt::Display for PlanSourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanSourceKind::KgHeuristic => "kg-heuristic",
            PlanSourceKind::File => "file",
            PlanSourceKind::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kg: Option<PathBuf>,
    pub format: TripleFormat,
    pub labels: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub retrieval: RetrievalConfig,
    pub plan_source: PlanSourceKind,
    pub plan_file: Option<PathBuf>,
    /// Longest heuristic plan; defaults to the retrieval depth.
    pub plan_max_len: Option<usize>,
    pub finder_enabled: bool,
    pub finder: FinderConfig,
    pub strategy: Strategy,
    pub group: Grouping,
    pub train_t: f64,
    pub train_max_plan_len: usize,
    pub endpoint_url: String,
    pub endpoint_model: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub concurrency: usize,
    pub parse_retries: u32,
    pub trace: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub backend: Backend,
}

impl Default for RunConfig {
    fn default() -> Self {
        let endpoint = EndpointConfig::default();
        Self {
            kg: None,
            format: TripleFormat::Tsv,
            labels: None,
            dataset: None,
            retrieval: RetrievalConfig::default(),
            plan_source: PlanSourceKind::default(),
            plan_file: None,
            plan_max_len: None,
            finder_enabled: true,
            finder: FinderConfig::default(),
            strategy: Strategy::Aggregate,
            group: Grouping::Max,
            train_t: DEFAULT_THRESHOLD,
            train_max_plan_len: 2,
            endpoint_url: endpoint.url,
            endpoint_model: endpoint.model,
            timeout_secs: endpoint.timeout.as_secs(),
            retries: endpoint.retries,
            backoff_ms: endpoint.backoff.as_millis() as u64,
            concurrency: endpoint.concurrency,
            parse_retries: 1,
            trace: None,
            replay: None,
            record: None,
            prompts: None,
            seed: 0,
            workers: None,
            backend: Backend::Lexical,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: `{value}` is not a valid number")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: `{value}` is not a boolean"))),
    }
}

/// `inf` (or `none`) disables the bound.
pub fn parse_width(value: &str) -> Result<Option<usize>> {
    match value.trim().to_ascii_lowercase().as_str() {
        "inf" | "none" | "unbounded" => Ok(None),
        v => parse_num::<usize>("finder.top_s", v).map(Some),
    }
}

fn resolve(base: &Path, value: &str) -> Option<PathBuf> {
    let v = value.trim();
    if v.is_empty() {
        return None;
    }
    let p = Path::new(v);
    Some(if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
}

fn show(path: &Option<PathBuf>) -> String {
    path.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::default();
        cfg.apply_text(&text, &base)?;
        Ok(cfg)
    }

    /// Applies `[section]` / `key = value` lines. Relative paths resolve
    /// against `base`.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let at = |message: String| Error::Config(format!("line {}: {message}", idx + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at("unclosed section header".into()))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let dotted = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            self.set(&dotted, value.trim(), base).map_err(|e| match e {
                Error::Config(m) => at(m),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Sets one dotted key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        match key {
            "data.kg" => self.kg = resolve(base, value),
            "data.format" => self.format = value.parse()?,
            "data.labels" => self.labels = resolve(base, value),
            "data.dataset" => self.dataset = resolve(base, value),
            "retriever.k" => self.retrieval.k = parse_num(key, value)?,
            "retriever.depth" => self.retrieval.depth = parse_num(key, value)?,
            "retriever.max_frontier" => self.retrieval.max_frontier = parse_num(key, value)?,
            "plans.source" => self.plan_source = value.parse()?,
            "plans.file" => self.plan_file = resolve(base, value),
            "plans.max_len" => {
                self.plan_max_len = if value.trim().is_empty() {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "finder.enabled" => self.finder_enabled = parse_bool(key, value)?,
            "finder.s" => self.finder.plan_count = parse_num(key, value)?,
            "finder.top_s" => self.finder.width = parse_width(value)?,
            "finder.use_plan_weight" => self.finder.use_plan_weight = parse_bool(key, value)?,
            "finder.context_cap" => self.finder.context_cap = parse_num(key, value)?,
            "predictor.strategy" => self.strategy = value.parse()?,
            "predictor.group" => self.group = value.parse()?,
            "train.t" => self.train_t = parse_num(key, value)?,
            "train.max_plan_len" => self.train_max_plan_len = parse_num(key, value)?,
            "endpoint.url" => self.endpoint_url = value.trim().to_string(),
            "endpoint.model" => self.endpoint_model = value.trim().to_string(),
            "endpoint.timeout_secs" => self.timeout_secs = parse_num(key, value)?,
            "endpoint.retries" => self.retries = parse_num(key, value)?,
            "endpoint.backoff_ms" => self.backoff_ms = parse_num(key, value)?,
            "endpoint.concurrency" => self.concurrency = parse_num(key, value)?,
            "endpoint.parse_retries" => self.parse_retries = parse_num(key, value)?,
            "endpoint.trace" => self.trace = resolve(base, value),
            "endpoint.replay" => self.replay = resolve(base, value),
            "endpoint.record" => self.record = resolve(base, value),
            "endpoint.prompts" => self.prompts = resolve(base, value),
            "run.seed" => self.seed = parse_num(key, value)?,
            "run.workers" => {
                let n: usize = parse_num(key, value)?;
                self.workers = (n > 0).then_some(n);
            }
            "run.backend" => self.backend = value.parse()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.retrieval.validate()?;
        self.finder.validate()?;
        if !(0.0..=1.0).contains(&self.train_t) {
            return Err(Error::Config(format!(
                "train.t must lie in [0, 1], got {}",
                self.train_t
            )));
        }
        if self.train_max_plan_len == 0 {
            return Err(Error::Config("train.max_plan_len must be >= 1".into()));
        }
        if self.plan_max_len == Some(0) {
            return Err(Error::Config("plans.max_len must be >= 1".into()));
        }
        if self.plan_source == PlanSourceKind::File && self.plan_file.is_none() {
            return Err(Error::Config("plans.source = file needs plans.file".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("endpoint.concurrency must be >= 1".into()));
        }
        Ok(())
    }

    /// Every key with its effective value.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let values: Vec<String> = vec![
            show(&self.kg),
            format!("{:?}", self.format).to_lowercase(),
            show(&self.labels),
            show(&self.dataset),
            self.retrieval.k.to_string(),
            self.retrieval.depth.to_string(),
            self.retrieval.max_frontier.to_string(),
            self.plan_source.to_string(),
            show(&self.plan_file),
            self.plan_max_len.map(|n| n.to_string()).unwrap_or_default(),
            self.finder_enabled.to_string(),
            self.finder.plan_count.to_string(),
            crate::eval::format_width(self.finder.width),
            self.finder.use_plan_weight.to_string(),
            self.finder.context_cap.to_string(),
            self.strategy.to_string(),
            self.group.to_string(),
            self.train_t.to_string(),
            self.train_max_plan_len.to_string(),
            self.endpoint_url.clone(),
            self.endpoint_model.clone(),
            self.timeout_secs.to_string(),
            self.retries.to_string(),
            self.backoff_ms.to_string(),
            self.concurrency.to_string(),
            self.parse_retries.to_string(),
            show(&self.trace),
            show(&self.replay),
            show(&self.record),
            show(&self.prompts),
            self.seed.to_string(),
            self.workers.map(|n| n.to_string()).unwrap_or_else(|| "0".into()),
            self.backend.to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    pub fn load_store(&self) -> Result<TripleStore> {
        let kg = self
            .kg
            .as_ref()
            .ok_or_else(|| Error::Config("data.kg is not set".into()))?;
        let store = TripleStore::load(kg, self.format)?;
        match &self.labels {
            Some(labels) => store.with_labels_file(labels),
            None => Ok(store),
        }
    }

    pub fn load_dataset(&self) -> Result<Vec<QaExample>> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("data.dataset is not set".into()))?;
        load_dataset(path)
    }

    pub fn endpoint(&self) -> EndpointConfig {
        EndpointConfig {
            url: self.endpoint_url.clone(),
            model: self.endpoint_model.clone(),
            timeout: Duration::from_secs(self.timeout_secs),
            retries: self.retries,
            backoff: Duration::from_millis(self.backoff_ms),
            concurrency: self.concurrency,
            seed: self.seed,
            trace: self.trace.clone(),
        }
    }

    pub fn prompt_set(&self) -> Result<PromptSet> {
        match &self.prompts {
            Some(dir) => Ok(PromptSet::from_dir(dir)?),
            None => Ok(PromptSet::default()),
        }
    }

    /// The chat client: a replay file when configured, otherwise HTTP,
    /// optionally recording every exchange.
    pub fn chat_client(&self) -> Result<Arc<dyn ChatClient>> {
        let inner: Arc<dyn ChatClient> = match &self.replay {
            Some(path) => Arc::new(ReplayClient::load(path)?),
            None => Arc::new(HttpChatClient::new(self.endpoint())?),
        };
        Ok(match &self.record {
            Some(path) => Arc::new(RecordingClient::new(inner, path)?),
            None => inner,
        })
    }

    fn needs_client(&self) -> bool {
        self.backend == Backend::Remote
            || self.strategy == Strategy::Remote
            || self.plan_source == PlanSourceKind::Remote
    }

    pub fn pipeline(&self, store: Arc<TripleStore>) -> Result<Pipeline> {
        self.validate()?;
        let prompts = Arc::new(self.prompt_set()?);
        let client = if self.needs_client() {
            Some(self.chat_client()?)
        } else {
            None
        };
        let client_or_err = || client.clone().ok_or_else(|| Error::Config("no chat client".into()));

        let scorer: Arc<dyn ScorerBackend> = match self.backend {
            Backend::Lexical => Arc::new(LexicalScorer),
            Backend::Remote => Arc::new(RemoteScorer::new(client_or_err()?, prompts.clone(), self.parse_retries)),
        };
        let plan_source = match self.plan_source {
            PlanSourceKind::KgHeuristic => PlanSource::KgHeuristic {
                max_len: self.plan_max_len.unwrap_or(self.retrieval.depth),
            },
            PlanSourceKind::File => {
                let path = self.plan_file.as_ref().expect("validated");
                PlanSource::File(Arc::new(PlanFile::load(path)?))
            }
            PlanSourceKind::Remote => PlanSource::Remote {
                client: client_or_err()?,
                prompts: prompts.clone(),
                parse_retries: self.parse_retries,
            },
        };
        let predictor = match self.strategy {
            Strategy::Aggregate => Predictor::Aggregate { group: self.group },
            Strategy::Remote => Predictor::Remote {
                client: client_or_err()?,
                prompts,
                group: self.group,
            },
        };
        Ok(Pipeline {
            store,
            scorer,
            plan_source,
            predictor,
            retrieval: self.retrieval,
            finder: self.finder,
            finder_enabled: self.finder_enabled,
        })
    }
}
