//! Grounding weighted plans into scored evidence paths.
//!
//! For every (topic, plan) pair the plan induces a path tree: layer `i`
//! holds every entity reachable from the topic after `i` relations. Each
//! layer entity is scored against the question using the triples around
//! it, and only the top-S entities of each layer survive. Evidence paths
//! are the full-length chains that stay inside the survivors at every hop;
//! a path's aggregate score is the product of its hop scores, optionally
//! multiplied by the plan weight.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Triple, TripleStore};
use crate::retriever::Subgraph;
use crate::scoring::{clamp_score, rank_order, score_entities, tokens, triple_tokens, ScoredCandidate, ScorerBackend};

/// An entity-free relation sequence with a generator-assigned weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub relations: Vec<String>,
    pub weight: f64,
}

impl Plan {
    pub fn new(relations: Vec<String>, weight: f64) -> Self {
        Self {
            relations,
            weight: clamp_score(weight),
        }
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

/// Weight descending, then shorter first, then relation sequence ascending.
pub fn plan_order(a: &Plan, b: &Plan) -> Ordering {
    b.weight
        .partial_cmp(&a.weight)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.relations.len().cmp(&b.relations.len()))
        .then_with(|| a.relations.cmp(&b.relations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub source: String,
    pub relation: String,
    pub target: String,
    pub hop_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidencePath {
    pub steps: Vec<PathStep>,
    pub aggregate_score: f64,
    /// Index into the plan list handed to the finder.
    pub origin_plan: usize,
}

impl EvidencePath {
    pub fn start(&self) -> Option<&str> {
        self.steps.first().map(|s| s.source.as_str())
    }

    pub fn terminal(&self) -> Option<&str> {
        self.steps.last().map(|s| s.target.as_str())
    }

    pub fn entity_chain(&self) -> Vec<String> {
        let mut chain: Vec<String> = self.steps.first().map(|s| s.source.clone()).into_iter().collect();
        chain.extend(self.steps.iter().map(|s| s.target.clone()));
        chain
    }

    pub fn relations(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.relation.clone()).collect()
    }

    pub fn hop_scores(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.hop_score).collect()
    }

    /// `a → r1 → b → r2 → c`, with entity names mapped through `name`.
    pub fn render_with<'a>(&'a self, name: impl Fn(&'a str) -> &'a str) -> String {
        let mut out = String::new();
        if let Some(first) = self.steps.first() {
            out.push_str(name(&first.source));
        }
        for step in &self.steps {
            out.push_str(" → ");
            out.push_str(&step.relation);
            out.push_str(" → ");
            out.push_str(name(&step.target));
        }
        out
    }

    pub fn render(&self) -> String {
        self.render_with(|e| e)
    }

    pub fn to_record(&self) -> PathRecord {
        PathRecord {
            chain: self.entity_chain(),
            relations: self.relations(),
            hop_scores: self.hop_scores(),
            score: self.aggregate_score,
            plan: self.origin_plan,
        }
    }

    pub fn from_record(record: PathRecord) -> Result<Self> {
        let PathRecord {
            chain,
            relations,
            hop_scores,
            score,
            plan,
        } = record;
        if relations.is_empty() || chain.len() != relations.len() + 1 || hop_scores.len() != relations.len() {
            return Err(Error::Parse {
                line: 0,
                message: "path record needs n relations, n hop scores and n+1 entities".into(),
            });
        }
        let steps = relations
            .into_iter()
            .zip(hop_scores)
            .enumerate()
            .map(|(i, (relation, hop_score))| PathStep {
                source: chain[i].clone(),
                relation,
                target: chain[i + 1].clone(),
                hop_score,
            })
            .collect();
        Ok(Self {
            steps,
            aggregate_score: score,
            origin_plan: plan,
        })
    }
}

/// Path dump line: `{"chain", "relations", "hop_scores", "score", "plan"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub chain: Vec<String>,
    pub relations: Vec<String>,
    pub hop_scores: Vec<f64>,
    pub score: f64,
    pub plan: usize,
}

pub fn write_paths(path: impl AsRef<Path>, paths: &[EvidencePath]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for p in paths {
        serde_json::to_writer(&mut out, &p.to_record())?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_paths(path: impl AsRef<Path>) -> Result<Vec<EvidencePath>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PathRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(EvidencePath::from_record(record).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { line: idx + 1, message },
            other => other,
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinderConfig {
    /// Number of plans consumed (highest weight first).
    pub plan_count: usize,
    /// Entities kept per hop; `None` disables filtering.
    pub width: Option<usize>,
    pub use_plan_weight: bool,
    /// Maximum context triples handed to the entity scorer.
    pub context_cap: usize,
}

impl Default for FinderConfig {
    fn default() -> Self {
        Self {
            plan_count: 6,
            width: Some(3),
            use_plan_weight: true,
            context_cap: 20,
        }
    }
}

impl FinderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.plan_count == 0 {
            return Err(Error::Config("finder.s must be >= 1".into()));
        }
        if self.width == Some(0) {
            return Err(Error::Config("finder.top_s must be >= 1 or `inf`".into()));
        }
        Ok(())
    }
}

/// Product of hop scores, times the plan weight when enabled.
pub fn aggregate_score(hop_scores: &[f64], plan_weight: f64, include_plan_weight: bool) -> f64 {
    let product: f64 = hop_scores.iter().map(|s| clamp_score(*s)).product();
    if include_plan_weight {
        product * clamp_score(plan_weight)
    } else {
        product
    }
}

/// Layers `E_0 = {topic}, E_1, …, E_l` of the path tree induced by `plan`,
/// before any filtering.
pub fn induce_path_tree(subgraph: &Subgraph, topic: &str, plan: &Plan) -> Vec<BTreeSet<String>> {
    let store = subgraph.store();
    let mut layers = vec![BTreeSet::from([topic.to_string()])];
    for rel in &plan.relations {
        let next = store.step(layers.last().expect("non-empty"), rel);
        layers.push(next);
    }
    layers
}

/// Survivors of one (topic, plan) walk, hop by hop.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkTrace {
    pub topic: String,
    pub plan: usize,
    /// `kept[i]` are the entities retained after hop `i + 1`.
    pub kept: Vec<BTreeSet<String>>,
}

#[derive(Debug, Clone)]
pub struct FinderOutput {
    pub paths: Vec<EvidencePath>,
    pub walks: Vec<WalkTrace>,
}

pub fn find_evidence_paths(
    subgraph: &Subgraph,
    question: &str,
    topics: &[String],
    plans: &[Plan],
    config: &FinderConfig,
    backend: &dyn ScorerBackend,
) -> Result<Vec<EvidencePath>> {
    Ok(find_evidence_paths_traced(subgraph, question, topics, plans, config, backend)?.paths)
}

pub fn find_evidence_paths_traced(
    subgraph: &Subgraph,
    question: &str,
    topics: &[String],
    plans: &[Plan],
    config: &FinderConfig,
    backend: &dyn ScorerBackend,
) -> Result<FinderOutput> {
    config.validate()?;
    let mut order: Vec<usize> = (0..plans.len()).collect();
    order.sort_by(|&a, &b| plans[b].weight.partial_cmp(&plans[a].weight).unwrap_or(Ordering::Equal));
    order.truncate(config.plan_count);

    let topics: BTreeSet<&String> = topics.iter().collect();
    let jobs: Vec<(&String, usize)> = topics
        .iter()
        .flat_map(|t| order.iter().map(move |&p| (*t, p)))
        .filter(|(_, p)| !plans[*p].is_empty())
        .collect();

    let walks: Vec<(Vec<EvidencePath>, WalkTrace)> = jobs
        .par_iter()
        .map(|(topic, idx)| walk(subgraph, question, topic, &plans[*idx], *idx, config, backend))
        .collect::<Result<_>>()?;

    let mut best: BTreeMap<(Vec<String>, Vec<String>), EvidencePath> = BTreeMap::new();
    let mut traces = Vec::with_capacity(walks.len());
    for (paths, trace) in walks {
        traces.push(trace);
        for path in paths {
            let key = (path.entity_chain(), path.relations());
            match best.get(&key) {
                Some(kept) if kept.aggregate_score >= path.aggregate_score => {}
                _ => {
                    best.insert(key, path);
                }
            }
        }
    }
    let mut paths: Vec<EvidencePath> = best.into_values().collect();
    sort_paths(&mut paths);
    Ok(FinderOutput { paths, walks: traces })
}

/// Aggregate score descending, then rendered path ascending.
pub fn sort_paths(paths: &mut [EvidencePath]) {
    paths.sort_by(|a, b| {
        b.aggregate_score
            .partial_cmp(&a.aggregate_score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.render().cmp(&b.render()))
    });
}

/// Triples around `entity`, most question-relevant first, rendered with
/// display names.
pub fn entity_context(store: &TripleStore, question: &str, entity: &str, cap: usize) -> Vec<Triple> {
    let q = tokens(question);
    let mut rendered: Vec<(usize, Triple)> = store
        .incident_triples(entity)
        .into_iter()
        .map(|t| {
            let shown = Triple::new(
                store.display_name(&t.head),
                t.relation.clone(),
                store.display_name(&t.tail),
            );
            (q.intersection(&triple_tokens(&shown)).count(), shown)
        })
        .collect();
    rendered.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    rendered.truncate(cap);
    rendered.into_iter().map(|(_, t)| t).collect()
}

fn walk(
    subgraph: &Subgraph,
    question: &str,
    topic: &str,
    plan: &Plan,
    plan_idx: usize,
    config: &FinderConfig,
    backend: &dyn ScorerBackend,
) -> Result<(Vec<EvidencePath>, WalkTrace)> {
    let store = subgraph.store();
    let layers = induce_path_tree(subgraph, topic, plan);
    let mut scores: HashMap<String, f64> = HashMap::new();

    let mut kept: Vec<BTreeSet<String>> = Vec::with_capacity(plan.len());
    let mut survivors = BTreeSet::from([topic.to_string()]);
    for (hop, rel) in plan.relations.iter().enumerate() {
        let layer = &layers[hop + 1];
        let mut ranked = Vec::with_capacity(layer.len());
        for entity in layer {
            let score = match scores.get(entity) {
                Some(s) => *s,
                None => {
                    let context = entity_context(store, question, entity, config.context_cap);
                    let s = score_entities(backend, question, plan, store.display_name(entity), &context)?.score;
                    scores.insert(entity.clone(), s);
                    s
                }
            };
            ranked.push(ScoredCandidate::new(entity.clone(), score));
        }
        ranked.sort_by(rank_order);
        if let Some(width) = config.width {
            ranked.truncate(width);
        }
        let top: BTreeSet<String> = ranked.into_iter().map(|c| c.item).collect();
        let reachable = store.step(&survivors, rel);
        survivors = top.intersection(&reachable).cloned().collect();
        kept.push(survivors.clone());
        if survivors.is_empty() {
            break;
        }
    }

    let mut paths = Vec::new();
    if kept.len() == plan.len() && kept.last().is_some_and(|s| !s.is_empty()) {
        let mut steps = Vec::with_capacity(plan.len());
        extend_paths(
            store, topic, plan, plan_idx, &kept, &scores, config, &mut steps, &mut paths,
        );
    }
    Ok((
        paths,
        WalkTrace {
            topic: topic.to_string(),
            plan: plan_idx,
            kept,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn extend_paths(
    store: &TripleStore,
    from: &str,
    plan: &Plan,
    plan_idx: usize,
    kept: &[BTreeSet<String>],
    scores: &HashMap<String, f64>,
    config: &FinderConfig,
    steps: &mut Vec<PathStep>,
    out: &mut Vec<EvidencePath>,
) {
    let hop = steps.len();
    if hop == plan.len() {
        let hop_scores: Vec<f64> = steps.iter().map(|s| s.hop_score).collect();
        out.push(EvidencePath {
            steps: steps.clone(),
            aggregate_score: aggregate_score(&hop_scores, plan.weight, config.use_plan_weight),
            origin_plan: plan_idx,
        });
        return;
    }
    let rel = &plan.relations[hop];
    for target in store.search_adjacent(from, rel) {
        if !kept[hop].contains(target) {
            continue;
        }
        steps.push(PathStep {
            source: from.to_string(),
            relation: rel.clone(),
            target: target.clone(),
            hop_score: scores[target],
        });
        extend_paths(store, target, plan, plan_idx, kept, scores, config, steps, out);
        steps.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::TripleFormat;
    use crate::scoring::{ConstantScorer, LexicalScorer};

    const NATO_Q: &str = "Where are the NATO headquarters located?";

    fn nato() -> Subgraph {
        let store = TripleStore::parse(
            "NATO\torganization.headquarters\tm.04300hm\n\
             m.04300hm\tmailing_address.citytown\tBrussels\n\
             NATO\torganizations_founded\tNorway\n\
             Norway\tadministrative_divisions\tOslo\n",
            TripleFormat::Tsv,
        )
        .unwrap();
        Subgraph::whole(&store, NATO_Q, &["NATO".to_string()])
    }

    fn hq_plan() -> Plan {
        Plan::new(
            vec!["organization.headquarters".into(), "mailing_address.citytown".into()],
            1.0,
        )
    }

    #[test]
    fn aggregate_examples() {
        assert!((aggregate_score(&[0.9, 0.8], 0.3, false) - 0.72).abs() < 1e-12);
        assert_eq!(aggregate_score(&[], 0.3, false), 1.0);
        assert!((aggregate_score(&[0.5, 0.5], 0.6, true) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn grounds_the_headquarters_plan() {
        let sub = nato();
        let config = FinderConfig {
            width: Some(3),
            ..FinderConfig::default()
        };
        let paths = find_evidence_paths(&sub, NATO_Q, sub.topics(), &[hq_plan()], &config, &LexicalScorer).unwrap();
        assert_eq!(paths.len(), 1);
        let p = &paths[0];
        assert_eq!(p.entity_chain(), ["NATO", "m.04300hm", "Brussels"]);
        let expected = p.steps[0].hop_score * p.steps[1].hop_score;
        assert!((p.aggregate_score - expected).abs() < 1e-12);
        // m.04300hm context mentions NATO and headquarters: 2 of 6 tokens
        assert!((p.steps[0].hop_score - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn dead_plan_contributes_nothing() {
        let sub = nato();
        let plan = Plan::new(vec!["mailing_address.citytown".into()], 1.0);
        let paths = find_evidence_paths(
            &sub,
            NATO_Q,
            sub.topics(),
            &[plan],
            &FinderConfig::default(),
            &LexicalScorer,
        )
        .unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn path_tree_layers() {
        let sub = nato();
        let layers = induce_path_tree(&sub, "NATO", &hq_plan());
        assert_eq!(layers.len(), 3);
        assert_eq!(layers[1], BTreeSet::from(["m.04300hm".to_string()]));
        assert_eq!(layers[2], BTreeSet::from(["Brussels".to_string()]));
        let empty = induce_path_tree(&sub, "NATO", &Plan::new(vec![], 1.0));
        assert_eq!(empty, vec![BTreeSet::from(["NATO".to_string()])]);
    }

    #[test]
    fn width_limits_survivors_and_plan_count_limits_plans() {
        let text: String = (0..6).map(|i| format!("t\tr\tn{i}\n")).collect();
        let store = TripleStore::parse(&text, TripleFormat::Tsv).unwrap();
        let sub = Subgraph::whole(&store, "q", &["t".to_string()]);
        let plans = vec![Plan::new(vec!["r".into()], 0.2), Plan::new(vec!["r".into()], 0.9)];
        let config = FinderConfig {
            plan_count: 1,
            width: Some(2),
            ..FinderConfig::default()
        };
        let out = find_evidence_paths_traced(&sub, "q", sub.topics(), &plans, &config, &ConstantScorer(1.0)).unwrap();
        assert_eq!(out.paths.len(), 2);
        assert!(out.paths.iter().all(|p| p.origin_plan == 1));
        assert_eq!(out.walks.len(), 1);
        assert_eq!(out.walks[0].kept[0].len(), 2);
    }

    #[test]
    fn duplicate_groundings_keep_the_best_score() {
        let store = TripleStore::parse("t\tr\tx\n", TripleFormat::Tsv).unwrap();
        let sub = Subgraph::whole(&store, "q", &["t".to_string()]);
        let plans = vec![Plan::new(vec!["r".into()], 0.4), Plan::new(vec!["r".into()], 0.8)];
        let paths = find_evidence_paths(
            &sub,
            "q",
            sub.topics(),
            &plans,
            &FinderConfig::default(),
            &ConstantScorer(1.0),
        )
        .unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].aggregate_score - 0.8).abs() < 1e-12);
        assert_eq!(paths[0].origin_plan, 1);
    }

    #[test]
    fn record_round_trip() {
        let sub = nato();
        let paths = find_evidence_paths(
            &sub,
            NATO_Q,
            sub.topics(),
            &[hq_plan()],
            &FinderConfig::default(),
            &LexicalScorer,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("paths.jsonl");
        write_paths(&file, &paths).unwrap();
        assert_eq!(read_paths(&file).unwrap(), paths);
        let line = fs::read_to_string(&file).unwrap();
        assert!(line.starts_with("{\"chain\":[\"NATO\",\"m.04300hm\",\"Brussels\"],\"relations\":"));
    }

    #[test]
    fn render_uses_arrows() {
        let p = EvidencePath {
            steps: vec![PathStep {
                source: "a".into(),
                relation: "r".into(),
                target: "b".into(),
                hop_score: 0.5,
            }],
            aggregate_score: 0.5,
            origin_plan: 0,
        };
        assert_eq!(p.render(), "a → r → b");
    }
}
