//! Synthetic workloads for the benchmarks.

use eperm_core::{QaExample, Triple, TripleStore};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "river", "city", "founded", "capital", "team", "player", "located", "country", "language", "born",
];

/// A seeded random graph serialised as TSV, plus one question per topic.
pub struct Workload {
    pub tsv: String,
    pub store: TripleStore,
    pub questions: Vec<QaExample>,
}

pub fn workload(seed: u64, entities: usize, relations: usize, triples: usize, questions: usize) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = |rng: &mut ChaCha8Rng| WORDS[rng.random_range(0..WORDS.len())];
    let relation_names: Vec<String> = (0..relations)
        .map(|i| format!("{}.{}_{i}", word(&mut rng), word(&mut rng)))
        .collect();
    let raw: Vec<Triple> = (0..triples)
        .map(|_| {
            Triple::new(
                format!("e{}", rng.random_range(0..entities)),
                relation_names[rng.random_range(0..relations)].clone(),
                format!("e{}", rng.random_range(0..entities)),
            )
        })
        .collect();
    let tsv: String = raw
        .iter()
        .map(|t| format!("{}\t{}\t{}\n", t.head, t.relation, t.tail))
        .collect();
    let questions = (0..questions)
        .map(|i| {
            let t = &raw[rng.random_range(0..raw.len())];
            let words: Vec<&str> = (0..4).map(|_| word(&mut rng)).collect();
            QaExample {
                id: format!("q{i}"),
                question: format!("{}?", words.join(" ")),
                topic_entities: vec![t.head.clone()],
                answers: vec![t.tail.clone()],
            }
        })
        .collect();
    let store = TripleStore::from_triples(raw).expect("non-empty workload");
    Workload { tsv, store, questions }
}
