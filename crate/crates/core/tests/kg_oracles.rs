mod common;

use std::collections::BTreeSet;

use common::*;
use eperm_core::finder::{find_evidence_paths, FinderConfig, Plan};
use eperm_core::kg::{Triple, TripleStore};
use eperm_core::retriever::Subgraph;
use eperm_core::scoring::ConstantScorer;
use proptest::prelude::*;

fn start_of(raw: &[Triple], pick: usize) -> String {
    raw[pick % raw.len()].head.clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_index_rebuilds_the_triple_set(seed in any::<u64>()) {
        let (store, raw) = random_store(&mut rng(seed), 20, 5, 60);
        let rebuilt: BTreeSet<Triple> = store.forward_triples().collect();
        let original: BTreeSet<Triple> = raw.into_iter().collect();
        prop_assert_eq!(rebuilt, original);
        prop_assert_eq!(store.directed_entry_count(), 2 * store.len());
    }

    #[test]
    fn adjacency_matches_a_linear_scan(seed in any::<u64>()) {
        let (store, raw) = random_store(&mut rng(seed), 15, 4, 50);
        let labels = directed_labels(&raw);
        for e in store.entities() {
            for r in &labels {
                let got: BTreeSet<String> = store.search_adjacent(e, r).iter().cloned().collect();
                prop_assert_eq!(got, scan_adjacent(&raw, e, r));
                prop_assert!(store.search_adjacent(e, r).windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn plan_execution_matches_walks_and_composes(seed in any::<u64>(), pick in any::<usize>(), split in 0usize..4) {
        let mut r = rng(seed);
        let (store, raw) = random_store(&mut r, 50, 6, 90);
        let start = BTreeSet::from([start_of(&raw, pick)]);
        let plan = random_walk_plan(&mut r, &raw, start.first().unwrap(), 3);
        let got = store.execute_plan(&start, &plan);
        prop_assert_eq!(&got, &walk_endpoints(&raw, &start, &plan));
        let cut = split.min(plan.len());
        let mid = store.execute_plan(&start, &plan[..cut]);
        prop_assert_eq!(store.execute_plan(&mid, &plan[cut..]), got);
        prop_assert_eq!(store.execute_plan::<String>(&start, &[]), start);
    }

    #[test]
    fn enumerated_plans_match_brute_force(seed in any::<u64>(), pick in any::<usize>()) {
        let mut r = rng(seed);
        let (store, raw) = random_store(&mut r, 30, 4, 40);
        let start = BTreeSet::from([start_of(&raw, pick)]);
        let entities: Vec<String> = store.entities().map(str::to_string).collect();
        let targets: BTreeSet<String> = (0..3).map(|i| entities[(pick / 7 + i * 11) % entities.len()].clone()).collect();
        let plans = store.enumerate_plans(&start, &targets, 2);
        let got: BTreeSet<Vec<String>> = plans.iter().map(|p| p.relations.clone()).collect();
        prop_assert_eq!(got.len(), plans.len());
        prop_assert_eq!(&got, &brute_plans(&raw, &start, &targets, 2));
        for p in &plans {
            prop_assert!(!store.execute_plan(&start, &p.relations).is_disjoint(&targets));
        }
        prop_assert!(plans.windows(2).all(|w| (w[0].len(), &w[0].relations) < (w[1].len(), &w[1].relations)));
    }

    #[test]
    fn unfiltered_finder_returns_every_walk(seed in any::<u64>(), pick in any::<usize>()) {
        let mut r = rng(seed);
        let (store, raw) = random_store(&mut r, 25, 4, 70);
        let topic = start_of(&raw, pick);
        let rels = random_walk_plan(&mut r, &raw, &topic, 3);
        prop_assume!(!rels.is_empty());
        let sub = Subgraph::whole(&store, "q", std::slice::from_ref(&topic));
        let config = FinderConfig { width: None, ..FinderConfig::default() };
        let paths = find_evidence_paths(&sub, "q", sub.topics(), &[Plan::new(rels.clone(), 1.0)], &config, &ConstantScorer(1.0)).unwrap();
        let got: BTreeSet<Vec<String>> = paths.iter().map(|p| p.entity_chain()).collect();
        prop_assert_eq!(got.len(), paths.len());
        prop_assert_eq!(got, walk_chains(&raw, &BTreeSet::from([topic]), &rels));
    }
}

#[test]
fn duplicate_lines_collapse() {
    let store = TripleStore::parse("a\tr\tb\na\tr\tb\n", eperm_core::TripleFormat::Tsv).unwrap();
    assert_eq!(store.len(), 1);
}
