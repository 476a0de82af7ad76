//! Library-level pipeline over the demo corpus with the offline teacher,
//! cross-checked against the reference oracles.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use forge_core::curate::{balance, canonical_jsonl, dedup_with_stats, normalized_tokens, CurationConfig};
use forge_core::expand::{expand_corpus, ExpansionPlan};
use forge_core::formulate::{build_seed_set, count_by_task};
use forge_core::ingest::{filter_by_action, load_interactions, load_qa_pairs, overlapping_ids, split};
use forge_core::modelio::{Client, MockBackend};
use forge_core::{Action, InstructionPair, Origin, TaskKind};
use forge_oracles::{oracle_dedup_survivors, oracle_group_counts, oracle_max_pairwise_jaccard};

fn demo(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/demo").join(file)
}

fn seeds(seed: u64, per_task: usize) -> Vec<InstructionPair> {
    let records = load_interactions(&demo("interactions.jsonl")).unwrap();
    let qa = load_qa_pairs(&demo("qa.jsonl")).unwrap();
    assert!(records.diagnostics.is_empty() && qa.diagnostics.is_empty());
    let kept = filter_by_action(&records.items);
    assert!(kept.iter().all(|r| r.action != Action::NoAction));
    let rs = split(&kept, 0.8, seed).unwrap();
    assert!(overlapping_ids(&rs).is_empty());
    let qs = split(&qa.items, 0.8, seed).unwrap();
    build_seed_set(&rs.train, &qs.train, per_task, seed).unwrap()
}

fn teacher() -> Client {
    Client::new(Arc::new(MockBackend::synthetic()), "teacher")
}

#[test]
fn seed_set_matches_counting_oracle() {
    let s = seeds(42, 60);
    let tasks: Vec<TaskKind> = s.iter().map(|p| p.task).collect();
    let oracle = oracle_group_counts(&tasks);
    assert_eq!(oracle.len(), 5);
    assert!(oracle.values().all(|&n| n == 60));
    assert_eq!(count_by_task(&s), oracle);
    assert!(s.iter().all(|p| p.provenance.origin == Origin::Seed && p.provenance.is_valid()));
    assert_eq!(canonical_jsonl(&s), canonical_jsonl(&seeds(42, 60)));
    assert_ne!(canonical_jsonl(&s), canonical_jsonl(&seeds(7, 60)));
}

#[test]
fn expansion_dedup_and_balance_agree_with_oracles() {
    // A fifth of the default seed budget keeps the quadratic oracles quick.
    let s = seeds(42, 12);
    let plan = ExpansionPlan { rng_seed: 42, ..ExpansionPlan::default() };
    let expansion = expand_corpus(&teacher(), &s, &plan).unwrap();
    assert!(!expansion.is_partial());
    assert_eq!(expansion.pairs.len(), plan.expected_count(&s));

    let by_id: BTreeMap<&str, &InstructionPair> = s.iter().map(|p| (p.id.as_str(), p)).collect();
    for p in expansion.pairs.iter().filter(|p| p.provenance.origin == Origin::Expanded) {
        assert!(p.provenance.is_valid());
        let seed = by_id[p.provenance.seed_id.as_deref().unwrap()];
        assert_eq!(seed.task, p.task);
    }

    let (unique, stats) = dedup_with_stats(&expansion.pairs, 0.9);
    let tokens: Vec<Vec<String>> = expansion.pairs.iter().map(normalized_tokens).collect();
    let survivors = oracle_dedup_survivors(&tokens, 0.9).unwrap();
    let ids: Vec<&str> = unique.iter().map(|p| p.id.as_str()).collect();
    let want: Vec<&str> = survivors.iter().map(|&i| expansion.pairs[i].id.as_str()).collect();
    assert_eq!(ids, want);
    assert_eq!(stats.exact_removed + stats.near_removed, expansion.pairs.len() - unique.len());

    let cfg = CurationConfig { rng_seed: 42, target_total: 240, ..CurationConfig::default() };
    let dataset = balance(&unique, &cfg).unwrap();
    let tasks: Vec<TaskKind> = dataset.iter().map(|p| p.task).collect();
    assert!(oracle_group_counts(&tasks).values().all(|&n| n == 48));
    let tokens: Vec<Vec<String>> = dataset.iter().map(normalized_tokens).collect();
    let (max, exact) = oracle_max_pairwise_jaccard(&tokens).unwrap();
    assert!(!exact && max < 0.9, "max pairwise Jaccard {max}");
}
