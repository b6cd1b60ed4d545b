use vulngraph::config::RunConfig;
use vulngraph::datasets::{load_jsonl, synth_corpus, write_jsonl, PatternSet};
use vulngraph::frontend::{Label, OVERFLOW_EXAMPLE};
use vulngraph::pipeline::{ablation_configs, evaluate_records, predict_source, train_records};
use vulngraph::training::Checkpoint;

fn short_run() -> RunConfig {
    RunConfig { max_epochs: 3, ..RunConfig::desk() }
}

#[test]
fn jsonl_corpus_round_trips_through_the_loader() {
    let records = synth_corpus(30, 0.5, 4, PatternSet::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    std::fs::write(&path, write_jsonl(&records)).unwrap();
    let loaded = load_jsonl(&path).unwrap();
    assert_eq!(loaded.records, records);
    assert_eq!(loaded.graphs.len(), 30);
    assert!(loaded.rejections.is_empty());
}

#[test]
fn checkpoint_reproduces_training_predictions() {
    let records = synth_corpus(60, 0.5, 5, PatternSet::default());
    let outcome = train_records(&records, &short_run(), 1).unwrap();
    assert_eq!(outcome.metrics.len(), 3);
    assert_eq!(outcome.train_indices.len() + outcome.val_indices.len(), 60);

    let restored = Checkpoint::from_bytes(&outcome.best.to_bytes()).unwrap();
    let p = predict_source(&outcome.best, OVERFLOW_EXAMPLE).unwrap();
    assert_eq!(p, predict_source(&restored, OVERFLOW_EXAMPLE).unwrap());
    assert!((0.0..=1.0).contains(&p));

    let (probs, report) = evaluate_records(&restored, &records).unwrap();
    assert_eq!(probs.len(), 60);
    assert_eq!(report.n, 60);
    assert_eq!(report.tp + report.fn_, records.iter().filter(|r| r.label == Label::Vulnerable).count());
}

#[test]
fn training_is_reproducible_across_thread_counts() {
    let records = synth_corpus(40, 0.5, 6, PatternSet::default());
    let a = train_records(&records, &short_run(), 1).unwrap();
    let b = train_records(&records, &short_run(), 3).unwrap();
    assert_eq!(a.best.to_bytes(), b.best.to_bytes());
}

#[test]
fn ablation_configs_cover_each_relation_then_the_composite() {
    let configs = ablation_configs(&RunConfig::desk());
    assert_eq!(configs.len(), 7);
    assert!(configs[..6].iter().all(|(_, c)| c.relations.len() == 1));
    assert_eq!(configs[6].0, "Composite");
    assert_eq!(configs[6].1.relations.len(), 6);
}
