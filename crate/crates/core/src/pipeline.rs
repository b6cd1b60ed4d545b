//! End-to-end steps shared by the command-line tool and the tests.

use thiserror::Error;

use crate::config::RunConfig;
use crate::datasets::{CorpusRecord, DatasetError, EvalReport};
use crate::embedding::{source_tokens, train_skipgram, EmbeddingError, EmbeddingTable, Vocab};
use crate::frontend::{build_graph, CodeGraph, FrontendError, Label, Relation, MAX_NODES};
use crate::model::{predict, ModelError, Sample};
use crate::training::{evaluate_samples, train, Checkpoint, CheckpointError, TrainError, TrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{id}: {source}")]
    Frontend { id: String, source: FrontendError },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub fn graphs_for(records: &[CorpusRecord]) -> Result<Vec<CodeGraph>, PipelineError> {
    records
        .iter()
        .map(|r| {
            build_graph(&r.code, Some(r.label), MAX_NODES)
                .map_err(|source| PipelineError::Frontend { id: r.id.clone(), source })
        })
        .collect()
}

/// Vocabulary and skip-gram table over the lexer tokens of every record.
pub fn fit_embeddings(records: &[CorpusRecord], cfg: &RunConfig) -> Result<(Vocab, EmbeddingTable), PipelineError> {
    let sentences = records.iter().map(|r| source_tokens(&r.code)).collect::<Result<Vec<_>, _>>()?;
    let vocab = Vocab::build(&sentences)?;
    let ids: Vec<Vec<usize>> = sentences.iter().map(|s| vocab.encode(s)).collect();
    let table = train_skipgram(&vocab, &ids, cfg.skipgram());
    Ok((vocab, table))
}

pub fn samples_for(graphs: &[CodeGraph], cfg: &RunConfig, vocab: &Vocab, table: &EmbeddingTable) -> Vec<Sample> {
    graphs.iter().map(|g| Sample::from_graph(g, cfg, vocab, table)).collect()
}

/// Fits embeddings and trains a model on `records`.
pub fn train_records(records: &[CorpusRecord], cfg: &RunConfig, threads: usize) -> Result<TrainOutcome, PipelineError> {
    cfg.validate().map_err(ModelError::from)?;
    let graphs = graphs_for(records)?;
    let (vocab, table) = fit_embeddings(records, cfg)?;
    let samples = samples_for(&graphs, cfg, &vocab, &table);
    Ok(train(&samples, cfg, &vocab, &table, threads)?)
}

/// Samples encoded with a checkpoint's vocabulary and table.
pub fn checkpoint_samples(ck: &Checkpoint, graphs: &[CodeGraph]) -> Vec<Sample> {
    samples_for(graphs, &ck.config, &ck.vocab, &ck.table)
}

/// Metrics of a checkpoint on labelled records.
pub fn evaluate_records(ck: &Checkpoint, records: &[CorpusRecord]) -> Result<(Vec<f64>, EvalReport), PipelineError> {
    let graphs = graphs_for(records)?;
    let samples = checkpoint_samples(ck, &graphs);
    let refs: Vec<&Sample> = samples.iter().collect();
    Ok(evaluate_samples(&ck.params, &ck.config, &refs)?)
}

/// Probability that `source` is vulnerable.
pub fn predict_source(ck: &Checkpoint, source: &str) -> Result<f64, PipelineError> {
    let graph = build_graph(source, None, MAX_NODES)
        .map_err(|source| PipelineError::Frontend { id: "<input>".into(), source })?;
    let sample = Sample::from_graph(&graph, &ck.config, &ck.vocab, &ck.table);
    Ok(predict(&ck.params, &ck.config, &sample)?)
}

/// The six single-relation variants followed by the composite one.
pub fn ablation_configs(base: &RunConfig) -> Vec<(String, RunConfig)> {
    let mut out: Vec<(String, RunConfig)> = Relation::ALL
        .into_iter()
        .map(|r| (r.name().to_string(), RunConfig { relations: vec![r], ..base.clone() }))
        .collect();
    out.push(("Composite".into(), RunConfig { relations: Relation::ALL.to_vec(), ..base.clone() }));
    out
}

/// One validation report per ablation variant, tagged and hashed.
pub fn ablate(records: &[CorpusRecord], base: &RunConfig, threads: usize) -> Result<Vec<EvalReport>, PipelineError> {
    let graphs = graphs_for(records)?;
    let (vocab, table) = fit_embeddings(records, base)?;
    let mut reports = Vec::new();
    for (tag, cfg) in ablation_configs(base) {
        log::info!("ablation {tag}");
        let samples = samples_for(&graphs, &cfg, &vocab, &table);
        let outcome = train(&samples, &cfg, &vocab, &table, threads)?;
        let val: Vec<&Sample> = outcome.val_indices.iter().map(|&i| &samples[i]).collect();
        let (_, report) = evaluate_samples(&outcome.best.params, &cfg, &val)?;
        reports.push(report.with_tag(tag).with_config_hash(cfg.hash()));
    }
    Ok(reports)
}

/// Labels of records, for reports.
pub fn labels(records: &[CorpusRecord]) -> Vec<Label> {
    records.iter().map(|r| r.label).collect()
}
