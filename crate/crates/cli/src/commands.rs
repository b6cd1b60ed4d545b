use std::path::Path;

use serde_json::json;
use vulngraph::datasets::{
    imbalanced_sample, load_jsonl, render_table, synth_corpus, verdict, write_jsonl, CorpusRecord, PatternSet,
};
use vulngraph::frontend::export::{to_dot, to_json};
use vulngraph::frontend::{build_graph, Label, Relation, MAX_NODES};
use vulngraph::pipeline::{ablate, evaluate_records, predict_source, train_records};
use vulngraph::training::{metrics_csv, Checkpoint};

use crate::args::{AblateArgs, EvalArgs, GraphArgs, PredictArgs, SynthArgs, TrainArgs};
use crate::error::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn load_records(path: &Path) -> Result<Vec<CorpusRecord>, CliError> {
    let corpus = load_jsonl(path)?;
    if !corpus.rejections.is_empty() {
        eprintln!("{}: {} line(s) rejected", path.display(), corpus.rejections.len());
    }
    Ok(corpus.records)
}

fn verdict_name(label: Label) -> &'static str {
    match label {
        Label::Vulnerable => "vulnerable",
        Label::Benign => "benign",
    }
}

pub fn graph(args: &GraphArgs) -> Result<(), CliError> {
    let source = read(&args.input)?;
    let graph = build_graph(&source, None, MAX_NODES).map_err(|e| CliError::Domain(e.to_string()))?;
    let relations = args.relations.clone().map_or_else(|| Relation::ALL.to_vec(), |l| l.0);
    let json = serde_json::to_string_pretty(&to_json(&graph, &relations)).expect("serializable");
    if let Some(path) = &args.json {
        write(path, json.as_bytes())?;
    }
    if let Some(path) = &args.dot {
        write(path, to_dot(&graph, &relations))?;
    }
    if args.json.is_none() && args.dot.is_none() {
        println!("{json}");
    }
    Ok(())
}

pub fn train(args: &TrainArgs, threads: usize) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let records = load_records(&args.dataset)?;
    let outcome = train_records(&records, &cfg, threads)?;
    outcome.best.save(&args.checkpoint)?;
    if let Some(path) = &args.metrics {
        write(path, metrics_csv(&outcome.metrics))?;
    }
    let last = outcome.metrics.last().expect("at least one epoch");
    println!(
        "epochs {}  best epoch {}  best val F1 {:.4}  final val acc {:.4}  config {}",
        outcome.epochs_run,
        outcome.best.epoch,
        outcome.best.best_metric,
        last.val_acc,
        cfg.hash()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let mut records = load_records(&args.dataset)?;
    if let Some(rate) = args.positive_rate {
        records = imbalanced_sample(&records, rate, args.sample_seed)?;
    }
    let (_, report) = evaluate_records(&ck, &records)?;
    let report = report.with_tag("eval").with_config_hash(ck.config.hash());
    print!("{}", render_table(std::slice::from_ref(&report)));
    if let Some(path) = &args.report {
        write(path, serde_json::to_string_pretty(&report).expect("serializable"))?;
    }
    Ok(())
}

pub fn ablation(args: &AblateArgs, threads: usize) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let records = load_records(&args.dataset)?;
    let reports = ablate(&records, &cfg, threads)?;
    let table = render_table(&reports);
    print!("{table}");
    if let Some(path) = &args.table {
        write(path, &table)?;
    }
    if let Some(path) = &args.report {
        write(path, serde_json::to_string_pretty(&reports).expect("serializable"))?;
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let mut rows = Vec::new();
    for file in &args.files {
        let source = read(file)?;
        let p = predict_source(&ck, &source).map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))?;
        let v = verdict_name(verdict(p));
        println!("{}\t{p:.6}\t{v}", file.display());
        rows.push(json!({ "file": file.display().to_string(), "probability": p, "verdict": v }));
    }
    if let Some(path) = &args.out {
        write(path, serde_json::to_string_pretty(&rows).expect("serializable"))?;
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.n < 2 || !(args.vuln_fraction > 0.0 && args.vuln_fraction < 1.0) {
        return Err(CliError::Config("need n >= 2 and 0 < vuln-fraction < 1".into()));
    }
    let records = synth_corpus(args.n, args.vuln_fraction, args.seed, PatternSet::default());
    write(&args.out, write_jsonl(&records))
}
