//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vulngraph::config::RunConfig;
use vulngraph::datasets::{imbalanced_sample, synth_corpus, write_jsonl, EvalReport, PatternSet};
use vulngraph::frontend::{build_cfg, build_graph, parse_source, Label, Relation, MAX_NODES, OVERFLOW_EXAMPLE};
use vulngraph::ggnn::{ggnn_forward, Adjacency, EdgeType, GgnnParams, GgnnShape};
use vulngraph::model::{forward, ModelParams, Sample};
use vulngraph::pipeline::train_records;
use vulngraph::readout::{ConvHead, FlatHead, Head, ReadoutKind};
use vulngraph_testkit::dataflow::all_paths_dataflow;
use vulngraph_testkit::gradcheck::check_gradients;
use vulngraph_testkit::naive;
use vulngraph_testkit::permute::{permute_rows, permute_sample, random_permutation};
use vulngraph_testkit::programs::{random_function, ProgramConfig};
use vulngraph_testkit::structure::all_violations;

const FD_STEP: f64 = 1e-5;
const FD_MAX_REL: f64 = 1e-6;
/// Denominator floor of the relative error, so entries whose true gradient
/// is below the finite-difference noise are judged on absolute error.
const FD_FLOOR: f64 = 1e-4;
const FLAT_INVARIANCE: f64 = 1e-9;
const GGNN_EQUIVARIANCE: f64 = 1e-6;
const FORWARD_ORACLE: f64 = 1e-10;
const LEARN_TARGET: f64 = 0.90;
const READOUT_MARGIN: f64 = 0.02;
const ABLATION_MARGIN: f64 = 0.05;
/// Epoch cap for the multi-run criteria 7 to 9.
const SWEEP_EPOCHS: usize = 40;

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 11] = [
        (1, "gradient gate", gradient_gate),
        (2, "dataflow oracle", dataflow_oracle),
        (3, "structural invariants", structural_invariants),
        (4, "permutation properties", permutation_properties),
        (5, "forward oracle", forward_oracle),
        (6, "learnability", learnability),
        (7, "readout comparison", readout_comparison),
        (8, "ablation harness", ablation_harness),
        (9, "imbalanced protocol", imbalanced_protocol),
        (10, "determinism", determinism),
        (11, "full-size configuration smoke", full_size_smoke),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{status} {id:>2} {name}: {detail} [{secs:.1}s]");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    if took < limit {
        Ok(())
    } else {
        Err(format!("{what} took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()))
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn randomize(params: &mut ModelParams, rng: &mut ChaCha8Rng, scale: f64) {
    params.for_each_mut(|_, data| data.iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale)));
}

fn random_label(rng: &mut ChaCha8Rng) -> Label {
    if rng.gen_bool(0.5) {
        Label::Vulnerable
    } else {
        Label::Benign
    }
}

/// Random 5 to 8 node graph with edges of every relation.
fn micro_sample(rng: &mut ChaCha8Rng, d: usize) -> Sample {
    let m = rng.gen_range(5..=8);
    let types = Relation::ALL
        .iter()
        .map(|&relation| {
            let edges = (0..m)
                .flat_map(|s| (0..m).map(move |t| (s, t)))
                .filter(|&(s, t)| s != t)
                .filter(|_| rng.gen_bool(0.25))
                .collect();
            EdgeType { relation, reverse: false, edges }
        })
        .collect();
    Sample::from_features(uniform(rng, (m, d)), Adjacency { m, types }, Some(random_label(rng)))
}

fn gradient_gate() -> Result<String, String> {
    const Z: usize = 8;
    const D: usize = 6;
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut where_ = String::new();
    let mut checked = 0;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let sample = micro_sample(&mut rng, D);
        for readout in [ReadoutKind::Conv, ReadoutKind::Flat] {
            let cfg = RunConfig {
                z: Z,
                time_steps: 2,
                readout,
                m_max: 10,
                mask_padding: true,
                lambda: 0.01,
                relations: Relation::ALL.to_vec(),
                ..RunConfig::desk()
            };
            let ggnn = GgnnParams::init(Z, false, None, &mut rng);
            let head = match readout {
                ReadoutKind::Conv => Head::Conv(ConvHead::init(Z, D, 3, &[4], &mut rng).map_err(|e| e.to_string())?),
                ReadoutKind::Flat => Head::Flat(FlatHead::init(Z, D, &[4], &mut rng)),
            };
            let mut params = ModelParams::from_parts(ggnn, head, None, &cfg.relations);
            randomize(&mut params, &mut rng, 0.5);
            let report = check_gradients(&params, &cfg, &[&sample], FD_STEP, FD_FLOOR);
            checked += report.checked;
            if report.max_rel_error >= worst {
                worst = report.max_rel_error;
                where_ = format!(
                    "{readout} graph {seed} {}[{}] analytic {:.3e} numeric {:.3e}",
                    report.worst.0, report.worst.1, report.analytic, report.numeric
                );
            }
        }
    }
    within(start, Duration::from_secs(30), "gradient check")?;
    ensure(
        worst <= FD_MAX_REL,
        format!("{checked} entries, max rel err {worst:.3e} (bound {FD_MAX_REL:e}) at {where_}"),
    )
}

fn dataflow_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut edges = 0;
    for i in 0..200 {
        let src = random_function(&mut rng, ProgramConfig::loop_free(12));
        let ast = parse_source(&src).map_err(|e| format!("function {i}: {e}"))?;
        let oracle = all_paths_dataflow(&ast, &build_cfg(&ast), 1 << 16)
            .ok_or_else(|| format!("function {i}: path enumeration refused\n{src}"))?;
        let graph = build_graph(&src, None, MAX_NODES).map_err(|e| format!("function {i}: {e}"))?;
        let set = |r: Relation| graph.edges(r).edges().iter().copied().collect::<BTreeSet<_>>();
        for (r, expected) in [(Relation::DfgR, &oracle.last_read), (Relation::DfgW, &oracle.last_write)] {
            let got = set(r);
            if &got != expected {
                let missing: Vec<_> = expected.difference(&got).collect();
                let extra: Vec<_> = got.difference(expected).collect();
                return Err(format!("function {i} {r}: missing {missing:?} extra {extra:?}\n{src}"));
            }
            edges += got.len();
        }
    }
    within(start, Duration::from_secs(60), "dataflow oracle")?;
    Ok(format!("200 functions, {edges} DFG_R/DFG_W edges equal to all-paths enumeration"))
}

fn structural_invariants() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = Vec::new();
    let mut nodes = 0;
    for i in 0..500 {
        let src = random_function(&mut rng, ProgramConfig::with_loops(16));
        let graph = build_graph(&src, None, MAX_NODES).map_err(|e| format!("function {i}: {e}"))?;
        nodes += graph.num_nodes();
        violations.extend(all_violations(&graph).into_iter().map(|v| format!("function {i}: {v}")));
    }
    ensure(
        violations.is_empty(),
        format!("500 functions, {nodes} nodes, {} violations {:?}", violations.len(), violations.iter().take(3).collect::<Vec<_>>()),
    )
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn initial_state(x: &Array2<f64>, z: usize) -> Array2<f64> {
    let pad = Array2::zeros((x.nrows(), z - x.ncols()));
    concatenate(Axis(1), &[x.view(), pad.view()]).expect("same row count")
}

fn permutation_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = RunConfig { readout: ReadoutKind::Flat, mlp_hidden: vec![8], ..RunConfig::desk() };
    let mut params = ModelParams::init(&cfg, None, &mut rng).map_err(|e| e.to_string())?;
    randomize(&mut params, &mut rng, 0.2);
    let shape = GgnnShape { rounds: cfg.time_steps, aggregator: cfg.aggregator };
    let (mut logit_drift, mut state_drift) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let src = random_function(&mut rng, ProgramConfig::with_loops(12));
        let graph = build_graph(&src, None, MAX_NODES).map_err(|e| e.to_string())?;
        let adj = Adjacency::from_graph(&graph, &cfg.relations, cfg.reverse_edges);
        let x = uniform(&mut rng, (graph.num_nodes(), cfg.feature_dim()));
        let sample = Sample::from_features(x, adj, None);
        let base_logit = forward(&params, &cfg, &sample).map_err(|e| e.to_string())?.logit;
        let h0 = initial_state(&sample.x, cfg.z);
        let base_h = ggnn_forward(&h0, &sample.adj, &params.ggnn, shape).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let perm = random_permutation(sample.num_nodes(), &mut rng);
            let moved = permute_sample(&sample, &perm);
            let logit = forward(&params, &cfg, &moved).map_err(|e| e.to_string())?.logit;
            logit_drift = logit_drift.max((logit - base_logit).abs());
            let h0 = initial_state(&moved.x, cfg.z);
            let h = ggnn_forward(&h0, &moved.adj, &params.ggnn, shape).map_err(|e| e.to_string())?;
            state_drift = state_drift.max(max_abs_diff(h.output(), &permute_rows(base_h.output(), &perm)));
        }
    }
    ensure(
        logit_drift <= FLAT_INVARIANCE && state_drift <= GGNN_EQUIVARIANCE,
        format!(
            "400 permutations, flat logit drift {logit_drift:.2e} (bound {FLAT_INVARIANCE:e}), \
             state drift {state_drift:.2e} (bound {GGNN_EQUIVARIANCE:e})"
        ),
    )
}

fn forward_oracle() -> Result<String, String> {
    let graph = build_graph(OVERFLOW_EXAMPLE, None, MAX_NODES).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    let mut worst = 0.0_f64;
    let cases = [
        ("conv masked", ReadoutKind::Conv, true, false),
        ("conv unmasked", ReadoutKind::Conv, false, false),
        ("conv reverse edges", ReadoutKind::Conv, true, true),
        ("flat", ReadoutKind::Flat, true, false),
        ("flat reverse edges", ReadoutKind::Flat, true, true),
    ];
    for (name, readout, mask, reverse_edges) in cases {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = RunConfig {
            readout,
            mask_padding: mask,
            reverse_edges,
            m_max: 64,
            mlp_hidden: vec![6],
            ..RunConfig::desk()
        };
        let mut params = ModelParams::init(&cfg, None, &mut rng).map_err(|e| e.to_string())?;
        randomize(&mut params, &mut rng, 0.3);
        let adj = Adjacency::from_graph(&graph, &cfg.relations, cfg.reverse_edges);
        let x = uniform(&mut rng, (graph.num_nodes(), cfg.feature_dim()));
        let sample = Sample::from_features(x, adj, None);
        let fast = forward(&params, &cfg, &sample).map_err(|e| e.to_string())?;
        let slow = naive::logit(&params, &cfg, &sample);
        let states = naive::states(&params, &cfg, &sample);
        let state_err = fast
            .hidden()
            .outer_iter()
            .zip(&states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        let err = (fast.logit - slow).abs().max(state_err);
        worst = worst.max(err);
        out.push(format!("{name} logit {:.6} err {err:.1e}", fast.logit));
    }
    ensure(worst <= FORWARD_ORACLE, format!("{} (bound {FORWARD_ORACLE:e})", out.join(", ")))
}

fn learnability() -> Result<String, String> {
    let start = Instant::now();
    let records = synth_corpus(400, 0.5, 7, PatternSet::default());
    let cfg = RunConfig::desk();
    let outcome = train_records(&records, &cfg, 1).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(600), "training")?;
    let reached = outcome.metrics.iter().find(|m| m.val_acc >= LEARN_TARGET && m.val_f1 >= LEARN_TARGET);
    let last = outcome.metrics.last().expect("one epoch");
    match reached {
        Some(m) if m.epoch <= 100 => Ok(format!(
            "val acc {:.3} F1 {:.3} at epoch {}, final val acc {:.3} F1 {:.3} after {} epochs (z {}, d {})",
            m.val_acc,
            m.val_f1,
            m.epoch,
            last.val_acc,
            last.val_f1,
            outcome.epochs_run,
            cfg.z,
            cfg.feature_dim()
        )),
        _ => Err(format!("best val acc/F1 never reached {LEARN_TARGET}; final acc {:.3} F1 {:.3}", last.val_acc, last.val_f1)),
    }
}

fn sweep_config(readout: ReadoutKind, seed: u64) -> RunConfig {
    RunConfig { readout, seed, max_epochs: SWEEP_EPOCHS, ..RunConfig::desk() }
}

fn readout_comparison() -> Result<String, String> {
    let records = synth_corpus(400, 0.5, 7, PatternSet::default());
    let mut means = Vec::new();
    let mut runs = Vec::new();
    for readout in [ReadoutKind::Conv, ReadoutKind::Flat] {
        let mut f1s = Vec::new();
        for seed in 1..=3 {
            let outcome = train_records(&records, &sweep_config(readout, seed), 1).map_err(|e| e.to_string())?;
            f1s.push(outcome.best.best_metric);
        }
        runs.push(format!("{readout} {f1s:.3?}"));
        means.push(f1s.iter().sum::<f64>() / 3.0);
    }
    let (conv, flat) = (means[0], means[1]);
    ensure(
        conv >= flat - READOUT_MARGIN,
        format!("mean val F1 conv {conv:.4} flat {flat:.4} (margin {READOUT_MARGIN}); {}", runs.join(", ")),
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vulngraph"))
}

fn run(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("{:?} exited {}: {}", cmd, out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

fn write_synth(dir: &Path, name: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, write_jsonl(&synth_corpus(n, 0.5, seed, PatternSet::default()))).expect("write corpus");
    path
}

fn ablation_harness() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dataset = write_synth(dir.path(), "synth.jsonl", 400, 7);
    let report = dir.path().join("ablation.json");
    let table = run(bin()
        .args(["ablate", "--threads", "1", "--max-epochs", &SWEEP_EPOCHS.to_string(), "--dataset"])
        .arg(&dataset)
        .arg("--report")
        .arg(&report))?;
    let text = std::fs::read_to_string(&report).map_err(|e| e.to_string())?;
    let reports: Vec<EvalReport> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let tags: Vec<&str> = reports.iter().map(|r| r.tag.as_deref().unwrap_or("")).collect();
    let expected = ["AST", "CFG", "NCS", "DFG_R", "DFG_W", "DFG_C", "Composite"];
    if tags != expected {
        return Err(format!("rows {tags:?}, expected {expected:?}"));
    }
    if table.lines().filter(|l| expected.iter().any(|t| l.starts_with(t))).count() != 7 {
        return Err(format!("printed table lacks seven rows:\n{table}"));
    }
    let single = reports[..6].iter().map(|r| r.f1).fold(f64::NEG_INFINITY, f64::max);
    let composite = reports[6].f1;
    let row = reports.iter().map(|r| format!("{} {:.3}", r.tag.as_deref().unwrap_or(""), r.f1)).collect::<Vec<_>>();
    ensure(
        composite >= single - ABLATION_MARGIN,
        format!("composite F1 {composite:.3}, best single {single:.3} (margin {ABLATION_MARGIN}); {}", row.join(", ")),
    )
}

fn imbalanced_protocol() -> Result<String, String> {
    let mut labels = vec![Label::Benign; 90];
    labels.extend([Label::Vulnerable; 10]);
    let baseline = EvalReport::from_probabilities(&labels, &[0.0; 100]);
    if baseline.accuracy != 0.90 || baseline.f1 != 0.0 {
        return Err(format!("all-negative baseline acc {} F1 {}", baseline.accuracy, baseline.f1));
    }
    let pool = synth_corpus(800, 0.5, 11, PatternSet::default());
    let records = imbalanced_sample(&pool, 0.1, 0).map_err(|e| e.to_string())?;
    let positives = records.iter().filter(|r| r.label == Label::Vulnerable).count();
    let outcome = train_records(&records, &sweep_config(ReadoutKind::Conv, 7), 1).map_err(|e| e.to_string())?;
    let f1 = outcome.best.best_metric;
    ensure(
        f1 > 0.0,
        format!(
            "baseline acc {:.2} F1 {:.2}; trained on {} functions ({positives} vulnerable), val F1 {f1:.3}",
            baseline.accuracy,
            baseline.f1,
            records.len()
        ),
    )
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dataset = write_synth(dir.path(), "synth.jsonl", 120, 3);
    let train = |name: &str, threads: &str| -> Result<Vec<u8>, String> {
        let ck = dir.path().join(name);
        run(bin()
            .args(["train", "--threads", threads, "--max-epochs", "3", "--seed", "5", "--dataset"])
            .arg(&dataset)
            .arg("--checkpoint")
            .arg(&ck))?;
        std::fs::read(&ck).map_err(|e| e.to_string())
    };
    let a = train("a.bin", "1")?;
    let b = train("b.bin", "1")?;
    let c = train("c.bin", "4")?;
    ensure(
        a == b && a == c,
        format!("checkpoints of {} bytes; repeat identical {}, threads 1 vs 4 identical {}", a.len(), a == b, a == c),
    )
}

fn full_size_smoke() -> Result<String, String> {
    let start = Instant::now();
    let records = synth_corpus(100, 0.5, 7, PatternSet::default());
    let cfg = RunConfig { max_epochs: 2, ..RunConfig::full() };
    let outcome = train_records(&records, &cfg, 1).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(900), "two epochs")?;
    let finite = outcome.metrics.iter().all(|m| m.train_loss.is_finite() && m.val_loss.is_finite());
    let bad = outcome.best.params.first_non_finite();
    ensure(
        outcome.metrics.len() == 2 && finite && bad.is_none(),
        format!(
            "d_code {} z {} T {} batch {} lr {:e}: {} epochs, losses {:?}, non-finite {:?}",
            cfg.d_code,
            cfg.z,
            cfg.time_steps,
            cfg.batch_size,
            cfg.learning_rate,
            outcome.metrics.len(),
            outcome.metrics.iter().map(|m| (m.train_loss, m.val_loss)).collect::<Vec<_>>(),
            bad
        ),
    )
}
