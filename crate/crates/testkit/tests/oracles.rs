use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vulngraph::config::RunConfig;
use vulngraph::frontend::{build_cfg, build_graph, parse_source, Relation, MAX_NODES, OVERFLOW_EXAMPLE};
use vulngraph::ggnn::Adjacency;
use vulngraph::model::{forward, ModelParams, Sample};
use vulngraph::readout::ReadoutKind;
use vulngraph_testkit::dataflow::all_paths_dataflow;
use vulngraph_testkit::naive;
use vulngraph_testkit::permute::{permute_sample, random_permutation};
use vulngraph_testkit::programs::{random_function, ProgramConfig};
use vulngraph_testkit::structure::all_violations;

fn sample_of(src: &str, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Sample {
    let graph = build_graph(src, None, MAX_NODES).unwrap();
    let adj = Adjacency::from_graph(&graph, &cfg.relations, cfg.reverse_edges);
    let x = Array2::from_shape_fn((graph.num_nodes(), cfg.feature_dim()), |_| rng.gen_range(-1.0..1.0));
    Sample::from_features(x, adj, None)
}

#[test]
fn overflow_example_dataflow_matches_enumeration() {
    let ast = parse_source(OVERFLOW_EXAMPLE).unwrap();
    let oracle = all_paths_dataflow(&ast, &build_cfg(&ast), 100).unwrap();
    let graph = build_graph(OVERFLOW_EXAMPLE, None, MAX_NODES).unwrap();
    let reads: Vec<_> = oracle.last_read.iter().copied().collect();
    let writes: Vec<_> = oracle.last_write.iter().copied().collect();
    let sorted = |r: Relation| {
        let mut e = graph.edges(r).edges().to_vec();
        e.sort_unstable();
        e
    };
    assert_eq!(sorted(Relation::DfgR), reads);
    assert_eq!(sorted(Relation::DfgW), writes);
}

#[test]
fn generated_graphs_satisfy_structural_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let src = random_function(&mut rng, ProgramConfig::with_loops(10));
        let graph = build_graph(&src, None, MAX_NODES).unwrap();
        assert_eq!(all_violations(&graph), Vec::<String>::new(), "{src}");
    }
}

#[test]
fn naive_logit_agrees_with_the_model_for_reverse_edges_and_mean_aggregation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = RunConfig {
        reverse_edges: true,
        aggregator: vulngraph::ggnn::Aggregator::Mean,
        readout: ReadoutKind::Conv,
        m_max: 80,
        ..RunConfig::desk()
    };
    let params = ModelParams::init(&cfg, None, &mut rng).unwrap();
    for _ in 0..5 {
        let src = random_function(&mut rng, ProgramConfig::with_loops(8));
        let s = sample_of(&src, &cfg, &mut rng);
        let fast = forward(&params, &cfg, &s).unwrap().logit;
        assert!((fast - naive::logit(&params, &cfg, &s)).abs() < 1e-10);
    }
}

#[test]
fn permuting_nodes_keeps_the_flat_logit() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cfg = RunConfig { readout: ReadoutKind::Flat, ..RunConfig::desk() };
    let params = ModelParams::init(&cfg, None, &mut rng).unwrap();
    let s = sample_of(OVERFLOW_EXAMPLE, &cfg, &mut rng);
    let base = forward(&params, &cfg, &s).unwrap().logit;
    let perm = random_permutation(s.num_nodes(), &mut rng);
    let moved = forward(&params, &cfg, &permute_sample(&s, &perm)).unwrap().logit;
    assert!((base - moved).abs() < 1e-9);
}
