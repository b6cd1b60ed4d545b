//! The full classifier: features → GGNN → readout, with its objective and
//! reverse-mode gradients.

use ndarray::{s, Array2};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::embedding::{encode_nodes, features_from_ids, init_hidden, node_token_ids, EmbeddingError, EmbeddingTable, Vocab};
use crate::frontend::{CodeGraph, Label, NodeType, Relation};
use crate::ggnn::{ggnn_backward, ggnn_forward, Adjacency, GgnnError, GgnnParams, GgnnShape, GgnnTrace};
use crate::nn::{sigmoid, Mlp};
use crate::readout::{
    conv_backward, conv_forward, flat_backward, flat_forward, ConvGeometry, ConvHead, ConvTrace, FlatHead,
    FlatTrace, Head, ReadoutError, ReadoutKind,
};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the logarithm.
pub const PROB_EPS: f64 = 1e-12;

/// Graphs per gradient chunk. Chunks are summed in index order, so results do
/// not depend on the number of worker threads.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Ggnn(#[from] GgnnError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error("sample has no label")]
    MissingLabel,
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
}

/// A graph prepared for the model.
#[derive(Debug, Clone)]
pub struct Sample {
    pub x: Array2<f64>,
    pub adj: Adjacency,
    pub token_ids: Vec<Vec<usize>>,
    pub types: Vec<NodeType>,
    pub label: Option<Label>,
}

impl Sample {
    pub fn from_graph(graph: &CodeGraph, cfg: &RunConfig, vocab: &Vocab, table: &EmbeddingTable) -> Self {
        Sample {
            x: encode_nodes(graph, vocab, table),
            adj: Adjacency::from_graph(graph, &cfg.relations, cfg.reverse_edges),
            token_ids: node_token_ids(graph, vocab),
            types: graph.nodes.iter().map(|n| n.node_type).collect(),
            label: graph.label,
        }
    }

    /// Sample with explicit features and no token ids.
    pub fn from_features(x: Array2<f64>, adj: Adjacency, label: Option<Label>) -> Self {
        let m = x.nrows();
        Sample { x, adj, token_ids: vec![Vec::new(); m], types: vec![NodeType::Block; m], label }
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub ggnn: GgnnParams,
    pub head: Head,
    /// Trainable copy of the token table when embeddings are fine-tuned.
    pub embedding: Option<Array2<f64>>,
    /// Which `ggnn.w` slots belong to active edge types.
    active: Vec<bool>,
}

fn relation_slot_name(slot: usize) -> String {
    let n = Relation::ALL.len();
    let r = Relation::ALL[slot % n];
    if slot >= n {
        format!("ggnn.w.{r}.rev")
    } else {
        format!("ggnn.w.{r}")
    }
}

macro_rules! emit {
    ($f:expr, $slice:ident, $name:expr, $arr:expr, $reg:expr) => {{
        let shape = $arr.shape().to_vec();
        $f($name, &shape, $arr.$slice().expect("standard layout"), $reg);
    }};
}

macro_rules! emit_mlp {
    ($f:expr, $slice:ident, $prefix:expr, $mlp:expr) => {{
        for i in 0..$mlp.layers.len() {
            emit!($f, $slice, format!("{}.mlp.{i}.w", $prefix), $mlp.layers[i].w, true);
            emit!($f, $slice, format!("{}.mlp.{i}.b", $prefix), $mlp.layers[i].b, false);
        }
    }};
}

macro_rules! emit_path {
    ($f:expr, $slice:ident, $prefix:expr, $p:expr) => {{
        emit!($f, $slice, format!("{}.f1", $prefix), $p.f1, true);
        emit!($f, $slice, format!("{}.b1", $prefix), $p.b1, false);
        emit!($f, $slice, format!("{}.f2", $prefix), $p.f2, true);
        emit!($f, $slice, format!("{}.b2", $prefix), $p.b2, false);
        emit_mlp!($f, $slice, $prefix, $p.mlp);
    }};
}

// Visits every tensor in a fixed order. `$slice` is `as_slice` or
// `as_slice_mut`, `$opt` is `as_ref` or `as_mut`, `$($m)?` is `mut` or empty.
macro_rules! visit_tensors {
    ($p:expr, $f:expr, $slice:ident, $opt:ident, $($m:ident)?) => {{
        let active = $p.active.clone();
        for slot in 0..$p.ggnn.w.len() {
            emit!($f, $slice, relation_slot_name(slot), $p.ggnn.w[slot], active[slot]);
        }
        emit!($f, $slice, "ggnn.b".to_string(), $p.ggnn.b, false);
        let g = & $($m)? $p.ggnn.gru;
        emit!($f, $slice, "ggnn.gru.w_u".to_string(), g.w_u, true);
        emit!($f, $slice, "ggnn.gru.u_u".to_string(), g.u_u, true);
        emit!($f, $slice, "ggnn.gru.b_u".to_string(), g.b_u, false);
        emit!($f, $slice, "ggnn.gru.w_r".to_string(), g.w_r, true);
        emit!($f, $slice, "ggnn.gru.u_r".to_string(), g.u_r, true);
        emit!($f, $slice, "ggnn.gru.b_r".to_string(), g.b_r, false);
        emit!($f, $slice, "ggnn.gru.w_h".to_string(), g.w_h, true);
        emit!($f, $slice, "ggnn.gru.u_h".to_string(), g.u_h, true);
        emit!($f, $slice, "ggnn.gru.b_h".to_string(), g.b_h, false);
        if let Some(proj) = $p.ggnn.projection.$opt() {
            emit!($f, $slice, "ggnn.projection".to_string(), proj, true);
        }
        match & $($m)? $p.head {
            Head::Conv(c) => {
                emit_path!($f, $slice, "head.conv.z", c.z_path);
                emit_path!($f, $slice, "head.conv.y", c.y_path);
            }
            Head::Flat(fl) => emit_mlp!($f, $slice, "head.flat", fl.mlp),
        }
        if let Some(e) = $p.embedding.$opt() {
            emit!($f, $slice, "embedding".to_string(), e, false);
        }
    }};
}

/// Read-only view of one named tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub regularized: bool,
}

impl ModelParams {
    pub fn zeros(cfg: &RunConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let d = cfg.feature_dim();
        let projection_k = cfg.concat_projection.then(|| cfg.edge_types());
        let ggnn = GgnnParams::zeros(cfg.z, cfg.reverse_edges, projection_k);
        let head = match cfg.readout {
            ReadoutKind::Conv => Head::Conv(ConvHead::zeros(cfg.z, d, cfg.conv_channels, &cfg.mlp_hidden)?),
            ReadoutKind::Flat => Head::Flat(FlatHead::zeros(cfg.z, d, &cfg.mlp_hidden)),
        };
        let n = Relation::ALL.len();
        let active = (0..ggnn.w.len()).map(|slot| cfg.relations.contains(&Relation::ALL[slot % n])).collect();
        Ok(ModelParams { ggnn, head, embedding: None, active })
    }

    /// Seeded Glorot initialization with zero biases. The table is copied in
    /// when `finetune_embeddings` is set.
    pub fn init(cfg: &RunConfig, table: Option<&EmbeddingTable>, rng: &mut impl Rng) -> Result<Self, ModelError> {
        let mut p = Self::zeros(cfg)?;
        let d = cfg.feature_dim();
        let projection_k = cfg.concat_projection.then(|| cfg.edge_types());
        p.ggnn = GgnnParams::init(cfg.z, cfg.reverse_edges, projection_k, rng);
        p.head = match cfg.readout {
            ReadoutKind::Conv => Head::Conv(ConvHead::init(cfg.z, d, cfg.conv_channels, &cfg.mlp_hidden, rng)?),
            ReadoutKind::Flat => Head::Flat(FlatHead::init(cfg.z, d, &cfg.mlp_hidden, rng)),
        };
        if cfg.finetune_embeddings {
            p.embedding = table.map(|t| t.matrix().clone());
        }
        Ok(p)
    }

    /// Assembles parameters of arbitrary shape; `relations` selects the
    /// active message slots.
    pub fn from_parts(ggnn: GgnnParams, head: Head, embedding: Option<Array2<f64>>, relations: &[Relation]) -> Self {
        let n = Relation::ALL.len();
        let active = (0..ggnn.w.len()).map(|slot| relations.contains(&Relation::ALL[slot % n])).collect();
        ModelParams { ggnn, head, embedding, active }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, data| data.fill(0.0));
        z
    }

    pub fn is_active_slot(&self, slot: usize) -> bool {
        self.active[slot]
    }

    pub fn for_each(&self, mut f: impl FnMut(String, &[usize], &[f64], bool)) {
        visit_tensors!(self, f, as_slice, as_ref,);
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(String, &mut [f64])) {
        let mut g = |name: String, _shape: &[usize], data: &mut [f64], _reg: bool| f(name, data);
        visit_tensors!(self, g, as_slice_mut, as_mut, mut);
    }

    pub fn tensors(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        self.for_each(|name, shape, _, regularized| out.push(TensorInfo { name, shape: shape.to_vec(), regularized }));
        out
    }

    /// Flattened copies of every tensor, in visiting order.
    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.for_each(|_, _, data, _| out.push(data.to_vec()));
        out
    }

    /// Overwrites every tensor from `data`, which must match [`Self::to_vecs`].
    pub fn load_vecs(&mut self, data: &[Vec<f64>]) -> Result<(), String> {
        let mut i = 0;
        let mut err = None;
        self.for_each_mut(|name, dst| {
            match data.get(i) {
                Some(src) if src.len() == dst.len() => dst.copy_from_slice(src),
                Some(src) => {
                    err.get_or_insert(format!("{name}: expected {} values, found {}", dst.len(), src.len()));
                }
                None => {
                    err.get_or_insert(format!("{name}: missing"));
                }
            }
            i += 1;
        });
        if i != data.len() {
            err.get_or_insert(format!("expected {i} tensors, found {}", data.len()));
        }
        err.map_or(Ok(()), Err)
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _, d, _| n += d.len());
        n
    }

    /// Sum of squared entries of the regularized weight matrices.
    pub fn l2(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each(|_, _, d, reg| {
            if reg {
                acc += d.iter().map(|v| v * v).sum::<f64>();
            }
        });
        acc
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ModelParams) {
        let src = other.to_vecs();
        let mut i = 0;
        self.for_each_mut(|_, dst| {
            for (d, s) in dst.iter_mut().zip(&src[i]) {
                *d += scale * s;
            }
            i += 1;
        });
    }

    /// Adds `2λW` to `grads` for every regularized tensor.
    pub fn add_l2_grad(&self, lambda: f64, grads: &mut ModelParams) {
        let mut src = Vec::new();
        self.for_each(|_, _, d, reg| src.push(reg.then(|| d.to_vec())));
        let mut i = 0;
        grads.for_each_mut(|_, dst| {
            if let Some(w) = &src[i] {
                for (g, v) in dst.iter_mut().zip(w) {
                    *g += 2.0 * lambda * v;
                }
            }
            i += 1;
        });
    }

    pub fn first_non_finite(&self) -> Option<String> {
        let mut bad = None;
        self.for_each(|name, _, d, _| {
            if bad.is_none() && d.iter().any(|v| !v.is_finite()) {
                bad = Some(name);
            }
        });
        bad
    }
}

#[derive(Debug, Clone)]
enum HeadTrace {
    Conv(ConvTrace),
    Flat(FlatTrace),
}

/// Forward intermediates of one graph.
#[derive(Debug, Clone)]
pub struct Forward {
    pub x: Array2<f64>,
    ggnn: GgnnTrace,
    head: HeadTrace,
    pub logit: f64,
    pub probability: f64,
}

impl Forward {
    pub fn hidden(&self) -> &Array2<f64> {
        self.ggnn.output()
    }
}

pub fn geometry(cfg: &RunConfig) -> ConvGeometry {
    ConvGeometry { m_max: cfg.m_max, mask_padding: cfg.mask_padding }
}

fn ggnn_shape(cfg: &RunConfig) -> GgnnShape {
    GgnnShape { rounds: cfg.time_steps, aggregator: cfg.aggregator }
}

pub fn forward(params: &ModelParams, cfg: &RunConfig, sample: &Sample) -> Result<Forward, ModelError> {
    let x = match &params.embedding {
        Some(table) => features_from_ids(&sample.token_ids, &sample.types, table),
        None => sample.x.clone(),
    };
    let h0 = init_hidden(&x, cfg.z)?;
    let trace = ggnn_forward(&h0, &sample.adj, &params.ggnn, ggnn_shape(cfg))?;
    let h = trace.output();
    let (head, logit) = match &params.head {
        Head::Conv(c) => {
            let t = conv_forward(h, &x, c, geometry(cfg))?;
            let l = t.logit;
            (HeadTrace::Conv(t), l)
        }
        Head::Flat(f) => {
            let t = flat_forward(h, &x, f)?;
            let l = t.logit;
            (HeadTrace::Flat(t), l)
        }
    };
    Ok(Forward { x, ggnn: trace, head, logit, probability: sigmoid(logit) })
}

pub fn predict(params: &ModelParams, cfg: &RunConfig, sample: &Sample) -> Result<f64, ModelError> {
    Ok(forward(params, cfg, sample)?.probability)
}

/// Backpropagates `∂L/∂logit` through the graph, accumulating into `grads`.
pub fn backward(
    params: &ModelParams,
    cfg: &RunConfig,
    sample: &Sample,
    fwd: &Forward,
    d_logit: f64,
    grads: &mut ModelParams,
) {
    let (dh, mut dx) = match (&fwd.head, &params.head, &mut grads.head) {
        (HeadTrace::Conv(t), Head::Conv(c), Head::Conv(gc)) => conv_backward(t, d_logit, c, gc),
        (HeadTrace::Flat(t), Head::Flat(f), Head::Flat(gf)) => flat_backward(t, d_logit, f, gf),
        _ => unreachable!("gradient buffers mirror the parameters"),
    };
    let dh0 = ggnn_backward(&fwd.ggnn, &dh, &sample.adj, &params.ggnn, ggnn_shape(cfg), &mut grads.ggnn);
    if let Some(ge) = grads.embedding.as_mut() {
        let d = dx.ncols();
        dx += &dh0.slice(s![.., ..d]);
        let d_code = ge.ncols();
        for (j, toks) in sample.token_ids.iter().enumerate() {
            if toks.is_empty() {
                continue;
            }
            let share = dx.slice(s![j, ..d_code]).mapv(|v| v / toks.len() as f64);
            for &t in toks {
                ge.row_mut(t).scaled_add(1.0, &share);
            }
        }
    }
}

/// Binary cross-entropy of a probability against a label.
pub fn cross_entropy(p: f64, label: Label) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    match label {
        Label::Vulnerable => -p.ln(),
        Label::Benign => -(1.0 - p).ln(),
    }
}

/// Cross-entropy plus `λ Σ‖W‖²` over the regularized weights.
pub fn loss(p: f64, label: Label, params: &ModelParams, lambda: f64) -> f64 {
    cross_entropy(p, label) + lambda * params.l2()
}

/// Mean cross-entropy over `samples` plus the L2 term.
pub fn objective(params: &ModelParams, cfg: &RunConfig, samples: &[&Sample]) -> Result<f64, ModelError> {
    let mut ce = 0.0;
    for s in samples {
        let label = s.label.ok_or(ModelError::MissingLabel)?;
        ce += cross_entropy(predict(params, cfg, s)?, label);
    }
    Ok(ce / samples.len() as f64 + cfg.lambda * params.l2())
}

fn sample_gradient(params: &ModelParams, cfg: &RunConfig, sample: &Sample) -> Result<(f64, ModelParams), ModelError> {
    let label = sample.label.ok_or(ModelError::MissingLabel)?;
    let fwd = forward(params, cfg, sample)?;
    let mut g = params.zeros_like();
    // Gradient of the unclamped cross-entropy with respect to the logit.
    backward(params, cfg, sample, &fwd, fwd.probability - label.target(), &mut g);
    Ok((cross_entropy(fwd.probability, label), g))
}

/// Objective value and gradient over a batch. Per-graph work runs on the
/// current rayon pool; reduction order is fixed by sample index.
pub fn objective_and_gradient(
    params: &ModelParams,
    cfg: &RunConfig,
    samples: &[&Sample],
) -> Result<(f64, ModelParams), ModelError> {
    let mut total = params.zeros_like();
    let mut ce = 0.0;
    for chunk in samples.chunks(GRAD_CHUNK) {
        let parts: Vec<_> = chunk.par_iter().map(|s| sample_gradient(params, cfg, s)).collect();
        for part in parts {
            let (l, g) = part?;
            ce += l;
            total.add_scaled(1.0, &g);
        }
    }
    let n = samples.len() as f64;
    let mut grads = params.zeros_like();
    grads.add_scaled(1.0 / n, &total);
    params.add_l2_grad(cfg.lambda, &mut grads);
    if let Some(name) = grads.first_non_finite() {
        return Err(ModelError::NonFiniteGradient(name));
    }
    Ok((ce / n + cfg.lambda * params.l2(), grads))
}

/// Empty-MLP check used by tests: every weight of every terminal MLP is zero.
pub fn mlps_are_zero(head: &Head) -> bool {
    let zero = |m: &Mlp| m.layers.iter().all(|l| l.w.iter().all(|&v| v == 0.0) && l.b.iter().all(|&v| v == 0.0));
    match head {
        Head::Conv(c) => zero(&c.z_path.mlp) && zero(&c.y_path.mlp),
        Head::Flat(f) => zero(&f.mlp),
    }
}
