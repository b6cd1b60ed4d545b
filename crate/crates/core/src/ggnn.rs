//! Gated graph recurrent layers: per-relation message passing followed by a
//! GRU state update, repeated for a fixed number of rounds.
//!
//! Row convention: node states are the rows of `H` (m × z), so the message of
//! relation `p` is `A_pᵀ (H W_pᵀ + 1 bᵀ)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{CodeGraph, Relation};
use crate::nn::{init_matrix, sigmoid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GgnnError {
    #[error("shape mismatch for {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch { what: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("aggregator {0:?} needs a projection; enable concat_projection")]
    UnsupportedAggregator(Aggregator),
    #[error("at least one round is required")]
    NoRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Sum,
    Mean,
    Max,
    Concat,
}

/// One message-passing edge type: a relation in stored or transposed direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeType {
    pub relation: Relation,
    pub reverse: bool,
    /// `(src, dst)`: `dst` receives the transformed state of `src`.
    pub edges: Vec<(usize, usize)>,
}

impl EdgeType {
    /// Index into [`GgnnParams::w`].
    pub fn slot(&self) -> usize {
        self.relation.index() + if self.reverse { Relation::ALL.len() } else { 0 }
    }
}

/// Sparse per-type adjacency over `m` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub m: usize,
    pub types: Vec<EdgeType>,
}

impl Adjacency {
    pub fn from_graph(graph: &CodeGraph, relations: &[Relation], reverse_edges: bool) -> Self {
        let mut types = Vec::new();
        for &r in relations {
            let edges = graph.edges(r).edges().to_vec();
            if reverse_edges {
                let rev = edges.iter().map(|&(s, t)| (t, s)).collect();
                types.push(EdgeType { relation: r, reverse: false, edges });
                types.push(EdgeType { relation: r, reverse: true, edges: rev });
            } else {
                types.push(EdgeType { relation: r, reverse: false, edges });
            }
        }
        Adjacency { m: graph.num_nodes(), types }
    }

    pub fn k(&self) -> usize {
        self.types.len()
    }

    /// Dense `A_p` for tests and debugging.
    pub fn dense(&self, p: usize) -> Array2<f64> {
        let mut a = Array2::zeros((self.m, self.m));
        for &(s, t) in &self.types[p].edges {
            a[[s, t]] = 1.0;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_u: Array2<f64>,
    pub u_u: Array2<f64>,
    pub b_u: Array1<f64>,
    pub w_r: Array2<f64>,
    pub u_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_h: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_h: Array1<f64>,
}

impl GruParams {
    pub fn zeros(z: usize) -> Self {
        let m = || Array2::zeros((z, z));
        let v = || Array1::zeros(z);
        GruParams { w_u: m(), u_u: m(), b_u: v(), w_r: m(), u_r: m(), b_r: v(), w_h: m(), u_h: m(), b_h: v() }
    }

    pub fn init(z: usize, rng: &mut impl Rng) -> Self {
        let mut g = Self::zeros(z);
        for w in [&mut g.w_u, &mut g.u_u, &mut g.w_r, &mut g.u_r, &mut g.w_h, &mut g.u_h] {
            *w = init_matrix(z, z, rng);
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GgnnParams {
    /// One `z × z` matrix per relation, then per reversed relation if enabled.
    pub w: Vec<Array2<f64>>,
    /// Message bias shared by all edge types.
    pub b: Array1<f64>,
    pub gru: GruParams,
    /// `z × (k·z)` map applied to concatenated messages.
    pub projection: Option<Array2<f64>>,
}

impl GgnnParams {
    pub fn zeros(z: usize, reverse_edges: bool, projection_k: Option<usize>) -> Self {
        let slots = Relation::ALL.len() * if reverse_edges { 2 } else { 1 };
        GgnnParams {
            w: vec![Array2::zeros((z, z)); slots],
            b: Array1::zeros(z),
            gru: GruParams::zeros(z),
            projection: projection_k.map(|k| Array2::zeros((z, k * z))),
        }
    }

    pub fn init(z: usize, reverse_edges: bool, projection_k: Option<usize>, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(z, reverse_edges, projection_k);
        for w in &mut p.w {
            *w = init_matrix(z, z, rng);
        }
        p.gru = GruParams::init(z, rng);
        if let Some(k) = projection_k {
            p.projection = Some(init_matrix(z, k * z, rng));
        }
        p
    }

    pub fn z(&self) -> usize {
        self.b.len()
    }
}

/// `a_p = A_pᵀ (H W_pᵀ + 1 bᵀ)`: row `j` sums the transformed states of the
/// in-neighbours of `j`.
pub fn message_pass(
    h: ArrayView2<f64>,
    edges: &[(usize, usize)],
    w: ArrayView2<f64>,
    b: ArrayView1<f64>,
) -> Result<Array2<f64>, GgnnError> {
    let (m, z) = h.dim();
    if w.dim() != (z, z) {
        return Err(GgnnError::ShapeMismatch { what: "W_p", expected: (z, z), found: w.dim() });
    }
    if b.len() != z {
        return Err(GgnnError::ShapeMismatch { what: "b", expected: (z, 1), found: (b.len(), 1) });
    }
    let mut a = Array2::zeros((m, z));
    if edges.is_empty() {
        return Ok(a);
    }
    let mut t = h.dot(&w.t());
    t += &b;
    for &(s, d) in edges {
        let src = t.row(s);
        a.row_mut(d).scaled_add(1.0, &src);
    }
    Ok(a)
}

/// Combines per-type messages. `Concat` requires a projection matrix.
pub fn aggregate(
    messages: &[Array2<f64>],
    mode: Aggregator,
    projection: Option<&Array2<f64>>,
) -> Result<Array2<f64>, GgnnError> {
    let first = messages.first().expect("at least one edge type");
    match mode {
        Aggregator::Sum | Aggregator::Mean => {
            let mut acc = first.clone();
            for a in &messages[1..] {
                acc += a;
            }
            if mode == Aggregator::Mean {
                acc /= messages.len() as f64;
            }
            Ok(acc)
        }
        Aggregator::Max => {
            let mut acc = first.clone();
            for a in &messages[1..] {
                Zip::from(&mut acc).and(a).for_each(|x, &y| {
                    if y > *x {
                        *x = y
                    }
                });
            }
            Ok(acc)
        }
        Aggregator::Concat => {
            let p = projection.ok_or(GgnnError::UnsupportedAggregator(Aggregator::Concat))?;
            let cat = concat_messages(messages);
            if p.ncols() != cat.ncols() {
                return Err(GgnnError::ShapeMismatch {
                    what: "projection",
                    expected: (p.nrows(), cat.ncols()),
                    found: p.dim(),
                });
            }
            Ok(cat.dot(&p.t()))
        }
    }
}

fn concat_messages(messages: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = messages.iter().map(|a| a.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("messages share a row count")
}

/// Intermediates of one GRU step over all rows.
#[derive(Debug, Clone)]
pub struct GruStep {
    pub u: Array2<f64>,
    pub r: Array2<f64>,
    pub c: Array2<f64>,
    pub h: Array2<f64>,
}

/// GRU over row-stacked inputs: `a` is the aggregated message, `h_prev` the
/// previous state.
pub fn gru_rows(h_prev: ArrayView2<f64>, a: ArrayView2<f64>, g: &GruParams) -> GruStep {
    let mut u = a.dot(&g.w_u.t()) + h_prev.dot(&g.u_u.t()) + &g.b_u;
    u.mapv_inplace(sigmoid);
    let mut r = a.dot(&g.w_r.t()) + h_prev.dot(&g.u_r.t()) + &g.b_r;
    r.mapv_inplace(sigmoid);
    let rh = &r * &h_prev;
    let mut c = a.dot(&g.w_h.t()) + rh.dot(&g.u_h.t()) + &g.b_h;
    c.mapv_inplace(f64::tanh);
    let h = &h_prev * &u.mapv(|v| 1.0 - v) + &u * &c;
    GruStep { u, r, c, h }
}

pub fn gru_update(h_prev: ArrayView1<f64>, a: ArrayView1<f64>, g: &GruParams) -> Array1<f64> {
    let h = h_prev.insert_axis(Axis(0));
    let a = a.insert_axis(Axis(0));
    gru_rows(h, a, g).h.row(0).to_owned()
}

#[derive(Debug, Clone)]
struct Round {
    h_prev: Array2<f64>,
    messages: Vec<Array2<f64>>,
    a: Array2<f64>,
    gru: GruStep,
}

/// Forward intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct GgnnTrace {
    rounds: Vec<Round>,
    output: Array2<f64>,
}

impl GgnnTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// `H^(0)` followed by the state after every round.
    pub fn states(&self) -> Vec<&Array2<f64>> {
        let mut v: Vec<_> = self.rounds.iter().map(|r| &r.h_prev).collect();
        v.push(&self.output);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GgnnShape {
    pub rounds: usize,
    pub aggregator: Aggregator,
}

/// Runs `rounds` steps of message passing and GRU updates from `h0`.
pub fn ggnn_forward(
    h0: &Array2<f64>,
    adj: &Adjacency,
    params: &GgnnParams,
    shape: GgnnShape,
) -> Result<GgnnTrace, GgnnError> {
    if shape.rounds == 0 {
        return Err(GgnnError::NoRounds);
    }
    if h0.dim() != (adj.m, params.z()) {
        return Err(GgnnError::ShapeMismatch { what: "H", expected: (adj.m, params.z()), found: h0.dim() });
    }
    let mut rounds = Vec::with_capacity(shape.rounds);
    let mut h = h0.clone();
    for _ in 0..shape.rounds {
        let messages = adj
            .types
            .iter()
            .map(|ty| message_pass(h.view(), &ty.edges, params.w[ty.slot()].view(), params.b.view()))
            .collect::<Result<Vec<_>, _>>()?;
        let a = aggregate(&messages, shape.aggregator, params.projection.as_ref())?;
        let gru = gru_rows(h.view(), a.view(), &params.gru);
        let next = gru.h.clone();
        rounds.push(Round { h_prev: h, messages, a, gru });
        h = next;
    }
    Ok(GgnnTrace { rounds, output: h })
}

/// Accumulates parameter gradients into `grads` and returns `∂L/∂H^(0)`.
pub fn ggnn_backward(
    trace: &GgnnTrace,
    d_out: &Array2<f64>,
    adj: &Adjacency,
    params: &GgnnParams,
    shape: GgnnShape,
    grads: &mut GgnnParams,
) -> Array2<f64> {
    let g = &params.gru;
    let mut dh = d_out.clone();
    for round in trace.rounds.iter().rev() {
        let GruStep { u, r, c, .. } = &round.gru;
        let hp = &round.h_prev;
        let a = &round.a;

        let mut dh_prev = &dh * &u.mapv(|v| 1.0 - v);
        let du = &dh * &(c - hp);
        let dc = &dh * u;

        let dc_pre = dc * &c.mapv(|v| 1.0 - v * v);
        let rh = r * hp;
        grads.gru.w_h += &dc_pre.t().dot(a);
        grads.gru.u_h += &dc_pre.t().dot(&rh);
        grads.gru.b_h += &dc_pre.sum_axis(Axis(0));
        let mut da = dc_pre.dot(&g.w_h);
        let drh = dc_pre.dot(&g.u_h);
        dh_prev += &(&drh * r);

        let dr_pre = &drh * hp * &r.mapv(|v| v * (1.0 - v));
        grads.gru.w_r += &dr_pre.t().dot(a);
        grads.gru.u_r += &dr_pre.t().dot(hp);
        grads.gru.b_r += &dr_pre.sum_axis(Axis(0));
        da += &dr_pre.dot(&g.w_r);
        dh_prev += &dr_pre.dot(&g.u_r);

        let du_pre = du * &u.mapv(|v| v * (1.0 - v));
        grads.gru.w_u += &du_pre.t().dot(a);
        grads.gru.u_u += &du_pre.t().dot(hp);
        grads.gru.b_u += &du_pre.sum_axis(Axis(0));
        da += &du_pre.dot(&g.w_u);
        dh_prev += &du_pre.dot(&g.u_u);

        let d_messages = aggregate_backward(&round.messages, &da, shape.aggregator, params, grads);

        for (ty, da_p) in adj.types.iter().zip(d_messages) {
            if ty.edges.is_empty() {
                continue;
            }
            let mut dt = Array2::<f64>::zeros(hp.dim());
            for &(s, d) in &ty.edges {
                let row = da_p.row(d);
                dt.row_mut(s).scaled_add(1.0, &row);
            }
            let slot = ty.slot();
            grads.w[slot] += &dt.t().dot(hp);
            grads.b += &dt.sum_axis(Axis(0));
            dh_prev += &dt.dot(&params.w[slot]);
        }
        dh = dh_prev;
    }
    dh
}

fn aggregate_backward(
    messages: &[Array2<f64>],
    da: &Array2<f64>,
    mode: Aggregator,
    params: &GgnnParams,
    grads: &mut GgnnParams,
) -> Vec<Array2<f64>> {
    let k = messages.len();
    match mode {
        Aggregator::Sum => vec![da.clone(); k],
        Aggregator::Mean => vec![da / k as f64; k],
        Aggregator::Max => {
            let mut out = vec![Array2::zeros(da.dim()); k];
            for ((i, j), &g) in da.indexed_iter() {
                let mut best = 0;
                for p in 1..k {
                    if messages[p][[i, j]] > messages[best][[i, j]] {
                        best = p;
                    }
                }
                out[best][[i, j]] = g;
            }
            out
        }
        Aggregator::Concat => {
            let p = params.projection.as_ref().expect("checked in forward");
            let cat = concat_messages(messages);
            *grads.projection.as_mut().expect("grads mirror params") += &da.t().dot(&cat);
            let dcat = da.dot(p);
            let z = da.ncols();
            (0..k).map(|i| dcat.slice(ndarray::s![.., i * z..(i + 1) * z]).to_owned()).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_type(m: usize, edges: Vec<(usize, usize)>) -> Adjacency {
        Adjacency { m, types: vec![EdgeType { relation: Relation::Ast, reverse: false, edges }] }
    }

    #[test]
    fn no_edges_no_messages() {
        let h = Array2::from_elem((3, 2), 1.5);
        let a = message_pass(h.view(), &[], Array2::eye(2).view(), array![1.0, 1.0].view()).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_transform_single_edge() {
        let h = array![[1.0, 2.0], [3.0, 4.0]];
        let a = message_pass(h.view(), &[(0, 1)], Array2::eye(2).view(), Array1::zeros(2).view()).unwrap();
        assert_eq!(a, array![[0.0, 0.0], [1.0, 2.0]]);
    }

    #[test]
    fn message_shape_mismatch() {
        let h = Array2::zeros((2, 3));
        let err = message_pass(h.view(), &[], Array2::eye(2).view(), Array1::zeros(3).view());
        assert!(matches!(err, Err(GgnnError::ShapeMismatch { what: "W_p", .. })));
    }

    #[test]
    fn aggregate_cases() {
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        for mode in [Aggregator::Sum, Aggregator::Mean, Aggregator::Max] {
            assert_eq!(aggregate(&[x.clone()], mode, None).unwrap(), x);
        }
        assert_eq!(aggregate(&[x.clone(), x.clone()], Aggregator::Sum, None).unwrap(), &x * 2.0);
        let neg = -&x;
        assert!(aggregate(&[x.clone(), neg], Aggregator::Mean, None).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(
            aggregate(&[x.clone()], Aggregator::Concat, None),
            Err(GgnnError::UnsupportedAggregator(Aggregator::Concat))
        );
        let proj = ndarray::concatenate![Axis(1), Array2::<f64>::eye(2), Array2::<f64>::eye(2)];
        assert_eq!(aggregate(&[x.clone(), x.clone()], Aggregator::Concat, Some(&proj)).unwrap(), &x * 2.0);
    }

    #[test]
    fn zero_gru_halves_state() {
        let g = GruParams::zeros(3);
        let h = array![1.0, -2.0, 4.0];
        let a = array![7.0, 7.0, 7.0];
        assert_eq!(gru_update(h.view(), a.view(), &g), array![0.5, -1.0, 2.0]);
        let zero = Array1::zeros(3);
        assert_eq!(gru_update(zero.view(), zero.view(), &GruParams::init(3, &mut ChaCha8Rng::seed_from_u64(1))), zero);
    }

    #[test]
    fn one_round_zero_gru_scales_by_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = GgnnParams::init(4, false, None, &mut rng);
        p.gru = GruParams::zeros(4);
        let h0 = Array2::from_shape_fn((3, 4), |(i, j)| (i + 2 * j) as f64 - 2.0);
        let adj = one_type(3, vec![(0, 1), (1, 2)]);
        let t = ggnn_forward(&h0, &adj, &p, GgnnShape { rounds: 1, aggregator: Aggregator::Sum }).unwrap();
        assert_eq!(t.output(), &(&h0 * 0.5));
    }

    #[test]
    fn isolated_twins_stay_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = GgnnParams::init(3, false, None, &mut rng);
        let h0 = array![[0.3, -0.1, 0.0], [0.3, -0.1, 0.0], [1.0, 1.0, 1.0]];
        let adj = one_type(3, vec![]);
        let t = ggnn_forward(&h0, &adj, &p, GgnnShape { rounds: 4, aggregator: Aggregator::Sum }).unwrap();
        for s in t.states() {
            assert_eq!(s.row(0), s.row(1));
        }
    }

    #[test]
    fn zero_rounds_rejected() {
        let p = GgnnParams::zeros(2, false, None);
        let adj = one_type(1, vec![]);
        let r = ggnn_forward(&Array2::zeros((1, 2)), &adj, &p, GgnnShape { rounds: 0, aggregator: Aggregator::Sum });
        assert!(matches!(r, Err(GgnnError::NoRounds)));
    }
}
