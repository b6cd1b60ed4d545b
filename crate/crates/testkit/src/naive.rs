//! Loop-by-loop recomputation of the model forward pass.
//!
//! Everything here works on plain nested `Vec`s with explicit index loops,
//! pads the convolution input all the way to `m_max`, and shares no code
//! with the optimized implementation beyond the parameter containers.

use vulngraph::config::RunConfig;
use vulngraph::ggnn::{Adjacency, Aggregator, GgnnParams};
use vulngraph::model::{ModelParams, Sample};
use vulngraph::nn::Mlp;
use vulngraph::readout::{ConvHead, ConvPath, FlatHead, Head};

pub type Mat = Vec<Vec<f64>>;

fn to_mat(a: &ndarray::Array2<f64>) -> Mat {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `W v` for a row-major `W`.
fn matvec(w: &ndarray::Array2<f64>, v: &[f64]) -> Vec<f64> {
    (0..w.nrows()).map(|i| (0..w.ncols()).map(|j| w[[i, j]] * v[j]).sum()).collect()
}

/// Node states after every round of message passing.
pub fn ggnn(h0: &Mat, adj: &Adjacency, p: &GgnnParams, rounds: usize, aggregator: Aggregator) -> Mat {
    let m = h0.len();
    let z = p.b.len();
    let mut h = h0.clone();
    for _ in 0..rounds {
        let mut per_type: Vec<Mat> = Vec::new();
        for ty in &adj.types {
            let w = &p.w[ty.slot()];
            let mut a = vec![vec![0.0; z]; m];
            for &(s, d) in &ty.edges {
                let msg = matvec(w, &h[s]);
                for k in 0..z {
                    a[d][k] += msg[k] + p.b[k];
                }
            }
            per_type.push(a);
        }
        let mut agg = vec![vec![0.0; z]; m];
        for v in 0..m {
            for k in 0..z {
                let vals: Vec<f64> = per_type.iter().map(|a| a[v][k]).collect();
                agg[v][k] = match aggregator {
                    Aggregator::Sum => vals.iter().sum(),
                    Aggregator::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
                    Aggregator::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Aggregator::Concat => f64::NAN,
                };
            }
            if aggregator == Aggregator::Concat {
                let cat: Vec<f64> = per_type.iter().flat_map(|a| a[v].iter().copied()).collect();
                agg[v] = matvec(p.projection.as_ref().expect("projection"), &cat);
            }
        }
        let g = &p.gru;
        let mut next = vec![vec![0.0; z]; m];
        for v in 0..m {
            let (wa_u, uh_u) = (matvec(&g.w_u, &agg[v]), matvec(&g.u_u, &h[v]));
            let (wa_r, uh_r) = (matvec(&g.w_r, &agg[v]), matvec(&g.u_r, &h[v]));
            let u: Vec<f64> = (0..z).map(|k| sigmoid(wa_u[k] + uh_u[k] + g.b_u[k])).collect();
            let r: Vec<f64> = (0..z).map(|k| sigmoid(wa_r[k] + uh_r[k] + g.b_r[k])).collect();
            let rh: Vec<f64> = (0..z).map(|k| r[k] * h[v][k]).collect();
            let (wa_h, uh_h) = (matvec(&g.w_h, &agg[v]), matvec(&g.u_h, &rh));
            for k in 0..z {
                let c = (wa_h[k] + uh_h[k] + g.b_h[k]).tanh();
                next[v][k] = (1.0 - u[k]) * h[v][k] + u[k] * c;
            }
        }
        h = next;
    }
    h
}

/// Scalar output of the MLP for one input row.
pub fn mlp(net: &Mlp, x: &[f64]) -> f64 {
    let mut cur = x.to_vec();
    let last = net.layers.len() - 1;
    for (i, l) in net.layers.iter().enumerate() {
        let mut next = matvec(&l.w, &cur);
        for (k, v) in next.iter_mut().enumerate() {
            *v += l.b[k];
            if i < last {
                *v = v.tanh();
            }
        }
        cur = next;
    }
    cur[0]
}

/// Per-row scores of one convolutional path over an already padded input.
pub fn conv_path(p: &ConvPath, input: &Mat) -> Vec<f64> {
    let rows = input.len();
    let cols = input[0].len();
    let width = p.f1.ncols();
    let conv_cols = cols - width + 1;
    let pool1_cols = (conv_cols - 3) / 2 + 1;
    let channels = p.f1.nrows();

    let mut merged = vec![vec![p.b2[0]; pool1_cols]; rows];
    for c in 0..channels {
        for r in 0..rows {
            let act: Vec<f64> = (0..conv_cols)
                .map(|j| {
                    let s: f64 = (0..width).map(|k| p.f1[[c, k]] * input[r][j + k]).sum();
                    (s + p.b1[c]).max(0.0)
                })
                .collect();
            for j in 0..pool1_cols {
                let pooled = act[2 * j].max(act[2 * j + 1]).max(act[2 * j + 2]);
                merged[r][j] += p.f2[[0, c]] * pooled;
            }
        }
    }
    let relu: Mat = merged.iter().map(|row| row.iter().map(|v| v.max(0.0)).collect()).collect();
    let pool2_cols = (pool1_cols - 2) / 2 + 1;
    (0..rows - 1)
        .map(|i| {
            let row: Vec<f64> = (0..pool2_cols)
                .map(|j| {
                    let (a, b) = (2 * j, 2 * j + 1);
                    relu[i][a].max(relu[i][b]).max(relu[i + 1][a]).max(relu[i + 1][b])
                })
                .collect();
            mlp(&p.mlp, &row)
        })
        .collect()
}

/// Conv readout logit with the input padded to `m_max` rows.
pub fn conv_logit(head: &ConvHead, h: &Mat, x: &Mat, m_max: usize, mask_padding: bool) -> f64 {
    let m = h.len();
    let (z, d) = (h[0].len(), x[0].len());
    let mut zin = vec![vec![0.0; z + d]; m_max];
    let mut yin = vec![vec![0.0; z]; m_max];
    for v in 0..m {
        zin[v][..z].copy_from_slice(&h[v]);
        zin[v][z..].copy_from_slice(&x[v]);
        yin[v].copy_from_slice(&h[v]);
    }
    let sz = conv_path(&head.z_path, &zin);
    let sy = conv_path(&head.y_path, &yin);
    // Output row i pools input rows i and i + 1.
    let rows: Vec<usize> = (0..m_max - 1).filter(|&i| !mask_padding || i < m).collect();
    rows.iter().map(|&i| sz[i] * sy[i]).sum::<f64>() / rows.len() as f64
}

pub fn flat_logit(head: &FlatHead, h: &Mat, x: &Mat) -> f64 {
    h.iter()
        .zip(x)
        .map(|(hv, xv)| {
            let row: Vec<f64> = hv.iter().chain(xv).copied().collect();
            mlp(&head.mlp, &row)
        })
        .sum()
}

/// `H⁽⁰⁾ = [X, 0]`.
pub fn initial_state(x: &Mat, z: usize) -> Mat {
    x.iter()
        .map(|row| {
            let mut h = row.clone();
            h.resize(z, 0.0);
            h
        })
        .collect()
}

/// Full model logit of a sample whose features are used as given.
pub fn logit(params: &ModelParams, cfg: &RunConfig, sample: &Sample) -> f64 {
    let x = to_mat(&sample.x);
    let h0 = initial_state(&x, cfg.z);
    let h = ggnn(&h0, &sample.adj, &params.ggnn, cfg.time_steps, cfg.aggregator);
    match &params.head {
        Head::Conv(c) => conv_logit(c, &h, &x, cfg.m_max, cfg.mask_padding),
        Head::Flat(f) => flat_logit(f, &h, &x),
    }
}

pub fn states(params: &ModelParams, cfg: &RunConfig, sample: &Sample) -> Mat {
    let x = to_mat(&sample.x);
    ggnn(&initial_state(&x, cfg.z), &sample.adj, &params.ggnn, cfg.time_steps, cfg.aggregator)
}
