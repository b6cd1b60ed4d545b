//! Flat readout: a per-node MLP over `[H, X]`, summed over nodes.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;

use super::ReadoutError;
use crate::nn::{sigmoid, Mlp, MlpTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct FlatHead {
    pub mlp: Mlp,
}

impl FlatHead {
    pub fn zeros(z: usize, d: usize, hidden: &[usize]) -> Self {
        FlatHead { mlp: Mlp::zeros(z + d, hidden) }
    }

    pub fn init(z: usize, d: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        FlatHead { mlp: Mlp::init(z + d, hidden, rng) }
    }
}

#[derive(Debug, Clone)]
pub struct FlatTrace {
    z: usize,
    mlp: MlpTrace,
    pub logit: f64,
}

impl FlatTrace {
    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }
}

pub fn flat_forward(h: &Array2<f64>, x: &Array2<f64>, head: &FlatHead) -> Result<FlatTrace, ReadoutError> {
    if h.nrows() != x.nrows() {
        return Err(ReadoutError::ShapeMismatch { what: "X rows", expected: h.nrows(), found: x.nrows() });
    }
    let width = h.ncols() + x.ncols();
    if width != head.mlp.input_dim() {
        return Err(ReadoutError::ShapeMismatch { what: "[H, X] columns", expected: head.mlp.input_dim(), found: width });
    }
    let input = concatenate(Axis(1), &[h.view(), x.view()]).expect("row counts checked");
    let (scores, mlp) = head.mlp.forward(input.view());
    Ok(FlatTrace { z: h.ncols(), mlp, logit: scores.sum() })
}

/// Returns `(∂L/∂H, ∂L/∂X)` given `∂L/∂logit`.
pub fn flat_backward(t: &FlatTrace, d_logit: f64, head: &FlatHead, grads: &mut FlatHead) -> (Array2<f64>, Array2<f64>) {
    let rows = t.mlp.rows();
    let d_in = head.mlp.backward(&t.mlp, &Array1::from_elem(rows, d_logit), &mut grads.mlp);
    (d_in.slice(s![.., ..t.z]).to_owned(), d_in.slice(s![.., t.z..]).to_owned())
}
