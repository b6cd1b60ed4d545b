//! Small dense building blocks shared by the readout heads.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Glorot-uniform `rows × cols` matrix.
pub fn init_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Row-wise MLP with tanh hidden layers and a single linear output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input of every layer; hidden ones are post-tanh.
    inputs: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn rows(&self) -> usize {
        self.inputs[0].nrows()
    }
}

impl Mlp {
    /// `hidden` empty gives a single linear layer.
    pub fn zeros(input: usize, hidden: &[usize]) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| Dense { w: Array2::zeros((w[1], w[0])), b: Array1::zeros(w[1]) })
            .collect();
        Mlp { layers }
    }

    pub fn init(input: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut mlp = Self::zeros(input, hidden);
        for l in &mut mlp.layers {
            l.w = init_matrix(l.w.nrows(), l.w.ncols(), rng);
        }
        mlp
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    /// One scalar per row of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> (Array1<f64>, MlpTrace) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = cur.dot(&l.w.t()) + &l.b;
            if i < last {
                next.mapv_inplace(f64::tanh);
            }
            inputs.push(cur);
            cur = next;
        }
        (cur.column(0).to_owned(), MlpTrace { inputs })
    }

    /// Accumulates into `grads` and returns `∂L/∂x`.
    pub fn backward(&self, trace: &MlpTrace, d_out: &Array1<f64>, grads: &mut Mlp) -> Array2<f64> {
        let mut d = d_out.clone().insert_axis(Axis(1));
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            grads.layers[i].w += &d.t().dot(input);
            grads.layers[i].b += &d.sum_axis(Axis(0));
            let mut dx = d.dot(&l.w);
            if i > 0 {
                dx.zip_mut_with(input, |g, &a| *g *= 1.0 - a * a);
            }
            d = dx;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_mlp_matches_hand_value() {
        let mut mlp = Mlp::zeros(2, &[]);
        mlp.layers[0].w = array![[2.0, -1.0]];
        mlp.layers[0].b = array![0.5];
        let (y, _) = mlp.forward(array![[1.0, 1.0], [0.0, 3.0]].view());
        assert_eq!(y, array![1.5, -2.5]);
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let mlp = Mlp::zeros(4, &[3]);
        let (y, _) = mlp.forward(Array2::from_elem((5, 4), 2.0).view());
        assert!(y.iter().all(|&v| v == 0.0));
    }
}
