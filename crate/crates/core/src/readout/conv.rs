//! Convolutional readout.
//!
//! Each path treats its input as an image with nodes as rows and features as
//! columns. Stage 1 is a bank of width-3 filters along the feature axis, ReLU,
//! and a (1,3)/(1,2) max-pool per channel. Stage 2 merges the channels with a
//! 1×1 convolution, ReLU, and a (2,2)/(1,2) max-pool, which is the only step
//! that mixes adjacent rows.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ReadoutError;
use crate::nn::{init_matrix, sigmoid, Mlp, MlpTrace};

pub const FILTER_WIDTH: usize = 3;
pub const POOL1: ((usize, usize), (usize, usize)) = ((1, 3), (1, 2));
pub const POOL2: ((usize, usize), (usize, usize)) = ((2, 2), (1, 2));

fn pooled_len(n: usize, window: usize, stride: usize) -> Option<usize> {
    (n >= window).then(|| (n - window) / stride + 1)
}

/// Valid 1-D convolution of every row with `filter` (cross-correlation).
pub fn conv_rows(m: ArrayView2<f64>, filter: &[f64], bias: f64) -> Result<Array2<f64>, ReadoutError> {
    let (rows, cols) = m.dim();
    let w = filter.len();
    if cols < w {
        return Err(ReadoutError::TooFewColumns { cols, need: w });
    }
    let out_cols = cols - w + 1;
    let mut out = Array2::from_elem((rows, out_cols), bias);
    for (k, &f) in filter.iter().enumerate() {
        if f != 0.0 {
            out.scaled_add(f, &m.slice(s![.., k..k + out_cols]));
        }
    }
    Ok(out)
}

/// Max-pool with the given window and stride; ties go to the first position
/// in row-major order. Returns the pooled matrix and the flat argmax of each
/// output cell.
pub fn max_pool(
    m: ArrayView2<f64>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(Array2<f64>, Array2<usize>), ReadoutError> {
    let (rows, cols) = m.dim();
    let out_rows = pooled_len(rows, window.0, stride.0).ok_or(ReadoutError::TooFewRows { rows, need: window.0 })?;
    let out_cols =
        pooled_len(cols, window.1, stride.1).ok_or(ReadoutError::TooFewColumns { cols, need: window.1 })?;
    let mut out = Array2::zeros((out_rows, out_cols));
    let mut arg = Array2::zeros((out_rows, out_cols));
    for i in 0..out_rows {
        for j in 0..out_cols {
            let (r0, c0) = (i * stride.0, j * stride.1);
            let mut best = (r0, c0);
            for r in r0..r0 + window.0 {
                for c in c0..c0 + window.1 {
                    if m[[r, c]] > m[best] {
                        best = (r, c);
                    }
                }
            }
            out[[i, j]] = m[best];
            arg[[i, j]] = best.0 * cols + best.1;
        }
    }
    Ok((out, arg))
}

fn unpool(d: &Array2<f64>, arg: &Array2<usize>, shape: (usize, usize)) -> Array2<f64> {
    let mut out = Array2::zeros(shape);
    let cols = shape.1;
    for (g, &a) in d.iter().zip(arg.iter()) {
        out[[a / cols, a % cols]] += g;
    }
    out
}

fn relu(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| v.max(0.0))
}

/// Single-channel `MAXPOOL(ReLU(CONV(m)))`.
pub fn conv_sigma(
    m: ArrayView2<f64>,
    filter: &[f64],
    bias: f64,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<Array2<f64>, ReadoutError> {
    let pre = conv_rows(m, filter, bias)?;
    Ok(max_pool(relu(&pre).view(), window, stride)?.0)
}

/// Columns left after both stages for an input of `cols` features.
pub fn output_cols(cols: usize) -> Option<usize> {
    let c1 = cols.checked_sub(FILTER_WIDTH - 1)?;
    let p1 = pooled_len(c1, POOL1.0 .1, POOL1.1 .1)?;
    pooled_len(p1, POOL2.0 .1, POOL2.1 .1)
}

/// Parameters of one path (Z or Y).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvPath {
    /// `channels × FILTER_WIDTH`.
    pub f1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `1 × channels` weights of the 1×1 merge.
    pub f2: Array2<f64>,
    pub b2: Array1<f64>,
    pub mlp: Mlp,
}

impl ConvPath {
    pub fn zeros(cols: usize, channels: usize, hidden: &[usize]) -> Result<Self, ReadoutError> {
        let out = output_cols(cols).ok_or(ReadoutError::TooFewColumns { cols, need: min_cols() })?;
        Ok(ConvPath {
            f1: Array2::zeros((channels, FILTER_WIDTH)),
            b1: Array1::zeros(channels),
            f2: Array2::zeros((1, channels)),
            b2: Array1::zeros(1),
            mlp: Mlp::zeros(out, hidden),
        })
    }

    pub fn init(cols: usize, channels: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self, ReadoutError> {
        let mut p = Self::zeros(cols, channels, hidden)?;
        p.f1 = init_matrix(channels, FILTER_WIDTH, rng);
        p.f2 = init_matrix(1, channels, rng);
        let out = p.mlp.input_dim();
        p.mlp = Mlp::init(out, hidden, rng);
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.f1.nrows()
    }
}

/// Smallest input width that survives both stages.
pub fn min_cols() -> usize {
    (1..).find(|&c| output_cols(c).is_some()).expect("some width fits")
}

#[derive(Debug, Clone)]
pub struct PathTrace {
    input: Array2<f64>,
    pre1: Vec<Array2<f64>>,
    arg1: Vec<Array2<usize>>,
    pool1: Vec<Array2<f64>>,
    pre2: Array2<f64>,
    arg2: Array2<usize>,
    pool2: Array2<f64>,
    mlp: MlpTrace,
    pub scores: Array1<f64>,
}

impl ConvPath {
    pub fn forward(&self, m: Array2<f64>) -> Result<PathTrace, ReadoutError> {
        let mut pre1 = Vec::with_capacity(self.channels());
        let mut arg1 = Vec::with_capacity(self.channels());
        let mut pool1 = Vec::with_capacity(self.channels());
        for c in 0..self.channels() {
            let f = self.f1.row(c).to_vec();
            let pre = conv_rows(m.view(), &f, self.b1[c])?;
            let (p, a) = max_pool(relu(&pre).view(), POOL1.0, POOL1.1)?;
            pre1.push(pre);
            arg1.push(a);
            pool1.push(p);
        }
        let mut pre2 = Array2::from_elem(pool1[0].dim(), self.b2[0]);
        for (c, p) in pool1.iter().enumerate() {
            pre2.scaled_add(self.f2[[0, c]], p);
        }
        let (pool2, arg2) = max_pool(relu(&pre2).view(), POOL2.0, POOL2.1)?;
        let (scores, mlp) = self.mlp.forward(pool2.view());
        Ok(PathTrace { input: m, pre1, arg1, pool1, pre2, arg2, pool2, mlp, scores })
    }

    /// Returns `∂L/∂input` given `∂L/∂scores`.
    pub fn backward(&self, t: &PathTrace, d_scores: &Array1<f64>, grads: &mut ConvPath) -> Array2<f64> {
        let d_pool2 = self.mlp.backward(&t.mlp, d_scores, &mut grads.mlp);
        let mut d_pre2 = unpool(&d_pool2, &t.arg2, t.pre2.dim());
        d_pre2.zip_mut_with(&t.pre2, |g, &x| {
            if x <= 0.0 {
                *g = 0.0
            }
        });
        grads.b2[0] += d_pre2.sum();

        let mut d_in = Array2::zeros(t.input.dim());
        for c in 0..self.channels() {
            grads.f2[[0, c]] += (&d_pre2 * &t.pool1[c]).sum();
            let d_pool1 = &d_pre2 * self.f2[[0, c]];
            let mut d_pre1 = unpool(&d_pool1, &t.arg1[c], t.pre1[c].dim());
            d_pre1.zip_mut_with(&t.pre1[c], |g, &x| {
                if x <= 0.0 {
                    *g = 0.0
                }
            });
            grads.b1[c] += d_pre1.sum();
            let out_cols = d_pre1.ncols();
            for k in 0..FILTER_WIDTH {
                let window = t.input.slice(s![.., k..k + out_cols]);
                grads.f1[[c, k]] += (&d_pre1 * &window).sum();
                d_in.slice_mut(s![.., k..k + out_cols]).scaled_add(self.f1[[c, k]], &d_pre1);
            }
        }
        d_in
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvHead {
    /// Path over `[H, X]`.
    pub z_path: ConvPath,
    /// Path over `H`.
    pub y_path: ConvPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub m_max: usize,
    /// Average only over rows that involve at least one real node.
    pub mask_padding: bool,
}

impl ConvHead {
    pub fn zeros(z: usize, d: usize, channels: usize, hidden: &[usize]) -> Result<Self, ReadoutError> {
        Ok(ConvHead {
            z_path: ConvPath::zeros(z + d, channels, hidden)?,
            y_path: ConvPath::zeros(z, channels, hidden)?,
        })
    }

    pub fn init(z: usize, d: usize, channels: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self, ReadoutError> {
        Ok(ConvHead {
            z_path: ConvPath::init(z + d, channels, hidden, rng)?,
            y_path: ConvPath::init(z, channels, hidden, rng)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConvTrace {
    m: usize,
    z: usize,
    averaged: usize,
    zt: PathTrace,
    yt: PathTrace,
    pub logit: f64,
}

/// Number of padded rows fed to the convolutions and the number of output
/// rows that enter the average.
pub fn padded_rows(m: usize, geometry: ConvGeometry) -> (usize, usize) {
    let full_out = geometry.m_max - 1;
    if geometry.mask_padding {
        // Output row i only reads input rows i and i+1, so one padding row
        // beyond the real ones reproduces the fully padded result.
        let rows = (m + 1).min(geometry.m_max);
        (rows, m.min(full_out))
    } else {
        (geometry.m_max, full_out)
    }
}

pub fn conv_forward(
    h: &Array2<f64>,
    x: &Array2<f64>,
    head: &ConvHead,
    geometry: ConvGeometry,
) -> Result<ConvTrace, ReadoutError> {
    let (m, z) = h.dim();
    if x.nrows() != m {
        return Err(ReadoutError::ShapeMismatch { what: "X rows", expected: m, found: x.nrows() });
    }
    if m > geometry.m_max {
        return Err(ReadoutError::NodeCapExceeded(m));
    }
    if m == 0 || geometry.m_max < 2 {
        return Err(ReadoutError::TooFewRows { rows: m.min(geometry.m_max), need: 2 });
    }
    let (rows, averaged) = padded_rows(m, geometry);
    let d = x.ncols();
    let mut zin = Array2::zeros((rows, z + d));
    zin.slice_mut(s![..m, ..z]).assign(h);
    zin.slice_mut(s![..m, z..]).assign(x);
    let mut yin = Array2::zeros((rows, z));
    yin.slice_mut(s![..m, ..]).assign(h);

    let zt = head.z_path.forward(zin)?;
    let yt = head.y_path.forward(yin)?;
    if zt.scores.len() != yt.scores.len() {
        return Err(ReadoutError::ShapeMismatch {
            what: "pooled rows",
            expected: zt.scores.len(),
            found: yt.scores.len(),
        });
    }
    let prod = &zt.scores.slice(s![..averaged]) * &yt.scores.slice(s![..averaged]);
    let logit = prod.sum() / averaged as f64;
    Ok(ConvTrace { m, z, averaged, zt, yt, logit })
}

impl ConvTrace {
    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }
}

/// Returns `(∂L/∂H, ∂L/∂X)` given `∂L/∂logit`.
pub fn conv_backward(
    t: &ConvTrace,
    d_logit: f64,
    head: &ConvHead,
    grads: &mut ConvHead,
) -> (Array2<f64>, Array2<f64>) {
    let n = t.zt.scores.len();
    let mut dz = Array1::zeros(n);
    let mut dy = Array1::zeros(n);
    let g = d_logit / t.averaged as f64;
    for i in 0..t.averaged {
        dz[i] = g * t.yt.scores[i];
        dy[i] = g * t.zt.scores[i];
    }
    let dzin = head.z_path.backward(&t.zt, &dz, &mut grads.z_path);
    let dyin = head.y_path.backward(&t.yt, &dy, &mut grads.y_path);
    let mut dh = dzin.slice(s![..t.m, ..t.z]).to_owned();
    dh += &dyin.slice(s![..t.m, ..]);
    let dx = dzin.slice(s![..t.m, t.z..]).to_owned();
    (dh, dx)
}

/// Pooled rows of a path, for inspection.
pub fn pooled(trace: &ConvTrace) -> (&Array2<f64>, &Array2<f64>) {
    (&trace.zt.pool2, &trace.yt.pool2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn negative_input_pools_to_zero() {
        let m = Array2::from_elem((3, 9), -1.0);
        let out = conv_sigma(m.view(), &[1.0, 1.0, 1.0], 0.0, POOL1.0, POOL1.1).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_filter_keeps_constant() {
        let m = Array2::from_elem((2, 10), 2.5);
        let out = conv_sigma(m.view(), &[0.0, 1.0, 0.0], 0.0, POOL1.0, POOL1.1).unwrap();
        assert_eq!(out.dim(), (2, 3));
        assert!(out.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn too_few_columns() {
        let m = Array2::zeros((2, 2));
        assert!(matches!(conv_rows(m.view(), &[1.0, 0.0, 0.0], 0.0), Err(ReadoutError::TooFewColumns { .. })));
    }

    #[test]
    fn pool_tie_goes_to_first() {
        let m = array![[1.0, 1.0, 0.0]];
        let (p, a) = max_pool(m.view(), (1, 2), (1, 1)).unwrap();
        assert_eq!(p, array![[1.0, 1.0]]);
        assert_eq!(a, array![[0usize, 1]]);
    }

    #[test]
    fn stage_two_reduces_rows_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = ConvHead::init(8, 6, 4, &[], &mut rng).unwrap();
        let h = Array2::from_shape_fn((5, 8), |(i, j)| ((i * 3 + j) % 7) as f64 * 0.1);
        let x = Array2::from_shape_fn((5, 6), |(i, j)| ((i + j) % 2) as f64);
        let t = conv_forward(&h, &x, &head, ConvGeometry { m_max: 20, mask_padding: true }).unwrap();
        assert_eq!(t.zt.scores.len(), 5);
        assert_eq!(t.averaged, 5);
        let t = conv_forward(&h, &x, &head, ConvGeometry { m_max: 5, mask_padding: true }).unwrap();
        assert_eq!(t.averaged, 4);
    }

    #[test]
    fn masked_matches_fully_padded_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let head = ConvHead::init(8, 6, 4, &[3], &mut rng).unwrap();
        let h = Array2::from_shape_fn((4, 8), |(i, j)| ((i * 5 + j * 3) % 11) as f64 * 0.1 - 0.4);
        let x = Array2::from_shape_fn((4, 6), |(i, j)| ((i + j) % 3) as f64);
        let masked = conv_forward(&h, &x, &head, ConvGeometry { m_max: 30, mask_padding: true }).unwrap();
        let full = conv_forward(&h, &x, &head, ConvGeometry { m_max: 30, mask_padding: false }).unwrap();
        let prefix: f64 =
            (0..4).map(|i| full.zt.scores[i] * full.yt.scores[i]).sum::<f64>() / 4.0;
        assert!((masked.logit - prefix).abs() < 1e-12);
        assert_eq!(full.averaged, 29);
    }

    #[test]
    fn zero_y_mlp_gives_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut head = ConvHead::init(8, 6, 4, &[], &mut rng).unwrap();
        head.y_path.mlp = Mlp::zeros(head.y_path.mlp.input_dim(), &[]);
        let h = Array2::from_elem((3, 8), 0.7);
        let x = Array2::from_elem((3, 6), 1.0);
        let t = conv_forward(&h, &x, &head, ConvGeometry { m_max: 10, mask_padding: true }).unwrap();
        assert_eq!(t.probability(), 0.5);
    }

    #[test]
    fn node_cap() {
        let head = ConvHead::zeros(8, 6, 2, &[]).unwrap();
        let r = conv_forward(&Array2::zeros((11, 8)), &Array2::zeros((11, 6)), &head, ConvGeometry {
            m_max: 10,
            mask_padding: true,
        });
        assert!(matches!(r, Err(ReadoutError::NodeCapExceeded(11))));
    }
}
