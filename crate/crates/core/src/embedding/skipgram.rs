//! Skip-gram with negative sampling over token streams.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::EmbeddingTable;
use super::vocab::Vocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub d_code: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig { d_code: 16, window: 5, negatives: 5, epochs: 5, learning_rate: 0.025, seed: 0 }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Input and output vector tables of a skip-gram model.
#[derive(Debug, Clone)]
pub struct SkipGram {
    pub input: Array2<f64>,
    pub output: Array2<f64>,
    config: SkipGramConfig,
    rng: ChaCha8Rng,
    noise_cdf: Vec<f64>,
}

impl SkipGram {
    pub fn new(vocab: &Vocab, config: SkipGramConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d_code;
        let bound = 0.5 / d as f64;
        let input = Array2::from_shape_fn((vocab.len(), d), |_| rng.gen_range(-bound..bound));
        let output = Array2::zeros((vocab.len(), d));

        // Unigram^0.75 noise distribution; OOV has zero count so is never drawn.
        let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let noise_cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();

        SkipGram { input, output, config, rng, noise_cdf }
    }

    pub fn config(&self) -> &SkipGramConfig {
        &self.config
    }

    fn draw_negative(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        let i = self.noise_cdf.partition_point(|&c| c <= u);
        i.min(self.noise_cdf.len() - 1)
    }

    /// (center, context) pairs within the window, in corpus order.
    pub fn pairs(sentences: &[Vec<usize>], window: usize) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for s in sentences {
            for (i, &center) in s.iter().enumerate() {
                let lo = i.saturating_sub(window);
                let hi = (i + window + 1).min(s.len());
                for (j, &ctx) in s.iter().enumerate().take(hi).skip(lo) {
                    if j != i {
                        pairs.push((center, ctx));
                    }
                }
            }
        }
        pairs
    }

    /// Runs `config.epochs` passes of SGD with a linearly decaying rate.
    pub fn train(&mut self, sentences: &[Vec<usize>]) {
        let pairs = Self::pairs(sentences, self.config.window);
        let total = (pairs.len() * self.config.epochs).max(1) as f64;
        let lr0 = self.config.learning_rate;
        let mut step = 0usize;
        let mut grad_in = Array1::zeros(self.config.d_code);

        for _ in 0..self.config.epochs {
            for &(center, ctx) in &pairs {
                let lr = lr0 * (1.0 - step as f64 / total).max(1e-4);
                step += 1;
                grad_in.fill(0.0);
                for k in 0..=self.config.negatives {
                    let (target, label) = if k == 0 {
                        (ctx, 1.0)
                    } else {
                        let t = self.draw_negative();
                        if t == ctx {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let v_in = self.input.row(center);
                    let mut v_out = self.output.row_mut(target);
                    let g = lr * (label - sigmoid(v_in.dot(&v_out)));
                    grad_in.scaled_add(g, &v_out);
                    v_out.scaled_add(g, &v_in);
                }
                self.input.row_mut(center).scaled_add(1.0, &grad_in);
            }
        }
    }

    /// Input vectors rounded to single precision, with the OOV row replaced
    /// by the mean of all other rows.
    pub fn table(&self) -> EmbeddingTable {
        let mut m = self.input.mapv(|v| v as f32 as f64);
        if m.nrows() > 1 {
            let mean = m.slice(ndarray::s![1.., ..]).mean_axis(Axis(0)).expect("non-empty");
            m.row_mut(0).assign(&mean.mapv(|v| v as f32 as f64));
        }
        EmbeddingTable::new(m)
    }
}

pub fn train_skipgram(vocab: &Vocab, sentences: &[Vec<usize>], config: SkipGramConfig) -> EmbeddingTable {
    let mut sg = SkipGram::new(vocab, config);
    sg.train(sentences);
    sg.table()
}
