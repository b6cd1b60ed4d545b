//! Central finite differences against the analytic gradient.

use vulngraph::config::RunConfig;
use vulngraph::model::{objective, objective_and_gradient, ModelParams, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares every parameter's gradient with `(f(θ+h) − f(θ−h)) / 2h`.
/// The relative error is `|a − n| / max(|a|, |n|, floor)`.
pub fn check_gradients(params: &ModelParams, cfg: &RunConfig, samples: &[&Sample], step: f64, floor: f64) -> GradCheck {
    let (_, grads) = objective_and_gradient(params, cfg, samples).expect("gradient");
    let analytic = grads.to_vecs();
    let base = params.to_vecs();
    let mut names = Vec::new();
    params.for_each(|name, _, _, _| names.push(name));

    let mut out = GradCheck { max_rel_error: 0.0, worst: (String::new(), 0), analytic: 0.0, numeric: 0.0, checked: 0 };
    let mut probe = params.clone();
    let mut eval = |t: usize, k: usize, value: f64| {
        let mut v = base.clone();
        v[t][k] = value;
        probe.load_vecs(&v).expect("same layout");
        objective(&probe, cfg, samples).expect("objective")
    };
    for t in 0..base.len() {
        for k in 0..base[t].len() {
            let x = base[t][k];
            let numeric = (eval(t, k, x + step) - eval(t, k, x - step)) / (2.0 * step);
            let a = analytic[t][k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            out.checked += 1;
            if out.checked == 1 || err > out.max_rel_error {
                out.max_rel_error = err;
                out.worst = (names[t].clone(), k);
                out.analytic = a;
                out.numeric = numeric;
            }
        }
    }
    out
}
