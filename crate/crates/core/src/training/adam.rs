use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, cfg: AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let g = grads.to_vecs();
    let mut m_all = state.m.to_vecs();
    let mut v_all = state.v.to_vecs();
    let mut i = 0;
    params.for_each_mut(|_, theta| {
        let (m, v) = (&mut m_all[i], &mut v_all[i]);
        for k in 0..theta.len() {
            let gk = g[i][k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            theta[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        i += 1;
    });
    state.m.load_vecs(&m_all).expect("moments mirror params");
    state.v.load_vecs(&v_all).expect("moments mirror params");
}
