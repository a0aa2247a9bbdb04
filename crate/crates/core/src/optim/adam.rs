use std::f64::consts::PI;
use std::time::Instant;

use super::{check_finite_vec, Objective, OptimizerInternals, TrainOptions, TrainState};
use crate::error::{invalid, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr0: f64) -> Self {
        Self { lr0, lr_min: 1e-6_f64.min(lr0), beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

/// Cosine decay from `lr0` at `t = 0` to `lr_min` at `t = total`.
pub fn cosine_lr(lr0: f64, lr_min: f64, t: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    let frac = (t.min(total) as f64) / total as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * frac).cos())
}

/// Adam with bias correction and a cosine learning-rate schedule.
pub fn run_adam(
    obj: &dyn Objective,
    theta: Vec<f64>,
    steps: usize,
    cfg: AdamConfig,
    opts: &TrainOptions,
) -> Result<TrainState> {
    if steps == 0 {
        return invalid("Adam needs at least one step");
    }
    if !(cfg.lr0 >= 0.0 && cfg.lr_min >= 0.0 && cfg.lr_min <= cfg.lr0) {
        return invalid(format!("invalid learning rates lr0={} lr_min={}", cfg.lr0, cfg.lr_min));
    }
    let n = obj.dim();
    let mut st = TrainState::start(obj, theta, opts)?;
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let mut lr = cfg.lr0;
    for t in 0..steps {
        let t0 = Instant::now();
        lr = cosine_lr(cfg.lr0, cfg.lr_min, t, steps);
        let (_, g) = obj.loss_grad(&st.theta)?;
        let k = (t + 1) as i32;
        let c1 = 1.0 - b1.powi(k);
        let c2 = 1.0 - b2.powi(k);
        for i in 0..n {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            st.theta[i] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
        check_finite_vec(&st.theta, "Adam update")?;
        let loss = obj.loss(&st.theta)?;
        if st.record(obj, opts, loss, t0, lr)? {
            break;
        }
    }
    st.internals = OptimizerInternals::Adam { m, v };
    st.finish(obj, opts, lr)?;
    Ok(st)
}
