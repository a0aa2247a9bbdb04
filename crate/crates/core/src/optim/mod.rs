//! Optimizers over a flat parameter vector and the shared training loop.
//!
//! Every optimizer works against the [`Objective`] trait: a loss with an
//! analytic gradient and Hessian-vector products. Training records one loss
//! value and one wall-clock time per completed iteration and an optional
//! accuracy metric every `log_every` iterations.

mod adam;
mod gd;
mod least_squares;
mod nncg;
mod stages;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{cosine_lr, run_adam, AdamConfig};
pub use gd::{run_gd, StepSize};
pub use least_squares::LeastSquaresObjective;
pub use nncg::{run_nncg, HvpMode, LineSearch, NncgConfig, NystromPreconditioner};
pub use stages::{run_optimizer, run_stages, OptimizerSpec, Reference, Stage};

/// Linearized Hessian action at a fixed parameter vector.
pub type HessianOp<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a>;

/// A differentiable training loss.
pub trait Objective {
    fn dim(&self) -> usize;

    fn loss(&self, theta: &[f64]) -> Result<f64>;

    fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Hessian (Gauss-Newton or exact) of the loss at `theta`, as an operator.
    fn hessian_at<'a>(&'a self, theta: &[f64], mode: HvpMode) -> Result<HessianOp<'a>>;

    /// True when the loss is an exact quadratic in the parameters.
    fn is_quadratic(&self) -> bool;

    /// Accuracy metric (relative L2 error against a reference), if available.
    fn metric(&self, _theta: &[f64]) -> Option<Result<f64>> {
        None
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StepsExhausted,
    LossTarget,
    Stalled,
}

/// Optimizer-specific state carried between iterations.
#[derive(Debug, Clone, Default)]
pub enum OptimizerInternals {
    #[default]
    None,
    Gd {
        step: f64,
    },
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
    },
    Nncg {
        damping: f64,
        preconditioner: Option<NystromPreconditioner>,
    },
}

/// Settings shared by every optimizer run.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Interval (in iterations) between metric evaluations and progress lines.
    pub log_every: usize,
    /// Print progress to standard error.
    pub progress: bool,
    /// Stop as soon as the loss drops to this value.
    pub loss_target: Option<f64>,
    /// Label printed at the start of progress lines.
    pub label: String,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { log_every: 100, progress: false, loss_target: None, label: String::new() }
    }
}

/// Parameters, histories and optimizer internals after a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub theta: Vec<f64>,
    /// Completed iterations.
    pub iteration: usize,
    pub initial_loss: f64,
    /// Loss after each completed iteration.
    pub loss_history: Vec<f64>,
    /// `(iteration, metric)` pairs; iteration 0 is the starting point.
    pub l2re_history: Vec<(usize, f64)>,
    /// Wall-clock milliseconds spent in each iteration.
    pub wall_ms: Vec<f64>,
    pub internals: OptimizerInternals,
    pub stop_reason: StopReason,
}

impl TrainState {
    pub(crate) fn start(obj: &dyn Objective, theta: Vec<f64>, opts: &TrainOptions) -> Result<Self> {
        if theta.len() != obj.dim() {
            return Err(Error::DimensionMismatch { expected: obj.dim(), got: theta.len() });
        }
        let loss = obj.loss(&theta)?;
        check_finite(loss, 0)?;
        let mut st = Self {
            theta,
            iteration: 0,
            initial_loss: loss,
            loss_history: Vec::new(),
            l2re_history: Vec::new(),
            wall_ms: Vec::new(),
            internals: OptimizerInternals::None,
            stop_reason: StopReason::StepsExhausted,
        };
        st.log_metric(obj, opts, f64::NAN)?;
        Ok(st)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(self.initial_loss)
    }

    pub fn final_l2re(&self) -> Option<f64> {
        self.l2re_history.last().map(|p| p.1)
    }

    /// Record a completed iteration; returns true when training should stop
    /// because the loss target was reached.
    pub(crate) fn record(
        &mut self,
        obj: &dyn Objective,
        opts: &TrainOptions,
        loss: f64,
        started: Instant,
        rate: f64,
    ) -> Result<bool> {
        check_finite(loss, self.iteration + 1)?;
        self.iteration += 1;
        self.loss_history.push(loss);
        self.wall_ms.push(started.elapsed().as_secs_f64() * 1e3);
        let hit = opts.loss_target.is_some_and(|t| loss <= t);
        if opts.log_every > 0 && self.iteration.is_multiple_of(opts.log_every) {
            self.log_metric(obj, opts, rate)?;
        }
        if hit {
            self.stop_reason = StopReason::LossTarget;
        }
        Ok(hit)
    }

    /// Evaluate the metric at the end of a run if the last iteration was not logged.
    pub(crate) fn finish(&mut self, obj: &dyn Objective, opts: &TrainOptions, rate: f64) -> Result<()> {
        let logged = self.l2re_history.last().map(|p| p.0) == Some(self.iteration);
        if !logged {
            self.log_metric(obj, opts, rate)?;
        }
        Ok(())
    }

    fn log_metric(&mut self, obj: &dyn Objective, opts: &TrainOptions, rate: f64) -> Result<()> {
        let metric = match obj.metric(&self.theta) {
            Some(m) => {
                let m = m?;
                self.l2re_history.push((self.iteration, m));
                Some(m)
            }
            None => None,
        };
        if opts.progress {
            let loss = self.final_loss();
            let m = metric.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
            eprintln!(
                "{}iter {:>7}  loss {:.6e}  l2re {}  step {:.3e}",
                if opts.label.is_empty() { String::new() } else { format!("[{}] ", opts.label) },
                self.iteration,
                loss,
                m,
                rate
            );
        }
        Ok(())
    }
}

fn check_finite(loss: f64, iteration: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite loss {loss} at iteration {iteration}")))
    }
}

pub(crate) fn check_finite_vec(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
