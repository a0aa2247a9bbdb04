use serde::{Deserialize, Serialize};

use super::{
    run_adam, run_gd, run_nncg, AdamConfig, HvpMode, LineSearch, NncgConfig, Objective, StepSize, TrainOptions,
    TrainState,
};
use crate::error::{invalid, Result};
use crate::grid::{AxisSpec, TensorGrid};
use crate::model::BwlerModel;
use crate::pde::{CollocationScheme, PdeProblem, PinnObjective};

/// One optimizer block of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerSpec {
    Gd {
        steps: usize,
        #[serde(default = "auto_step")]
        step_size: StepSize,
    },
    Adam {
        steps: usize,
        #[serde(default = "default_lr0")]
        lr0: f64,
        #[serde(default)]
        lr_min: Option<f64>,
    },
    Nncg {
        steps: usize,
        rank: usize,
        cg_iters: usize,
        #[serde(default)]
        damping: Option<f64>,
        #[serde(default)]
        hvp_mode: HvpMode,
        #[serde(default)]
        line_search: LineSearch,
        #[serde(default)]
        precond_every: Option<usize>,
        #[serde(default)]
        cg_tol: Option<f64>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn auto_step() -> StepSize {
    StepSize::Auto
}

fn default_lr0() -> f64 {
    1e-3
}

impl OptimizerSpec {
    pub fn steps(&self) -> usize {
        match self {
            OptimizerSpec::Gd { steps, .. } | OptimizerSpec::Adam { steps, .. } | OptimizerSpec::Nncg { steps, .. } => {
                *steps
            }
        }
    }

    pub fn with_steps(mut self, n: usize) -> Self {
        match &mut self {
            OptimizerSpec::Gd { steps, .. } | OptimizerSpec::Adam { steps, .. } | OptimizerSpec::Nncg { steps, .. } => {
                *steps = n
            }
        }
        self
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Gd { .. } => "gd",
            OptimizerSpec::Adam { .. } => "adam",
            OptimizerSpec::Nncg { .. } => "nncg",
        }
    }

    /// Newton-CG settings of an `nncg` block; `fallback_seed` is used when
    /// the block does not set its own.
    pub fn nncg_config(&self, fallback_seed: u64) -> Option<NncgConfig> {
        match self {
            OptimizerSpec::Nncg {
                rank, cg_iters, damping, hvp_mode, line_search, precond_every, cg_tol, seed, ..
            } => {
                let mut c = NncgConfig::new(*rank, *cg_iters);
                c.damping = *damping;
                c.hvp_mode = *hvp_mode;
                c.line_search = *line_search;
                c.precond_every = *precond_every;
                if let Some(t) = cg_tol {
                    c.cg_tol = *t;
                }
                c.seed = seed.unwrap_or(fallback_seed);
                Some(c)
            }
            _ => None,
        }
    }
}

/// Run a single optimizer block.
pub fn run_optimizer(
    obj: &dyn Objective,
    theta: Vec<f64>,
    spec: &OptimizerSpec,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainState> {
    match spec {
        OptimizerSpec::Gd { steps, step_size } => run_gd(obj, theta, *steps, *step_size, opts),
        OptimizerSpec::Adam { steps, lr0, lr_min } => {
            let mut cfg = AdamConfig::new(*lr0);
            if let Some(m) = lr_min {
                cfg.lr_min = *m;
            }
            run_adam(obj, theta, *steps, cfg, opts)
        }
        OptimizerSpec::Nncg { steps, .. } => {
            let cfg = spec.nncg_config(seed).expect("nncg block");
            run_nncg(obj, theta, *steps, &cfg, opts)
        }
    }
}

/// One stage of a multi-stage run; `grid` switches to a new discretization
/// of the same domain (the model is warm-started by interpolation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub grid: Option<Vec<AxisSpec>>,
}

/// Reference data `(points, values)` used for the accuracy metric.
pub type Reference = (Vec<Vec<f64>>, Vec<f64>);

/// Run stages in sequence, warm-starting each from the previous model.
/// Histories are concatenated with continuous iteration numbering.
#[allow(clippy::too_many_arguments)]
pub fn run_stages(
    problem: &PdeProblem,
    model: BwlerModel,
    lambda_ibc: f64,
    scheme: &CollocationScheme,
    stages: &[Stage],
    seed: u64,
    reference: Option<&Reference>,
    opts: &TrainOptions,
) -> Result<(BwlerModel, TrainState)> {
    if stages.is_empty() {
        return invalid("at least one stage is required");
    }
    let mut model = model;
    let mut merged: Option<TrainState> = None;
    for (k, stage) in stages.iter().enumerate() {
        if let Some(specs) = &stage.grid {
            let grid = TensorGrid::from_specs(specs)?;
            if !grid.same_domain(model.grid()) {
                return invalid(format!("stage {k} grid covers a different domain"));
            }
            let fresh = BwlerModel::with_deriv(grid, model.deriv_config().to_vec())?;
            model = fresh.warm_start_from(&model)?;
        }
        let mut obj = PinnObjective::new(problem, &model, lambda_ibc, scheme)?;
        if let Some((pts, vals)) = reference {
            obj = obj.with_reference(pts.clone(), vals.clone())?;
        }
        let mut stage_opts = opts.clone();
        if stage_opts.label.is_empty() && stages.len() > 1 {
            stage_opts.label = format!("stage {k} {}", stage.optimizer.name());
        }
        let st = run_optimizer(&obj, model.theta().to_vec(), &stage.optimizer, seed, &stage_opts)?;
        model = model.with_theta(st.theta.clone())?;
        merged = Some(match merged {
            None => st,
            Some(mut acc) => {
                let off = acc.iteration;
                acc.loss_history.extend_from_slice(&st.loss_history);
                acc.wall_ms.extend_from_slice(&st.wall_ms);
                acc.l2re_history.extend(st.l2re_history.iter().map(|&(i, v)| (i + off, v)));
                acc.iteration += st.iteration;
                acc.theta = st.theta;
                acc.internals = st.internals;
                acc.stop_reason = st.stop_reason;
                acc
            }
        });
    }
    Ok((model, merged.expect("at least one stage")))
}
