//! Command-line runner: load a config, build the problem, train, and write
//! `report.json`, `trace.csv`, `model.ckpt` and probe tables.
//!
//! Exit status is 0 on success, 2 for configuration errors and 3 for
//! numerical failures; failures also leave an `error.json` record in the
//! output directory when it can be created.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{ProbeConfig, ProbeKind, RunConfig, SubcommandKind, TrainSection};

use crate::analysis::{
    collocation_matrix, decomposition_experiment, epsilon_op, fit_power_law, gram_kappa_sq, interp_fit,
    lebesgue_constant, theory_probe, EpsOpConfig, ExperimentReport, LinearOperatorSpec, RuntimeStats, Trace,
};
use crate::diff::{DiffMethod, DiffOperator};
use crate::error::{Error, Result};
use crate::grid::{Basis, Grid1D, TensorGrid};
use crate::linalg::sym_condition;
use crate::model::BwlerModel;
use crate::optim::{run_stages, Objective, Stage, TrainOptions, TrainState};
use crate::pde::{load_reference, PdeProblem, PinnObjective, PROBLEM_NAMES};
use crate::report::{write_report, write_table, ErrorRecord, CHECKPOINT_FILE};

#[derive(Debug, Parser)]
#[command(name = "spinn", version, about = "Spectral interpolant PDE solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML, or a JSON config / report to re-run).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (decompose only).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Cap on the steps of every optimizer stage.
    #[arg(long, global = true)]
    pub max_steps: Option<usize>,
    /// Suppress progress lines.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit sin(kx) on [-1, 1] with a Chebyshev node-value model.
    Interp {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        frequency: Option<f64>,
    },
    /// Train a model on a benchmark PDE.
    Solve {
        #[arg(long)]
        problem: Option<String>,
    },
    /// Conditioning and mis-specification probes.
    Probe {
        kind: Option<ProbeKind>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Stencil-size precision/conditioning experiment on convection.
    Decompose,
    /// Print the built-in benchmarks and their defaults.
    ListProblems,
}

/// Process exit status for an error.
pub fn exit_status(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) | Error::Unavailable(_) => 2,
        Error::Numerical(_) | Error::NonFinite(_) => 3,
        _ => 1,
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err((e, out)) => {
            let status = exit_status(&e);
            eprintln!("error: {e}");
            if let Some(dir) = out {
                let rec = ErrorRecord::from_error(&e, status);
                if std::fs::create_dir_all(&dir).is_ok() {
                    if let Ok(text) = serde_json::to_string_pretty(&rec) {
                        let _ = std::fs::write(dir.join("error.json"), text + "\n");
                    }
                }
            }
            status
        }
    }
}

/// Text of `list-problems`.
pub fn list_problems() -> String {
    let mut s = String::new();
    for name in PROBLEM_NAMES {
        let p = PdeProblem::from_name(name).expect("built-in name");
        s.push_str(&p.describe());
        s.push('\n');
    }
    s
}

/// Run a parsed command line. On failure the error comes back with the
/// output directory (if one was resolved) so a record can be written there.
pub fn run(cli: &Cli) -> std::result::Result<Option<ExperimentReport>, (Error, Option<PathBuf>)> {
    if let Command::ListProblems = cli.command {
        print!("{}", list_problems());
        return Ok(None);
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| (e, cli.out.clone()))?,
        None => RunConfig::default(),
    };
    let kind = match cli.command {
        Command::Interp { .. } => SubcommandKind::Interp,
        Command::Solve { .. } => SubcommandKind::Solve,
        Command::Probe { .. } => SubcommandKind::Probe,
        Command::Decompose => SubcommandKind::Decompose,
        Command::ListProblems => unreachable!(),
    };
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));
    if let Some(s) = cfg.subcommand {
        if s != kind {
            return Err((
                Error::Config(format!("config is for `{}` but `{}` was requested", s.name(), kind.name())),
                Some(out),
            ));
        }
    }
    cfg.subcommand = Some(kind);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.out = Some(out.clone());
    std::fs::create_dir_all(&out).map_err(|e| (Error::Io(e), Some(out.clone())))?;
    let ctx = Ctx { max_steps: cli.max_steps, jobs: cli.jobs, progress: !cli.quiet };
    let result = match &cli.command {
        Command::Interp { n, m, frequency } => {
            if let Some(n) = n {
                cfg.interp.n = *n;
            }
            if let Some(m) = m {
                cfg.interp.m = *m;
            }
            if let Some(f) = frequency {
                cfg.interp.frequency = *f;
            }
            run_interp(&mut cfg, &ctx, &out)
        }
        Command::Solve { problem } => {
            if let Some(name) = problem {
                match PdeProblem::from_name(name) {
                    Ok(p) => {
                        if cfg.problem.is_some_and(|c| c.name() != p.name()) {
                            Err(Error::Config(format!("--problem {name} conflicts with the config")))
                        } else {
                            cfg.problem.get_or_insert(p);
                            run_solve(&mut cfg, &ctx, &out)
                        }
                    }
                    Err(e) => Err(e),
                }
            } else {
                run_solve(&mut cfg, &ctx, &out)
            }
        }
        Command::Probe { kind, n, m, seeds, trials } => {
            if let Some(k) = kind {
                cfg.probe.kind = *k;
            }
            if let Some(n) = n {
                cfg.probe.n = *n;
            }
            if let Some(m) = m {
                cfg.probe.m = *m;
            }
            if let Some(s) = seeds {
                cfg.probe.seeds = *s;
            }
            if let Some(t) = trials {
                cfg.probe.trials = *t;
            }
            run_probe(&mut cfg, &out)
        }
        Command::Decompose => run_decompose(&mut cfg, &ctx, &out),
        Command::ListProblems => unreachable!(),
    };
    result.map(Some).map_err(|e| (e, Some(out)))
}

struct Ctx {
    max_steps: Option<usize>,
    jobs: usize,
    progress: bool,
}

fn train_options(cfg: &RunConfig, ctx: &Ctx, label: &str) -> TrainOptions {
    TrainOptions {
        log_every: cfg.train.log_every,
        progress: ctx.progress,
        loss_target: cfg.train.loss_target,
        label: label.to_string(),
    }
}

fn finish(mut report: ExperimentReport, started: Instant, iterations: usize, out: &Path) -> Result<ExperimentReport> {
    let total_s = started.elapsed().as_secs_f64();
    report.runtime = RuntimeStats {
        total_s,
        iterations,
        mean_iteration_ms: if iterations > 0 { 1e3 * total_s / iterations as f64 } else { 0.0 },
    };
    write_report(out, &report)?;
    Ok(report)
}

#[derive(Serialize)]
struct SweepRow {
    n: usize,
    l2re: f64,
    direct_l2re: f64,
    kappa_sq: Option<f64>,
    iterations: usize,
}

fn run_interp(cfg: &mut RunConfig, ctx: &Ctx, out: &Path) -> Result<ExperimentReport> {
    let started = Instant::now();
    if let Some(cap) = ctx.max_steps {
        cfg.interp.steps = cfg.interp.steps.min(cap);
    }
    let ic = cfg.interp.clone();
    let opts = TrainOptions { log_every: cfg.train.log_every.max(1) * 100, ..train_options(cfg, ctx, "interp") };
    let (res, st) = interp_fit(&ic, ic.n, cfg.seed, &opts)?;
    let mut report = ExperimentReport::new("interp", cfg.seed, cfg.to_json()?);
    report.metric("l2re", res.l2re);
    report.metric("direct_l2re", res.direct_l2re);
    report.metric("final_loss", res.final_loss);
    report.metric("iterations", res.iterations as f64);
    if let Some(k) = res.kappa_sq {
        report.metric("kappa_sq", k);
    }
    report.traces.push(Trace::from_state(format!("n={}", ic.n), &st));
    let mut rows = Vec::new();
    for &n in &ic.sweep {
        let r = if n == ic.n { res.clone() } else { interp_fit(&ic, n, cfg.seed, &opts)?.0 };
        rows.push(SweepRow {
            n,
            l2re: r.l2re,
            direct_l2re: r.direct_l2re,
            kappa_sq: r.kappa_sq,
            iterations: r.iterations,
        });
    }
    report.tables.insert("sweep".into(), serde_json::to_value(&rows)?);
    write_table(out, "interp_sweep.csv", &rows)?;
    let grid = TensorGrid::new(vec![Grid1D::chebyshev(ic.n, -1.0, 1.0)?])?;
    BwlerModel::new(grid).with_theta(st.theta.clone())?.save_checkpoint(&out.join(CHECKPOINT_FILE))?;
    finish(report, started, st.iteration, out)
}

fn run_solve(cfg: &mut RunConfig, ctx: &Ctx, out: &Path) -> Result<ExperimentReport> {
    let started = Instant::now();
    let problem =
        cfg.problem.ok_or_else(|| Error::Config("solve needs a problem (config [problem] or --problem)".into()))?;
    let specs = cfg.grid.clone().unwrap_or_else(|| problem.default_grid());
    let grid = TensorGrid::from_specs(&specs)?;
    let deriv = cfg.deriv.clone().unwrap_or_else(|| problem.default_deriv(&grid));
    let lambda = cfg.lambda_ibc.unwrap_or_else(|| problem.default_lambda());
    if cfg.stages.is_empty() {
        cfg.stages = vec![Stage { optimizer: problem.default_optimizer(), grid: None }];
    }
    if let Some(cap) = ctx.max_steps {
        for s in &mut cfg.stages {
            s.optimizer = s.optimizer.clone().with_steps(s.optimizer.steps().min(cap));
        }
    }
    cfg.grid = Some(specs);
    cfg.deriv = Some(deriv.clone());
    cfg.lambda_ibc = Some(lambda);
    let reference = match &cfg.reference {
        Some(p) => Some(load_reference(p, grid.ndim())?),
        None => None,
    };
    let model = BwlerModel::with_deriv(grid, deriv)?;
    let opts = train_options(cfg, ctx, problem.name());
    let (model, st) =
        run_stages(&problem, model, lambda, &cfg.collocation, &cfg.stages, cfg.seed, reference.as_ref(), &opts)?;

    let mut report = ExperimentReport::new("solve", cfg.seed, cfg.to_json()?);
    report.metric("final_loss", st.final_loss());
    report.metric("initial_loss", st.initial_loss);
    report.metric("iterations", st.iteration as f64);
    if let Some(e) = st.final_l2re() {
        report.metric("l2re", e);
    }
    let obj = PinnObjective::new(&problem, &model, lambda, &cfg.collocation)?;
    let (pde, ibc) = obj.loss_terms(model.theta())?;
    report.metric("loss_pde", pde);
    report.metric("loss_ibc", ibc);
    for (name, r) in obj.residual_parts(model.theta())?.ibc {
        report.metric(&format!("ibc_sup_{name}"), r.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    report.traces.push(trace(&problem, &st));
    model.save_checkpoint(&out.join(CHECKPOINT_FILE))?;
    finish(report, started, st.iteration, out)
}

fn trace(problem: &PdeProblem, st: &TrainState) -> Trace {
    Trace::from_state(problem.name(), st)
}

#[derive(Serialize)]
struct GramRow {
    seed: u64,
    kappa_sq_emp: f64,
}

#[derive(Serialize)]
struct SizeRow {
    n: usize,
    value: f64,
}

fn run_probe(cfg: &mut RunConfig, out: &Path) -> Result<ExperimentReport> {
    let started = Instant::now();
    let pc = cfg.probe.clone();
    let mut report = ExperimentReport::new("probe", cfg.seed, cfg.to_json()?);
    match pc.kind {
        ProbeKind::Gram => {
            if pc.seeds == 0 {
                return Err(Error::Config("probe.seeds must be at least 1".into()));
            }
            let rows = (0..pc.seeds as u64)
                .map(|s| {
                    let seed = cfg.seed.wrapping_add(s);
                    Ok(GramRow { seed, kappa_sq_emp: gram_kappa_sq(pc.n, pc.m, pc.sampling, seed)? })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut k: Vec<f64> = rows.iter().map(|r| r.kappa_sq_emp).collect();
            report.metric("kappa_sq_emp", k[0]);
            k.sort_by(|a, b| a.total_cmp(b));
            let med = if k.len() % 2 == 1 { k[k.len() / 2] } else { 0.5 * (k[k.len() / 2 - 1] + k[k.len() / 2]) };
            report.metric("kappa_sq_emp_median", med);
            report.metric("kappa_sq_pop", 2.0);
            report.metric("fraction_le_3", k.iter().filter(|v| **v <= 3.0).count() as f64 / k.len() as f64);
            write_table(out, "gram.csv", &rows)?;
        }
        ProbeKind::Lebesgue => {
            let rows = pc
                .ns
                .iter()
                .map(|&n| {
                    let g = Grid1D::chebyshev(n, -1.0, 1.0)?;
                    Ok(SizeRow { n, value: lebesgue_constant(&g, (20 * (n + 1)).max(2000))? })
                })
                .collect::<Result<Vec<_>>>()?;
            for r in &rows {
                report.metric(&format!("lebesgue_{}", r.n), r.value);
            }
            write_table(out, "lebesgue.csv", &rows)?;
        }
        ProbeKind::Epsop => {
            let ec = EpsOpConfig { trials: pc.trials, dense: pc.dense, decay: pc.decay, seed: cfg.seed };
            let rows = pc
                .ns
                .iter()
                .map(|&n| {
                    let (g, spectral) = match pc.basis {
                        Basis::Fourier => {
                            (Grid1D::fourier(n, 0.0, 2.0 * std::f64::consts::PI)?, DiffMethod::FourierMatrix)
                        }
                        Basis::Chebyshev => (Grid1D::chebyshev(n, -1.0, 1.0)?, DiffMethod::ChebSpectral),
                    };
                    let t = DiffOperator::new(&g, spectral, 1)?;
                    let s =
                        DiffOperator::new(&g, DiffMethod::FiniteDifference { half_bandwidth: pc.half_bandwidth }, 1)?;
                    Ok(SizeRow { n, value: epsilon_op(&g, &t, &s, &ec)? })
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.len() >= 2 {
                let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
                let ys: Vec<f64> = rows.iter().map(|r| r.value).collect();
                report.metric("decay_exponent", -fit_power_law(&xs, &ys)?);
            }
            for r in &rows {
                report.metric(&format!("eps_op_{}", r.n), r.value);
            }
            write_table(out, "epsop.csv", &rows)?;
        }
        ProbeKind::Collocation => {
            let spec = LinearOperatorSpec::constant(&[(pc.order, 1.0)]);
            let rows = pc
                .ns
                .iter()
                .map(|&n| {
                    let g = Grid1D::chebyshev(n, -1.0, 1.0)?;
                    let (a, _) = collocation_matrix(&spec, &g, DiffMethod::ChebSpectral)?;
                    let k = sym_condition(&a.tr_mul(&a)).unwrap_or(f64::INFINITY);
                    Ok(SizeRow { n, value: k })
                })
                .collect::<Result<Vec<_>>>()?;
            for r in &rows {
                report.metric(&format!("kappa_sq_{}", r.n), r.value);
            }
            write_table(out, "collocation.csv", &rows)?;
        }
        ProbeKind::Theory => {
            let p = theory_probe(pc.n, pc.m, pc.sampling, cfg.seed, pc.frequency)?;
            if let Some(k) = p.kappa_sq {
                report.metric("kappa_sq_emp", k);
            }
            report.metric("lebesgue", p.lebesgue);
            report.metric("eps_op", p.eps_op);
            if let Some(r) = p.rho_fit {
                report.metric("rho_fit", r);
            }
            report.probes.push(p);
        }
    }
    finish(report, started, 0, out)
}

#[derive(Serialize)]
struct DecompRow<'a> {
    label: &'a str,
    half_bandwidth: Option<usize>,
    plateau: f64,
    final_loss: f64,
    early_slope: f64,
    kappa_sq: Option<f64>,
    iterations: usize,
    wall_s: f64,
}

fn run_decompose(cfg: &mut RunConfig, ctx: &Ctx, out: &Path) -> Result<ExperimentReport> {
    let started = Instant::now();
    if let Some(cap) = ctx.max_steps {
        let o = cfg.decompose.optimizer.clone();
        cfg.decompose.optimizer = o.clone().with_steps(o.steps().min(cap));
    }
    let rows = decomposition_experiment(&cfg.decompose, cfg.seed, ctx.jobs, ctx.progress)?;
    let mut report = ExperimentReport::new("decompose", cfg.seed, cfg.to_json()?);
    let mut iterations = 0;
    for r in &rows {
        let key = r.label.replace([' ', '='], "_");
        report.metric(&format!("plateau_{key}"), r.plateau);
        report.metric(&format!("early_slope_{key}"), r.early_slope);
        if let Some(k) = r.kappa_sq {
            report.metric(&format!("kappa_sq_{key}"), k);
        }
        let mut loss = vec![r.initial_loss];
        loss.extend_from_slice(&r.loss_history);
        report.traces.push(Trace { label: r.label.clone(), loss, l2re: r.l2re_history.clone() });
        iterations += r.iterations;
    }
    let table: Vec<DecompRow> = rows
        .iter()
        .map(|r| DecompRow {
            label: &r.label,
            half_bandwidth: r.half_bandwidth,
            plateau: r.plateau,
            final_loss: r.final_loss,
            early_slope: r.early_slope,
            kappa_sq: r.kappa_sq,
            iterations: r.iterations,
            wall_s: r.wall_s,
        })
        .collect();
    report.tables.insert("decomposition".into(), serde_json::to_value(&table)?);
    write_table(out, "decomposition.csv", &table)?;
    finish(report, started, iterations, out)
}

/// Objective value of a saved model under a problem's default loss.
pub fn checkpoint_loss(problem: &PdeProblem, path: &Path) -> Result<f64> {
    let model = BwlerModel::load_checkpoint(path)?;
    let obj = PinnObjective::new(problem, &model, problem.default_lambda(), &Default::default())?;
    obj.loss(model.theta())
}
