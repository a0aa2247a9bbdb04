//! Error metrics and conditioning / mis-specification probes.
//!
//! Everything here is a diagnostic around the solver: relative errors,
//! interpolation and Gram matrices of 1-D Chebyshev models, Lebesgue
//! constants, collocation matrices of linear operators, Monte-Carlo estimates
//! of the gap between a true derivative and its discrete surrogate, the 1-D
//! interpolation study, and the stencil-size decomposition experiment on
//! the convection equation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diff::{DiffMethod, DiffOperator};
use crate::error::{invalid, Error, Result};
use crate::grid::{Basis, Grid1D, TensorGrid};
use crate::interp::{cardinal_weights, evaluation_matrix};
use crate::linalg::{sym_condition, sym_eigenvalues};
use crate::model::{node_derivative_matrix, BwlerModel};
use crate::optim::{
    run_gd, run_optimizer, HvpMode, LeastSquaresObjective, Objective, OptimizerSpec, StepSize, TrainOptions, TrainState,
};
use crate::pde::{equispaced, CollocationScheme, PdeProblem, PinnObjective};

/// Relative ℓ₂ error `‖pred − truth‖ / ‖truth‖`.
pub fn l2re(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
    }
    let den = truth.iter().map(|b| b * b).sum::<f64>().sqrt();
    if den == 0.0 || !den.is_finite() {
        return invalid("reference values have zero (or non-finite) norm");
    }
    let num = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// `L[i][j] = ℓ_j(x_i)`: cardinal functions of `grid` at the sample points.
pub fn interpolation_matrix(grid: &Grid1D, samples: &[f64]) -> Result<DMatrix<f64>> {
    evaluation_matrix(grid, samples)
}

/// Empirical and population value Gram matrices with their condition numbers.
#[derive(Debug, Clone)]
pub struct GramMatrices {
    pub g_emp: DMatrix<f64>,
    pub g_pop: DMatrix<f64>,
    /// `f64::INFINITY` when `G_emp` is numerically singular.
    pub kappa_sq_emp: f64,
    pub kappa_sq_pop: f64,
}

/// `G_emp = LᵀL / M` and the diagonal `G_pop` built from the Chebyshev
/// quadrature weights under the `dx/2` normalization.
pub fn gram_matrices(l: &DMatrix<f64>, n: usize) -> Result<GramMatrices> {
    if l.nrows() == 0 {
        return invalid("interpolation matrix has no rows");
    }
    if l.ncols() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: l.ncols() });
    }
    let m = l.nrows() as f64;
    let g_emp = l.tr_mul(l) / m;
    let w = crate::grid::clenshaw_curtis_weights(n)?;
    let g_pop = DMatrix::from_diagonal(&DVector::from_iterator(n + 1, w.iter().map(|v| 0.5 * v)));
    let kappa_sq_emp = sym_condition(&g_emp).unwrap_or(f64::INFINITY);
    let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = w.iter().copied().fold(0.0, f64::max);
    Ok(GramMatrices { g_emp, g_pop, kappa_sq_emp, kappa_sq_pop: hi / lo })
}

/// How 1-D training samples are drawn on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleDistribution {
    /// i.i.d. uniform.
    #[default]
    Uniform,
    /// i.i.d. arcsine (`cos` of a uniform angle), matching the node density.
    Chebyshev,
    /// Deterministic equispaced points including both ends.
    Equispaced,
}

pub fn draw_samples(dist: SampleDistribution, m: usize, a: f64, b: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dist {
        SampleDistribution::Uniform => (0..m).map(|_| a + (b - a) * rng.random::<f64>()).collect(),
        SampleDistribution::Chebyshev => (0..m)
            .map(|_| {
                let c = (PI * rng.random::<f64>()).cos();
                (a + 0.5 * (c + 1.0) * (b - a)).clamp(a, b)
            })
            .collect(),
        SampleDistribution::Equispaced => equispaced(a, b, m),
    }
}

/// κ²(G_emp) for `m` samples of `dist` on the degree-`n` Chebyshev grid of `[-1, 1]`.
pub fn gram_kappa_sq(n: usize, m: usize, dist: SampleDistribution, seed: u64) -> Result<f64> {
    let grid = Grid1D::chebyshev(n, -1.0, 1.0)?;
    let xs = draw_samples(dist, m, -1.0, 1.0, seed);
    Ok(gram_matrices(&interpolation_matrix(&grid, &xs)?, n)?.kappa_sq_emp)
}

/// `max_x Σ_j |ℓ_j(x)|` over `resolution` equispaced points of the interval.
pub fn lebesgue_constant(grid: &Grid1D, resolution: usize) -> Result<f64> {
    if resolution < 10 * grid.len() {
        return invalid(format!("resolution {resolution} is below 10 × {} nodes", grid.len()));
    }
    let (a, b) = grid.interval();
    let mut best: f64 = 0.0;
    for x in equispaced(a, b, resolution) {
        let s: f64 = cardinal_weights(grid, x)?.to_dense(grid.len()).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    Ok(best)
}

type CoefFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A linear 1-D operator `Σ_α a_α(x) ∂^α u` with right-hand side `g(x)`.
#[derive(Clone)]
pub struct LinearOperatorSpec {
    pub terms: Vec<(usize, CoefFn)>,
    pub rhs: CoefFn,
}

impl std::fmt::Debug for LinearOperatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let orders: Vec<usize> = self.terms.iter().map(|t| t.0).collect();
        f.debug_struct("LinearOperatorSpec").field("orders", &orders).finish_non_exhaustive()
    }
}

impl LinearOperatorSpec {
    /// Constant coefficients, zero right-hand side.
    pub fn constant(terms: &[(usize, f64)]) -> Self {
        Self {
            terms: terms.iter().map(|&(o, a)| (o, Arc::new(move |_| a) as CoefFn)).collect(),
            rhs: Arc::new(|_| 0.0),
        }
    }

    pub fn with_rhs(mut self, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.rhs = Arc::new(g);
        self
    }
}

/// Square collocation matrix `Ã[i][j] = (L̃ ℓ_j)(x_i)` at the grid nodes and
/// the right-hand side sampled there; derivatives use `method`.
pub fn collocation_matrix(
    spec: &LinearOperatorSpec,
    grid: &Grid1D,
    method: DiffMethod,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if spec.terms.is_empty() {
        return invalid("operator has no terms");
    }
    let n = grid.len();
    let mut a = DMatrix::zeros(n, n);
    for (order, coef) in &spec.terms {
        let d = if *order == 0 { DMatrix::identity(n, n) } else { DiffOperator::new(grid, method, *order)?.matrix() };
        for (i, &x) in grid.nodes().iter().enumerate() {
            let c = coef(x);
            for j in 0..n {
                a[(i, j)] += c * d[(i, j)];
            }
        }
    }
    let rhs = grid.nodes().iter().map(|&x| (spec.rhs)(x)).collect();
    Ok((a, rhs))
}

/// Rows of the (linear) PDE residual operator at the nodal collocation
/// points of `model`.
pub fn pde_collocation_matrix(problem: &PdeProblem, model: &BwlerModel) -> Result<DMatrix<f64>> {
    let form = problem.residual_form();
    if !form.is_linear() {
        return invalid(format!("{} is nonlinear; no collocation matrix", problem.name()));
    }
    let fields = form.fields();
    let mut coefs = vec![0.0; fields.len()];
    form.partials(&vec![0.0; fields.len()], &mut coefs);
    let n = model.num_params();
    let mut full = DMatrix::zeros(n, n);
    for (orders, c) in fields.iter().zip(&coefs) {
        full += node_derivative_matrix(model, orders)? * *c;
    }
    let keep: Vec<usize> =
        model.grid().node_points().iter().enumerate().filter(|(_, p)| problem.in_domain(p)).map(|(i, _)| i).collect();
    Ok(full.select_rows(keep.iter()))
}

/// Settings of the Monte-Carlo mis-specification estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsOpConfig {
    pub trials: usize,
    /// Points of the dense grid used to normalize each test function.
    pub dense: usize,
    /// Coefficient `k` of a test function is scaled by `decay^(-k)`.
    pub decay: f64,
    pub seed: u64,
}

impl Default for EpsOpConfig {
    fn default() -> Self {
        Self { trials: 200, dense: 2048, decay: 2.0, seed: 0 }
    }
}

/// Random unit-sup-norm test function on `grid`: node values of a random
/// Chebyshev series (or trigonometric polynomial on a periodic axis).
/// Trial `t` with the same seed yields the same leading coefficients for
/// every grid size.
fn random_unit_function(grid: &Grid1D, cfg: &EpsOpConfig, trial: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    match grid.basis() {
        Basis::Chebyshev => {
            let n = grid.n();
            let c: Vec<f64> =
                (0..=n).map(|k| rng.sample::<f64, _>(StandardNormal) * cfg.decay.powi(-(k as i32))).collect();
            let series = |t: f64| -> f64 {
                let theta = t.clamp(-1.0, 1.0).acos();
                c.iter().enumerate().map(|(k, ck)| ck * (k as f64 * theta).cos()).sum()
            };
            let sup = (0..cfg.dense)
                .map(|i| series(-1.0 + 2.0 * i as f64 / (cfg.dense - 1) as f64).abs())
                .fold(0.0, f64::max);
            grid.canonical_nodes().iter().map(|&t| series(t) / sup).collect()
        }
        Basis::Fourier => {
            let len = grid.len();
            let kmax = if len.is_multiple_of(2) { len / 2 - 1 } else { (len - 1) / 2 };
            let ab: Vec<(f64, f64)> = (0..=kmax)
                .map(|k| {
                    let s = cfg.decay.powi(-(k as i32));
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    (a * s, if k == 0 { 0.0 } else { b * s })
                })
                .collect();
            let series = |t: f64| -> f64 {
                ab.iter().enumerate().map(|(k, (a, b))| a * (k as f64 * t).cos() + b * (k as f64 * t).sin()).sum()
            };
            let sup = (0..cfg.dense).map(|i| series(2.0 * PI * i as f64 / cfg.dense as f64).abs()).fold(0.0, f64::max);
            grid.canonical_nodes().iter().map(|&t| series(t) / sup).collect()
        }
    }
}

/// Monte-Carlo lower estimate of `sup ‖(L − L̃) v‖∞` over unit-sup-norm
/// polynomials `v` representable on the grid.
pub fn epsilon_op(grid: &Grid1D, true_op: &DiffOperator, surrogate: &DiffOperator, cfg: &EpsOpConfig) -> Result<f64> {
    let n = grid.len();
    if true_op.axis_op().ncols() != n || surrogate.axis_op().ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: surrogate.axis_op().ncols() });
    }
    if cfg.trials == 0 || cfg.dense < 2 {
        return invalid("epsilon_op needs at least one trial and two dense points");
    }
    let mut worst: f64 = 0.0;
    for t in 0..cfg.trials {
        let v = random_unit_function(grid, cfg, t);
        let a = true_op.apply(&v);
        let b = surrogate.apply(&v);
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Least-squares slope of `log(y)` against `log(x)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return invalid("power-law fit needs at least two (x, y) pairs");
    }
    if xs.iter().chain(ys).any(|v| *v <= 0.0 || !v.is_finite()) {
        return invalid("power-law fit needs positive finite data");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    Ok(slope(&lx, &ly))
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Geometric decay rate `ρ` from errors at increasing `N`, fitted on the
/// pre-plateau part (points up to the first that fails to improve by 2× or
/// falls below `floor`).
pub fn fit_decay_rate(ns: &[usize], errs: &[f64], floor: f64) -> Option<f64> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, (&n, &e)) in ns.iter().zip(errs).enumerate() {
        if !(e > 0.0 && e.is_finite()) {
            break;
        }
        if i > 0 && (e > 0.5 * errs[i - 1] || e < floor) {
            if e >= floor {
                break;
            }
            x.push(n as f64);
            y.push(e.ln());
            break;
        }
        x.push(n as f64);
        y.push(e.ln());
    }
    if x.len() < 2 {
        return None;
    }
    Some((-slope(&x, &y)).exp())
}

/// Theory quantities for one 1-D configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryProbe {
    pub n: usize,
    pub m: usize,
    /// κ²(G_emp) of `m` training samples; `None` when singular.
    pub kappa_sq: Option<f64>,
    pub lebesgue: f64,
    /// Spectral first derivative vs. the 3-point stencil.
    pub eps_op: f64,
    pub rho_fit: Option<f64>,
    /// `(M_f, M_u)`: largest sampled modulus of the target on the Bernstein
    /// ellipse of the fitted `ρ`.
    pub bound_constants: Option<(f64, f64)>,
}

/// Target `sin(ω x)` on `[-1, 1]` used by the interpolation study and probes.
pub fn sine_target(freq: f64) -> impl Fn(f64) -> f64 {
    move |x| (freq * x).sin()
}

/// Largest `|sin(ω z)|` over 256 points of the Bernstein ellipse `E_ρ`.
fn ellipse_sup(freq: f64, rho: f64) -> f64 {
    (0..256)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / 256.0;
            let w = Complex::from_polar(rho, phi);
            let z = (w + w.inv()) * 0.5;
            (z * freq).sin().abs()
        })
        .fold(0.0, f64::max)
}

/// Node-interpolation error of `sin(ω x)` on `[-1, 1]` with `n`: relative
/// ℓ₂ on `test` equispaced points.
pub fn node_interpolation_error(freq: f64, n: usize, test: usize) -> Result<f64> {
    let grid = Grid1D::chebyshev(n, -1.0, 1.0)?;
    let f = sine_target(freq);
    let vals: Vec<f64> = grid.nodes().iter().map(|&x| f(x)).collect();
    let xs = equispaced(-1.0, 1.0, test);
    let e = evaluation_matrix(&grid, &xs)?;
    let pred = &e * DVector::from_vec(vals);
    let truth: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    l2re(pred.as_slice(), &truth)
}

/// Assemble a [`TheoryProbe`] for degree `n` with `m` samples.
pub fn theory_probe(n: usize, m: usize, dist: SampleDistribution, seed: u64, freq: f64) -> Result<TheoryProbe> {
    let grid = Grid1D::chebyshev(n, -1.0, 1.0)?;
    let kappa = gram_kappa_sq(n, m, dist, seed)?;
    let lebesgue = lebesgue_constant(&grid, (10 * (n + 1)).max(2000))?;
    let spectral = DiffOperator::new(&grid, DiffMethod::ChebSpectral, 1)?;
    let fd = DiffOperator::new(&grid, DiffMethod::FiniteDifference { half_bandwidth: 1 }, 1)?;
    let eps_op = epsilon_op(&grid, &spectral, &fd, &EpsOpConfig { seed, ..Default::default() })?;
    let ns: Vec<usize> = (4..=n.max(4)).step_by(4).collect();
    let errs = ns.iter().map(|&k| node_interpolation_error(freq, k, 1000)).collect::<Result<Vec<f64>>>()?;
    let rho_fit = fit_decay_rate(&ns, &errs, 1e-13);
    let bound_constants = rho_fit.map(|r| {
        let s = ellipse_sup(freq, r);
        (s, s)
    });
    Ok(TheoryProbe { n, m, kappa_sq: kappa.is_finite().then_some(kappa), lebesgue, eps_op, rho_fit, bound_constants })
}

/// Settings of the 1-D interpolation study (fit `sin(ω x)` on `[-1, 1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpConfig {
    pub n: usize,
    pub m: usize,
    pub frequency: f64,
    pub sampling: SampleDistribution,
    pub test_points: usize,
    pub steps: usize,
    pub step_size: StepSize,
    /// Stop once the loss is within this factor of the direct least-squares
    /// optimum (or below `loss_floor`).
    pub rel_loss_gap: f64,
    pub loss_floor: f64,
    pub sweep: Vec<usize>,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            n: 40,
            m: 100,
            frequency: 4.0,
            sampling: SampleDistribution::Uniform,
            test_points: 1000,
            steps: 2_000_000,
            step_size: StepSize::Auto,
            rel_loss_gap: 1e-3,
            loss_floor: 1e-28,
            sweep: vec![8, 16, 24, 32, 40],
        }
    }
}

/// Outcome of one interpolation fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpResult {
    pub n: usize,
    pub m: usize,
    pub kappa_sq: Option<f64>,
    pub l2re: f64,
    /// Test error of the direct least-squares solution.
    pub direct_l2re: f64,
    pub iterations: usize,
    pub final_loss: f64,
}

/// Fit a degree-`n` explicit model to `m` samples by gradient descent.
pub fn interp_fit(cfg: &InterpConfig, n: usize, seed: u64, opts: &TrainOptions) -> Result<(InterpResult, TrainState)> {
    let grid = Grid1D::chebyshev(n, -1.0, 1.0)?;
    let f = sine_target(cfg.frequency);
    let xs = draw_samples(cfg.sampling, cfg.m, -1.0, 1.0, seed);
    let a = interpolation_matrix(&grid, &xs)?;
    let y = DVector::from_iterator(xs.len(), xs.iter().map(|&x| f(x)));
    let tx = equispaced(-1.0, 1.0, cfg.test_points);
    let b = evaluation_matrix(&grid, &tx)?;
    let z = DVector::from_iterator(tx.len(), tx.iter().map(|&x| f(x)));
    let kappa = sym_condition(&(a.tr_mul(&a)));
    let obj = LeastSquaresObjective::new(a, y)?.with_test(b, z)?;
    let direct = obj.solve_direct()?;
    let best = obj.loss(&direct)?;
    let direct_l2re = obj.metric(&direct).expect("test data attached")?;
    let mut opts = opts.clone();
    opts.loss_target = Some((best * (1.0 + cfg.rel_loss_gap)).max(cfg.loss_floor));
    let st = run_gd(&obj, vec![0.0; n + 1], cfg.steps, cfg.step_size, &opts)?;
    let l2 = match st.final_l2re() {
        Some(v) => v,
        None => obj.metric(&st.theta).expect("test data attached")?,
    };
    Ok((
        InterpResult {
            n,
            m: cfg.m,
            kappa_sq: kappa,
            l2re: l2,
            direct_l2re,
            iterations: st.iteration,
            final_loss: st.final_loss(),
        },
        st,
    ))
}

/// Settings of the stencil-size decomposition experiment on convection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecompositionConfig {
    pub speed: f64,
    pub n_t: usize,
    pub n_x: usize,
    /// Half-bandwidths of the finite-difference time derivatives.
    pub stencils: Vec<usize>,
    pub include_spectral: bool,
    pub optimizer: OptimizerSpec,
    pub lambda_ibc: f64,
    /// Iterations over which the early convergence slope is measured.
    pub early_window: usize,
    /// `(n_t, n_x)` of the coarse copy whose Hessian is eigen-decomposed.
    pub kappa_grid: (usize, usize),
    pub log_every: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            speed: 40.0,
            n_t: 81,
            n_x: 80,
            stencils: vec![1, 2],
            include_spectral: true,
            optimizer: OptimizerSpec::Nncg {
                steps: 150,
                rank: 1000,
                cg_iters: 100,
                damping: None,
                hvp_mode: HvpMode::GaussNewton,
                line_search: crate::optim::LineSearch::Backtracking,
                precond_every: None,
                cg_tol: None,
                seed: None,
            },
            lambda_ibc: 1.0,
            early_window: 3,
            kappa_grid: (17, 16),
            log_every: 10,
        }
    }
}

/// One row of the decomposition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilRow {
    pub label: String,
    /// `None` for the spectral derivative.
    pub half_bandwidth: Option<usize>,
    /// Final test L2RE.
    pub plateau: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Decades of loss decrease per iteration over the early window.
    pub early_slope: f64,
    /// κ² of the Gauss-Newton Hessian on the coarse copy.
    pub kappa_sq: Option<f64>,
    pub iterations: usize,
    pub wall_s: f64,
    pub loss_history: Vec<f64>,
    pub l2re_history: Vec<(usize, f64)>,
}

fn convection_model(cfg: &DecompositionConfig, n_t: usize, n_x: usize, k: Option<usize>) -> Result<BwlerModel> {
    let grid = TensorGrid::new(vec![Grid1D::chebyshev(n_t, 0.0, 1.0)?, Grid1D::fourier(n_x, 0.0, 2.0 * PI)?])?;
    let t_method = match k {
        Some(k) => DiffMethod::FiniteDifference { half_bandwidth: k },
        None => DiffMethod::ChebSpectral,
    };
    let _ = cfg;
    BwlerModel::with_deriv(grid, vec![t_method, DiffMethod::FourierMatrix])
}

/// Condition number of the dense Gauss-Newton Hessian of an objective.
pub fn hessian_kappa_sq(obj: &dyn Objective) -> Result<Option<f64>> {
    let n = obj.dim();
    let theta = vec![0.0; n];
    let h = obj.hessian_at(&theta, HvpMode::GaussNewton)?;
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = h(&e)?;
        e[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    let sym = (&m + m.transpose()) * 0.5;
    let eig = sym_eigenvalues(&sym);
    let (lo, hi) = (eig[0], eig[n - 1]);
    Ok((lo > 0.0).then(|| hi / lo))
}

fn early_slope(initial: f64, history: &[f64], window: usize) -> f64 {
    let w = window.min(history.len());
    if w == 0 || initial <= 0.0 {
        return 0.0;
    }
    let end = history[w - 1].max(f64::MIN_POSITIVE);
    (initial.log10() - end.log10()) / w as f64
}

fn run_stencil(cfg: &DecompositionConfig, k: Option<usize>, seed: u64, progress: bool) -> Result<StencilRow> {
    let problem = PdeProblem::Convection { speed: cfg.speed };
    let label = match k {
        Some(k) => format!("fd k={k}"),
        None => "spectral".to_string(),
    };
    let started = Instant::now();
    let coarse = convection_model(cfg, cfg.kappa_grid.0, cfg.kappa_grid.1, k)?;
    let coarse_obj = PinnObjective::new(&problem, &coarse, cfg.lambda_ibc, &CollocationScheme::Nodal)?;
    let kappa_sq = hessian_kappa_sq(&coarse_obj)?;

    let model = convection_model(cfg, cfg.n_t, cfg.n_x, k)?;
    let obj = PinnObjective::new(&problem, &model, cfg.lambda_ibc, &CollocationScheme::Nodal)?;
    let opts = TrainOptions { log_every: cfg.log_every, progress, loss_target: None, label: label.clone() };
    let st = run_optimizer(&obj, vec![0.0; obj.dim()], &cfg.optimizer, seed, &opts)?;
    let plateau = st.final_l2re().ok_or_else(|| Error::Numerical("no test error recorded".into()))?;
    Ok(StencilRow {
        label,
        half_bandwidth: k,
        plateau,
        initial_loss: st.initial_loss,
        final_loss: st.final_loss(),
        early_slope: early_slope(st.initial_loss, &st.loss_history, cfg.early_window),
        kappa_sq,
        iterations: st.iteration,
        wall_s: started.elapsed().as_secs_f64(),
        loss_history: st.loss_history,
        l2re_history: st.l2re_history,
    })
}

/// Train the convection model once per time-derivative stencil (and once
/// with the spectral derivative) and tabulate plateau, early slope and κ².
/// Up to `jobs` variants run concurrently; rows keep the input order.
pub fn decomposition_experiment(
    cfg: &DecompositionConfig,
    seed: u64,
    jobs: usize,
    progress: bool,
) -> Result<Vec<StencilRow>> {
    let mut variants: Vec<Option<usize>> = cfg.stencils.iter().map(|&k| Some(k)).collect();
    if cfg.include_spectral {
        variants.push(None);
    }
    if variants.is_empty() {
        return invalid("no stencils to compare");
    }
    if cfg.stencils.contains(&0) {
        return invalid("stencil half-bandwidth must be at least 1");
    }
    let jobs = jobs.max(1);
    let mut rows: Vec<Option<Result<StencilRow>>> = (0..variants.len()).map(|_| None).collect();
    for chunk in (0..variants.len()).collect::<Vec<_>>().chunks(jobs) {
        if chunk.len() == 1 {
            rows[chunk[0]] = Some(run_stencil(cfg, variants[chunk[0]], seed, progress));
            continue;
        }
        let results: Vec<(usize, Result<StencilRow>)> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let k = variants[i];
                    (i, s.spawn(move || run_stencil(cfg, k, seed, progress)))
                })
                .collect();
            handles
                .into_iter()
                .map(|(i, h)| (i, h.join().unwrap_or_else(|_| Err(Error::Numerical("worker panicked".into())))))
                .collect()
        });
        for (i, r) in results {
            rows[i] = Some(r);
        }
    }
    rows.into_iter().map(|r| r.expect("every variant ran")).collect()
}

/// Training trace of one run inside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub label: String,
    pub loss: Vec<f64>,
    pub l2re: Vec<(usize, f64)>,
}

impl Trace {
    pub fn from_state(label: impl Into<String>, st: &TrainState) -> Self {
        let mut loss = Vec::with_capacity(st.loss_history.len() + 1);
        loss.push(st.initial_loss);
        loss.extend_from_slice(&st.loss_history);
        Self { label: label.into(), loss, l2re: st.l2re_history.clone() }
    }
}

/// Wall-clock summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RuntimeStats {
    pub total_s: f64,
    pub iterations: usize,
    pub mean_iteration_ms: f64,
}

/// Self-contained record of one experiment: the configuration echo is
/// enough to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub kind: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub final_metrics: BTreeMap<String, f64>,
    pub traces: Vec<Trace>,
    pub probes: Vec<TheoryProbe>,
    #[serde(default)]
    pub tables: BTreeMap<String, serde_json::Value>,
    pub runtime: RuntimeStats,
}

pub const REPORT_FORMAT: &str = "spectral-pinn-report/1";

impl ExperimentReport {
    pub fn new(kind: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            format: REPORT_FORMAT.to_string(),
            kind: kind.to_string(),
            seed,
            config,
            final_metrics: BTreeMap::new(),
            traces: Vec::new(),
            probes: Vec::new(),
            tables: BTreeMap::new(),
            runtime: RuntimeStats::default(),
        }
    }

    /// Record a finite metric (non-finite values are skipped).
    pub fn metric(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.final_metrics.insert(name.to_string(), value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{bary_eval, NodeValues};

    #[test]
    fn l2re_examples() {
        let t = vec![1.0, -2.0, 3.0];
        assert_eq!(l2re(&t, &t).unwrap(), 0.0);
        let two: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        assert!((l2re(&two, &t).unwrap() - 1.0).abs() < 1e-15);
        let norm = 14f64.sqrt();
        let bumped = vec![1.0 + norm, -2.0, 3.0];
        assert!((l2re(&bumped, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!(l2re(&t, &[0.0; 3]).is_err());
        assert!(l2re(&t, &[1.0; 2]).is_err());
    }

    #[test]
    fn interpolation_matrix_identity_and_partition() {
        let g = Grid1D::chebyshev(12, -1.0, 1.0).unwrap();
        let l = interpolation_matrix(&g, g.nodes()).unwrap();
        assert_eq!(l, DMatrix::identity(13, 13));
        let xs = draw_samples(SampleDistribution::Uniform, 40, -1.0, 1.0, 3);
        let l = interpolation_matrix(&g, &xs).unwrap();
        for i in 0..xs.len() {
            assert!((l.row(i).sum() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_matrix_matches_barycentric() {
        let g = Grid1D::chebyshev(4, -1.0, 1.0).unwrap();
        let theta = vec![0.3, -1.0, 2.0, 0.5, 0.1];
        let xs = draw_samples(SampleDistribution::Uniform, 50, -1.0, 1.0, 9);
        let l = interpolation_matrix(&g, &xs).unwrap();
        let y = &l * DVector::from_column_slice(&theta);
        let nv = NodeValues::<Grid1D>::new(&g, &theta).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            assert!((y[i] - bary_eval(&nv, x).unwrap()).abs() <= 1e-13);
        }
    }

    #[test]
    fn population_gram_has_condition_two() {
        for n in [2, 3, 8, 16, 41] {
            let g = Grid1D::chebyshev(n, -1.0, 1.0).unwrap();
            let l = interpolation_matrix(&g, g.nodes()).unwrap();
            let gm = gram_matrices(&l, n).unwrap();
            assert_eq!(gm.kappa_sq_pop, 2.0);
            assert!((gm.kappa_sq_emp - 1.0).abs() < 1e-12);
            assert!((gm.g_pop.trace() - PI / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_gram_reports_infinity() {
        let g = Grid1D::chebyshev(6, -1.0, 1.0).unwrap();
        let l = interpolation_matrix(&g, &[0.1, 0.2]).unwrap();
        assert!(gram_matrices(&l, 6).unwrap().kappa_sq_emp.is_infinite());
        assert!(gram_matrices(&l, 5).is_err());
    }

    #[test]
    fn lebesgue_examples() {
        let one = lebesgue_constant(&Grid1D::chebyshev(1, -1.0, 1.0).unwrap(), 100).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
        let ten = lebesgue_constant(&Grid1D::chebyshev(10, -1.0, 1.0).unwrap(), 2000).unwrap();
        assert!((1.5..=3.0).contains(&ten), "{ten}");
        let mut prev = 0.0;
        for n in [2, 4, 8, 16, 32, 64] {
            let l = lebesgue_constant(&Grid1D::chebyshev(n, -1.0, 1.0).unwrap(), 20 * (n + 1)).unwrap();
            assert!(l >= prev);
            assert!(l <= 1.0 + 2.0 / PI * ((n + 1) as f64).ln() + 1.0);
            prev = l;
        }
        assert!(lebesgue_constant(&Grid1D::chebyshev(10, -1.0, 1.0).unwrap(), 50).is_err());
    }

    #[test]
    fn collocation_matrix_examples() {
        let g = Grid1D::chebyshev(8, -1.0, 1.0).unwrap();
        let (a, rhs) =
            collocation_matrix(&LinearOperatorSpec::constant(&[(0, 1.0)]), &g, DiffMethod::ChebSpectral).unwrap();
        assert_eq!(a, DMatrix::identity(9, 9));
        assert!(rhs.iter().all(|v| *v == 0.0));
        let (d, _) =
            collocation_matrix(&LinearOperatorSpec::constant(&[(1, 1.0)]), &g, DiffMethod::ChebSpectral).unwrap();
        let sq = DVector::from_iterator(9, g.nodes().iter().map(|x| x * x));
        let out = d * sq;
        for (o, x) in out.iter().zip(g.nodes()) {
            assert!((o - 2.0 * x).abs() <= 1e-12);
        }
        let mut prev = 0.0;
        for n in [8, 16, 32] {
            let g = Grid1D::chebyshev(n, -1.0, 1.0).unwrap();
            let (a, _) =
                collocation_matrix(&LinearOperatorSpec::constant(&[(2, 1.0)]), &g, DiffMethod::ChebSpectral).unwrap();
            // second-derivative rows kill constants and linears, so condition
            // the normal matrix with the identity on the boundary rows
            let mut a = a;
            for j in 0..=n {
                a[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
                a[(n, j)] = if j == n { 1.0 } else { 0.0 };
            }
            let k = sym_condition(&a.tr_mul(&a)).unwrap();
            assert!(k > prev);
            prev = k;
        }
    }

    #[test]
    fn rhs_and_variable_coefficients() {
        let g = Grid1D::chebyshev(6, 0.0, 1.0).unwrap();
        let spec =
            LinearOperatorSpec { terms: vec![(0, Arc::new(|x: f64| x) as CoefFn)], rhs: Arc::new(|x: f64| x * x) };
        let (a, rhs) = collocation_matrix(&spec, &g, DiffMethod::ChebSpectral).unwrap();
        for (i, x) in g.nodes().iter().enumerate() {
            assert_eq!(a[(i, i)], *x);
            assert_eq!(rhs[i], x * x);
        }
    }

    #[test]
    fn pde_collocation_rejects_nonlinear() {
        let p = PdeProblem::Burgers { nu: 0.01 };
        let m = BwlerModel::new(
            TensorGrid::new(vec![Grid1D::chebyshev(4, 0.0, 1.0).unwrap(), Grid1D::chebyshev(4, -1.0, 1.0).unwrap()])
                .unwrap(),
        );
        assert!(pde_collocation_matrix(&p, &m).is_err());
        let p = PdeProblem::Wave { beta: 5.0 };
        let m = BwlerModel::new(
            TensorGrid::new(vec![Grid1D::chebyshev(4, 0.0, 1.0).unwrap(), Grid1D::chebyshev(4, 0.0, 1.0).unwrap()])
                .unwrap(),
        );
        let a = pde_collocation_matrix(&p, &m).unwrap();
        assert_eq!(a.shape(), (25, 25));
    }

    #[test]
    fn epsilon_op_examples() {
        let cfg = EpsOpConfig { trials: 50, ..Default::default() };
        let g = Grid1D::chebyshev(16, -1.0, 1.0).unwrap();
        let spec = DiffOperator::new(&g, DiffMethod::ChebSpectral, 1).unwrap();
        assert!(epsilon_op(&g, &spec, &spec, &cfg).unwrap() <= 1e-12);
        let global = DiffOperator::new(&g, DiffMethod::FiniteDifference { half_bandwidth: 8 }, 1).unwrap();
        assert!(epsilon_op(&g, &spec, &global, &cfg).unwrap() <= 1e-8);

        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let fd = DiffOperator::new(&g, DiffMethod::FiniteDifference { half_bandwidth: k }, 1).unwrap();
            let e = epsilon_op(&g, &spec, &fd, &cfg).unwrap();
            assert!(e < prev);
            prev = e;
        }

        let eps = |n: usize| {
            let g = Grid1D::fourier(n, 0.0, 2.0 * PI).unwrap();
            let s = DiffOperator::new(&g, DiffMethod::FourierMatrix, 1).unwrap();
            let f = DiffOperator::new(&g, DiffMethod::FiniteDifference { half_bandwidth: 1 }, 1).unwrap();
            epsilon_op(&g, &s, &f, &cfg).unwrap()
        };
        assert!(eps(64) <= eps(32) / 3.0);
    }

    #[test]
    fn power_law_and_rate_fits() {
        let xs = [32.0, 64.0, 128.0, 256.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-2.0)).collect();
        assert!((fit_power_law(&xs, &ys).unwrap() + 2.0).abs() < 1e-12);
        assert!(fit_power_law(&xs[..1], &ys[..1]).is_err());
        let ns = [4, 8, 12, 16, 20];
        let errs = [1e-2, 1e-4, 1e-6, 1e-15, 2e-15];
        let rho = fit_decay_rate(&ns, &errs, 1e-13).unwrap();
        assert!(rho > 1.0);
        let errs = [1e-2, 1e-4, 1e-6, 1e-8];
        let rho = fit_decay_rate(&ns[..4], &errs, 1e-13).unwrap();
        assert!((rho - 10f64.powf(0.5)).abs() < 1e-9);
    }

    #[test]
    fn probe_invariants() {
        let p = theory_probe(12, 400, SampleDistribution::Uniform, 1, 4.0).unwrap();
        assert!(p.kappa_sq.unwrap() >= 1.0);
        assert!(p.lebesgue >= 1.0);
        assert!(p.eps_op >= 0.0);
        assert!(p.rho_fit.unwrap() > 1.0);
        let (mf, mu) = p.bound_constants.unwrap();
        assert!(mf >= 1.0 && mu == mf);
    }

    #[test]
    fn gram_limit_with_matching_density() {
        let med = |m: usize| {
            let mut v: Vec<f64> =
                (0..20).map(|s| gram_kappa_sq(8, m, SampleDistribution::Chebyshev, s).unwrap()).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            0.5 * (v[9] + v[10])
        };
        let (a, b, c) = (med(100), med(1000), med(10000));
        assert!(a > b && b > c, "{a} {b} {c}");
        assert!(c <= 3.0, "{c}");
    }

    #[test]
    fn interpolation_gd_small() {
        let cfg = InterpConfig {
            n: 20,
            m: 200,
            frequency: 2.0,
            sampling: SampleDistribution::Chebyshev,
            steps: 5000,
            ..Default::default()
        };
        let (r, st) = interp_fit(&cfg, 20, 0, &TrainOptions::default()).unwrap();
        assert!(r.l2re <= 1e-8, "{r:?}");
        assert!(st.iteration <= 5000);
    }

    #[test]
    fn hessian_condition_grows_with_stencil_width() {
        let cfg = DecompositionConfig::default();
        let problem = PdeProblem::Convection { speed: 40.0 };
        let mut ks = Vec::new();
        for k in [Some(1), None] {
            let m = convection_model(&cfg, 9, 8, k).unwrap();
            let obj = PinnObjective::new(&problem, &m, 1.0, &CollocationScheme::Nodal).unwrap();
            ks.push(hessian_kappa_sq(&obj).unwrap().unwrap());
        }
        assert!(ks[0] < ks[1], "{ks:?}");
    }

    #[test]
    fn report_metric_skips_non_finite() {
        let mut r = ExperimentReport::new("probe", 0, serde_json::json!({}));
        r.metric("a", 1.0);
        r.metric("b", f64::NAN);
        assert_eq!(r.final_metrics.len(), 1);
    }
}
