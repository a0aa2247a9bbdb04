//! Benchmark PDEs, collocation, boundary data and the physics-informed loss.
//!
//! Coordinates are ordered `[t, x]` for the time-dependent problems and
//! `[x, y]` for Poisson. The loss is
//!
//! `L(θ) = mean_p F(u_θ)(p)² + λ · mean_q b_q(θ)²`
//!
//! where `F` is the pointwise PDE residual at the collocation points and
//! `b` concatenates the initial/boundary mismatches. Gradients and
//! Hessian-vector products are assembled from the forward and transpose
//! actions of the model's derivative operators.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::DiffMethod;
use crate::error::{invalid, Error, Result};
use crate::grid::{AxisSpec, Basis, TensorGrid};
use crate::interp::PointEvaluator;
use crate::linalg::AxisOp;
use crate::model::{apply_product, product_matrices, BwlerModel};
use crate::optim::{HessianOp, HvpMode, Objective, OptimizerSpec};

/// Points per axis of the dense equispaced test grid.
pub const TEST_POINTS_PER_AXIS: usize = 256;
/// Equiangular samples on each Poisson hole.
pub const CIRCLE_POINTS: usize = 64;
/// Samples on each side of the Poisson outer square.
pub const SIDE_POINTS: usize = 64;

const HOLE_CENTERS: [(f64, f64); 4] = [(0.3, 0.3), (-0.3, 0.3), (0.3, -0.3), (-0.3, -0.3)];
const HOLE_RADIUS: f64 = 0.1;

/// Built-in benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum PdeProblem {
    /// `u_t + c u_x = 0` on `(t, x) ∈ [0,1] × [0,2π]`, `u(0,x) = sin x`, periodic in x.
    Convection {
        #[serde(default = "default_speed")]
        speed: f64,
    },
    /// `u_t − ρ u(1 − u) = 0` with a Gaussian initial profile, periodic in x.
    Reaction {
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// `u_tt − 4 u_xx = 0` on `[0,1]²` with fixed ends and zero initial velocity.
    Wave {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    /// `u_t + u u_x − ν u_xx = 0` on `[0,1] × [−1,1]`, `u(0,x) = −sin(πx)`.
    Burgers {
        #[serde(default = "default_nu")]
        nu: f64,
    },
    /// `−Δu = 0` on `[−0.5,0.5]²` minus four discs; `u = 1` outside, `u = 0` on the holes.
    Poisson,
}

fn default_speed() -> f64 {
    40.0
}
fn default_rho() -> f64 {
    5.0
}
fn default_beta() -> f64 {
    5.0
}
fn default_nu() -> f64 {
    0.01 / PI
}

/// Names accepted by [`PdeProblem::from_name`].
pub const PROBLEM_NAMES: [&str; 5] = ["convection", "reaction", "wave", "burgers", "poisson"];

impl PdeProblem {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "convection" => PdeProblem::Convection { speed: default_speed() },
            "reaction" => PdeProblem::Reaction { rho: default_rho() },
            "wave" => PdeProblem::Wave { beta: default_beta() },
            "burgers" => PdeProblem::Burgers { nu: default_nu() },
            "poisson" => PdeProblem::Poisson,
            other => return Err(Error::Config(format!("unknown problem {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PdeProblem::Convection { .. } => "convection",
            PdeProblem::Reaction { .. } => "reaction",
            PdeProblem::Wave { .. } => "wave",
            PdeProblem::Burgers { .. } => "burgers",
            PdeProblem::Poisson => "poisson",
        }
    }

    pub fn axis_names(&self) -> [&'static str; 2] {
        match self {
            PdeProblem::Poisson => ["x", "y"],
            _ => ["t", "x"],
        }
    }

    /// Per-axis intervals in coordinate order.
    pub fn domain(&self) -> [(f64, f64); 2] {
        match self {
            PdeProblem::Convection { .. } | PdeProblem::Reaction { .. } => [(0.0, 1.0), (0.0, 2.0 * PI)],
            PdeProblem::Wave { .. } => [(0.0, 1.0), (0.0, 1.0)],
            PdeProblem::Burgers { .. } => [(0.0, 1.0), (-1.0, 1.0)],
            PdeProblem::Poisson => [(-0.5, 0.5), (-0.5, 0.5)],
        }
    }

    pub fn default_grid(&self) -> Vec<AxisSpec> {
        let [d0, d1] = self.domain();
        let cheb = |n: usize, d: (f64, f64)| AxisSpec { basis: Basis::Chebyshev, n, interval: [d.0, d.1] };
        match self {
            PdeProblem::Convection { speed } => {
                let (nt, nx) = if speed.abs() > 40.0 { (161, 160) } else { (81, 80) };
                vec![cheb(nt, d0), AxisSpec { basis: Basis::Fourier, n: nx, interval: [d1.0, d1.1] }]
            }
            PdeProblem::Reaction { .. } => vec![cheb(81, d0), cheb(81, d1)],
            PdeProblem::Wave { .. } => vec![cheb(41, d0), cheb(41, d1)],
            PdeProblem::Burgers { .. } => vec![cheb(321, d0), cheb(321, d1)],
            PdeProblem::Poisson => vec![cheb(51, d0), cheb(51, d1)],
        }
    }

    /// Spectral on every axis except Burgers, which uses a 3-point
    /// finite-difference stencil in time.
    pub fn default_deriv(&self, grid: &TensorGrid) -> Vec<DiffMethod> {
        grid.axes()
            .iter()
            .enumerate()
            .map(|(i, a)| match (self, i) {
                (PdeProblem::Burgers { .. }, 0) => DiffMethod::FiniteDifference { half_bandwidth: 1 },
                _ => DiffMethod::spectral_for(a.basis()),
            })
            .collect()
    }

    pub fn default_lambda(&self) -> f64 {
        match self {
            PdeProblem::Convection { .. } | PdeProblem::Reaction { .. } => 1.0,
            PdeProblem::Wave { .. } | PdeProblem::Poisson => 100.0,
            PdeProblem::Burgers { .. } => 10.0,
        }
    }

    /// Newton-CG schedule used for the published high-precision runs.
    pub fn default_optimizer(&self) -> OptimizerSpec {
        let nncg = |steps, rank, cg_iters| OptimizerSpec::Nncg {
            steps,
            rank,
            cg_iters,
            damping: None,
            hvp_mode: HvpMode::GaussNewton,
            line_search: crate::optim::LineSearch::Backtracking,
            precond_every: None,
            cg_tol: None,
            seed: None,
        };
        match self {
            PdeProblem::Convection { speed } if speed.abs() > 40.0 => nncg(2500, 1000, 100),
            PdeProblem::Convection { .. } => nncg(350, 1000, 100),
            PdeProblem::Reaction { .. } => nncg(250_000, 16, 16),
            PdeProblem::Wave { .. } => nncg(200, 1000, 1000),
            PdeProblem::Burgers { .. } => nncg(850, 1000, 2000),
            PdeProblem::Poisson => nncg(51_000, 1000, 64),
        }
    }

    pub fn default_model(&self) -> Result<BwlerModel> {
        let grid = TensorGrid::from_specs(&self.default_grid())?;
        let deriv = self.default_deriv(&grid);
        BwlerModel::with_deriv(grid, deriv)
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, PdeProblem::Reaction { .. } | PdeProblem::Burgers { .. })
    }

    pub fn residual_form(&self) -> ResidualForm {
        match *self {
            PdeProblem::Convection { speed } => ResidualForm::Convection { speed },
            PdeProblem::Reaction { rho } => ResidualForm::Reaction { rho },
            PdeProblem::Wave { .. } => ResidualForm::Wave { speed_sq: 4.0 },
            PdeProblem::Burgers { nu } => ResidualForm::Burgers { nu },
            PdeProblem::Poisson => ResidualForm::Poisson,
        }
    }

    /// False for points inside (or on) a Poisson hole.
    pub fn in_domain(&self, p: &[f64]) -> bool {
        match self {
            PdeProblem::Poisson => HOLE_CENTERS
                .iter()
                .all(|(cx, cy)| (p[0] - cx).powi(2) + (p[1] - cy).powi(2) > HOLE_RADIUS * HOLE_RADIUS),
            _ => true,
        }
    }

    pub fn has_exact(&self) -> bool {
        !matches!(self, PdeProblem::Poisson)
    }

    /// Reference solution at one point. Burgers uses the Cole-Hopf integral
    /// representation evaluated by quadrature; Poisson has none.
    pub fn exact(&self, p: &[f64]) -> Result<f64> {
        match *self {
            PdeProblem::Convection { speed } => Ok((p[1] - speed * p[0]).sin()),
            PdeProblem::Reaction { rho } => {
                let h = reaction_profile(p[1]);
                let e = h * (rho * p[0]).exp();
                Ok(e / (e + 1.0 - h))
            }
            PdeProblem::Wave { beta } => {
                let (t, x) = (p[0], p[1]);
                Ok((PI * x).sin() * (2.0 * PI * t).cos() + 0.5 * (beta * PI * x).sin() * (2.0 * beta * PI * t).cos())
            }
            PdeProblem::Burgers { nu } => Ok(burgers_cole_hopf(p[0], p[1], nu, 4000)),
            PdeProblem::Poisson => {
                Err(Error::Unavailable("poisson has no analytic solution; supply a reference file".into()))
            }
        }
    }

    pub fn exact_solution(&self, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
        pts.iter().map(|p| self.exact(p)).collect()
    }

    /// Initial/boundary condition groups on the given grid.
    pub fn ibc_groups(&self, grid: &TensorGrid) -> Result<Vec<IbcGroup>> {
        if grid.ndim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: grid.ndim() });
        }
        let [d0, d1] = self.domain();
        let t_nodes = grid.axis(0).nodes().to_vec();
        let x_nodes = grid.axis(1).nodes().to_vec();
        let at_t0 = |xs: &[f64]| -> Vec<Vec<f64>> { xs.iter().map(|&x| vec![d0.0, x]).collect() };
        let at_x = |x: f64| -> Vec<Vec<f64>> { t_nodes.iter().map(|&t| vec![t, x]).collect() };
        let value = |orders: [usize; 2], points: Vec<Vec<f64>>, target: Vec<f64>, name: &str| IbcGroup {
            name: name.to_string(),
            terms: vec![IbcTerm { coef: 1.0, orders: orders.to_vec(), points }],
            target,
        };
        let periodic = || IbcGroup {
            name: "periodic".into(),
            terms: vec![
                IbcTerm { coef: 1.0, orders: vec![0, 0], points: at_x(d1.0) },
                IbcTerm { coef: -1.0, orders: vec![0, 0], points: at_x(d1.1) },
            ],
            target: vec![0.0; t_nodes.len()],
        };
        let x_is_periodic = grid.axis(1).basis() == Basis::Fourier;
        let mut groups = Vec::new();
        match *self {
            PdeProblem::Convection { .. } | PdeProblem::Reaction { .. } => {
                let pts = at_t0(&x_nodes);
                let target = pts.iter().map(|p| self.exact(p)).collect::<Result<Vec<f64>>>()?;
                groups.push(value([0, 0], pts, target, "initial"));
                if !x_is_periodic {
                    groups.push(periodic());
                }
            }
            PdeProblem::Wave { beta } => {
                let target = x_nodes.iter().map(|&x| (PI * x).sin() + 0.5 * (beta * PI * x).sin()).collect();
                groups.push(value([0, 0], at_t0(&x_nodes), target, "initial"));
                groups.push(value([1, 0], at_t0(&x_nodes), vec![0.0; x_nodes.len()], "velocity"));
                let mut walls = at_x(d1.0);
                walls.extend(at_x(d1.1));
                let n = walls.len();
                groups.push(value([0, 0], walls, vec![0.0; n], "boundary"));
            }
            PdeProblem::Burgers { .. } => {
                let target = x_nodes.iter().map(|&x| -(PI * x).sin()).collect();
                groups.push(value([0, 0], at_t0(&x_nodes), target, "initial"));
                let mut walls = at_x(d1.0);
                walls.extend(at_x(d1.1));
                let n = walls.len();
                groups.push(value([0, 0], walls, vec![0.0; n], "boundary"));
            }
            PdeProblem::Poisson => {
                let outer = square_boundary(d0, SIDE_POINTS);
                let n = outer.len();
                groups.push(value([0, 0], outer, vec![1.0; n], "outer"));
                let holes = circle_points(CIRCLE_POINTS);
                let n = holes.len();
                groups.push(value([0, 0], holes, vec![0.0; n], "holes"));
            }
        }
        Ok(groups)
    }

    /// One-line summary of the built-in defaults.
    pub fn describe(&self) -> String {
        let grid = self.default_grid();
        let g: Vec<String> = grid
            .iter()
            .zip(self.axis_names())
            .map(|(s, name)| {
                let b = match s.basis {
                    Basis::Chebyshev => "chebyshev",
                    Basis::Fourier => "fourier",
                };
                format!("N_{name}={} ({b})", s.n)
            })
            .collect();
        let deriv = match self {
            PdeProblem::Burgers { .. } => "fd-in-time k=1 (3-point), spectral in x",
            _ => "spectral",
        };
        let opt = match self.default_optimizer() {
            OptimizerSpec::Nncg { steps, rank, cg_iters, .. } => {
                format!("nncg steps={steps} rank={rank} cg_iters={cg_iters}")
            }
            other => other.name().to_string(),
        };
        format!("{:<11} {}  deriv: {deriv}  lambda_ibc={}  {opt}", self.name(), g.join(" "), self.default_lambda())
    }
}

/// Gaussian initial profile of the reaction benchmark.
pub fn reaction_profile(x: f64) -> f64 {
    let s = PI / 4.0;
    (-(x - PI).powi(2) / (2.0 * s * s)).exp()
}

/// Viscous Burgers solution for `u(0,x) = −sin(πx)` from the Cole-Hopf
/// transform, with the heat-kernel integral done by the trapezoid rule on
/// `quad` points in the rescaled Gaussian variable. The truncation radius
/// grows with `1/ν` so the far peaks of the periodic factor are included.
pub fn burgers_cole_hopf(t: f64, x: f64, nu: f64, quad: usize) -> f64 {
    if t <= 0.0 {
        return -(PI * x).sin();
    }
    let width = (4.0 * nu * t).sqrt();
    let lim = (2.0 / (PI * nu) + 50.0).sqrt();
    let h = 2.0 * lim / quad as f64;
    let expo = |s: f64| {
        let y = x - width * s;
        -(PI * y).cos() / (2.0 * PI * nu) - s * s
    };
    let peak = (0..=quad).map(|k| expo(-lim + k as f64 * h)).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..=quad {
        let s = -lim + k as f64 * h;
        let w = if k == 0 || k == quad { 0.5 } else { 1.0 };
        let e = w * (expo(s) - peak).exp();
        num += (PI * (x - width * s)).sin() * e;
        den += e;
    }
    -num / den
}

fn square_boundary(d: (f64, f64), per_side: usize) -> Vec<Vec<f64>> {
    let (a, b) = d;
    let step = (b - a) / per_side as f64;
    let mut pts = Vec::with_capacity(4 * per_side);
    for i in 0..per_side {
        let s = a + i as f64 * step;
        let r = b - i as f64 * step;
        pts.push(vec![s, a]);
        pts.push(vec![b, s]);
        pts.push(vec![r, b]);
        pts.push(vec![a, r]);
    }
    pts
}

fn circle_points(per_circle: usize) -> Vec<Vec<f64>> {
    HOLE_CENTERS
        .iter()
        .flat_map(|&(cx, cy)| {
            (0..per_circle).map(move |k| {
                let a = 2.0 * PI * k as f64 / per_circle as f64;
                vec![cx + HOLE_RADIUS * a.cos(), cy + HOLE_RADIUS * a.sin()]
            })
        })
        .collect()
}

/// Pointwise residual `F` as a function of a few derivative fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualForm {
    /// fields `[u_t, u_x]`
    Convection { speed: f64 },
    /// fields `[u, u_t]`
    Reaction { rho: f64 },
    /// fields `[u_tt, u_xx]`
    Wave { speed_sq: f64 },
    /// fields `[u, u_t, u_x, u_xx]`
    Burgers { nu: f64 },
    /// fields `[u_xx, u_yy]`
    Poisson,
}

impl ResidualForm {
    /// Derivative multi-orders of the fields, in argument order.
    pub fn fields(&self) -> Vec<Vec<usize>> {
        match self {
            ResidualForm::Convection { .. } => vec![vec![1, 0], vec![0, 1]],
            ResidualForm::Reaction { .. } => vec![vec![0, 0], vec![1, 0]],
            ResidualForm::Wave { .. } => vec![vec![2, 0], vec![0, 2]],
            ResidualForm::Burgers { .. } => vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![0, 2]],
            ResidualForm::Poisson => vec![vec![2, 0], vec![0, 2]],
        }
    }

    pub fn value(&self, f: &[f64]) -> f64 {
        match *self {
            ResidualForm::Convection { speed } => f[0] + speed * f[1],
            ResidualForm::Reaction { rho } => f[1] - rho * f[0] * (1.0 - f[0]),
            ResidualForm::Wave { speed_sq } => f[0] - speed_sq * f[1],
            ResidualForm::Burgers { nu } => f[1] + f[0] * f[2] - nu * f[3],
            ResidualForm::Poisson => -(f[0] + f[1]),
        }
    }

    /// First partial derivatives with respect to each field.
    pub fn partials(&self, f: &[f64], out: &mut [f64]) {
        match *self {
            ResidualForm::Convection { speed } => {
                out[0] = 1.0;
                out[1] = speed;
            }
            ResidualForm::Reaction { rho } => {
                out[0] = -rho * (1.0 - 2.0 * f[0]);
                out[1] = 1.0;
            }
            ResidualForm::Wave { speed_sq } => {
                out[0] = 1.0;
                out[1] = -speed_sq;
            }
            ResidualForm::Burgers { nu } => {
                out[0] = f[2];
                out[1] = 1.0;
                out[2] = f[0];
                out[3] = -nu;
            }
            ResidualForm::Poisson => {
                out[0] = -1.0;
                out[1] = -1.0;
            }
        }
    }

    /// Nonzero second partials `(a, b, value)`, each unordered pair listed once.
    pub fn second_partials(&self) -> Vec<(usize, usize, f64)> {
        match *self {
            ResidualForm::Reaction { rho } => vec![(0, 0, 2.0 * rho)],
            ResidualForm::Burgers { .. } => vec![(0, 2, 1.0)],
            _ => Vec::new(),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.second_partials().is_empty()
    }
}

/// One summand `coef · D^orders u` sampled at `points`.
#[derive(Debug, Clone, PartialEq)]
pub struct IbcTerm {
    pub coef: f64,
    pub orders: Vec<usize>,
    pub points: Vec<Vec<f64>>,
}

/// A condition `Σ terms − target = 0` imposed at a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct IbcGroup {
    pub name: String,
    pub terms: Vec<IbcTerm>,
    pub target: Vec<f64>,
}

/// Where the PDE residual is enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CollocationScheme {
    /// The model's own grid nodes.
    #[default]
    Nodal,
    /// Independent uniform coordinates.
    UniformRandom {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Chebyshev axes use `cos(Uniform[0, π])` mapped to the interval;
    /// periodic axes stay uniform.
    ChebyshevWeighted {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
}

/// Collocation points for a scheme. Points rejected by `keep` are dropped
/// (nodal) or redrawn (random).
pub fn sample_collocation(
    scheme: &CollocationScheme,
    grid: &TensorGrid,
    keep: &dyn Fn(&[f64]) -> bool,
) -> Result<Vec<Vec<f64>>> {
    match scheme {
        CollocationScheme::Nodal => Ok(grid.node_points().into_iter().filter(|p| keep(p)).collect()),
        CollocationScheme::UniformRandom { count, seed } | CollocationScheme::ChebyshevWeighted { count, seed } => {
            if *count == 0 {
                return invalid("random collocation needs at least one point");
            }
            let weighted = matches!(scheme, CollocationScheme::ChebyshevWeighted { .. });
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut out = Vec::with_capacity(*count);
            let mut attempts = 0usize;
            while out.len() < *count {
                attempts += 1;
                if attempts > 1000 * count + 1000 {
                    return Err(Error::Numerical("collocation mask rejects almost every point".into()));
                }
                let p: Vec<f64> = grid
                    .axes()
                    .iter()
                    .map(|ax| {
                        let (a, b) = ax.interval();
                        if weighted && ax.basis() == Basis::Chebyshev {
                            let c = (rng.random::<f64>() * PI).cos();
                            (a + 0.5 * (c + 1.0) * (b - a)).clamp(a, b)
                        } else {
                            a + rng.random::<f64>() * (b - a)
                        }
                    })
                    .collect();
                if keep(&p) {
                    out.push(p);
                }
            }
            Ok(out)
        }
    }
}

/// Restriction of node data to the collocation set.
#[derive(Debug, Clone)]
enum Sampler {
    AllNodes,
    Nodes(Vec<usize>),
    Points(PointEvaluator),
}

impl Sampler {
    fn for_points(grid: &TensorGrid, pts: &[Vec<f64>]) -> Result<Self> {
        Ok(Sampler::Points(PointEvaluator::new(grid, pts)?))
    }

    fn gather(&self, data: &[f64]) -> Vec<f64> {
        match self {
            Sampler::AllNodes => data.to_vec(),
            Sampler::Nodes(idx) => idx.iter().map(|&i| data[i]).collect(),
            Sampler::Points(ev) => ev.apply(data),
        }
    }

    fn scatter_add(&self, r: &[f64], out: &mut [f64]) {
        match self {
            Sampler::AllNodes => out.iter_mut().zip(r).for_each(|(o, v)| *o += v),
            Sampler::Nodes(idx) => idx.iter().zip(r).for_each(|(&i, v)| out[i] += v),
            Sampler::Points(ev) => ev.apply_transpose_add(r, out),
        }
    }
}

#[derive(Debug, Clone)]
struct CompiledTerm {
    coef: f64,
    deriv: usize,
    sampler: Sampler,
}

#[derive(Debug, Clone)]
struct CompiledGroup {
    name: String,
    terms: Vec<CompiledTerm>,
    target: Vec<f64>,
}

/// Reference data for the accuracy metric.
#[derive(Debug, Clone)]
enum TestSet {
    Product { mats: Vec<AxisOp>, keep: Option<Vec<bool>>, truth: Vec<f64> },
    Points { eval: PointEvaluator, truth: Vec<f64> },
}

/// The physics-informed loss of a problem on a fixed model discretization.
#[derive(Debug)]
pub struct PinnObjective {
    problem: PdeProblem,
    model: BwlerModel,
    form: ResidualForm,
    /// Distinct derivative multi-orders used anywhere in the loss.
    derivs: Vec<Vec<usize>>,
    /// Index into `derivs` for each residual field.
    fields: Vec<usize>,
    pde: Sampler,
    n_pde: usize,
    groups: Vec<CompiledGroup>,
    n_ibc: usize,
    lambda: f64,
    test: OnceLock<Option<TestSet>>,
    reference: Option<(Vec<Vec<f64>>, Vec<f64>)>,
}

/// Values of one residual evaluation.
#[derive(Debug, Clone)]
pub struct ResidualParts {
    pub pde: Vec<f64>,
    pub ibc: Vec<(String, Vec<f64>)>,
}

impl ResidualParts {
    pub fn ibc_concat(&self) -> Vec<f64> {
        self.ibc.iter().flat_map(|(_, v)| v.iter().copied()).collect()
    }
}

struct Forward {
    derivs: Vec<Vec<f64>>,
    field_vals: Vec<Vec<f64>>,
    f: Vec<f64>,
    ibc: Vec<Vec<f64>>,
}

impl PinnObjective {
    /// Loss of `problem` on `model`'s grid and derivative configuration
    /// (the model's parameters are not used).
    pub fn new(problem: &PdeProblem, model: &BwlerModel, lambda_ibc: f64, scheme: &CollocationScheme) -> Result<Self> {
        if !(lambda_ibc > 0.0 && lambda_ibc.is_finite()) {
            return invalid(format!("lambda_ibc must be positive, got {lambda_ibc}"));
        }
        let grid = model.grid();
        if grid.ndim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: grid.ndim() });
        }
        let dom = problem.domain();
        for (ax, d) in grid.axes().iter().zip(dom) {
            let (a, b) = ax.interval();
            let tol = 1e-12 * (d.1 - d.0);
            if (a - d.0).abs() > tol || (b - d.1).abs() > tol {
                return invalid(format!(
                    "grid interval [{a}, {b}] does not match the {} domain [{}, {}]",
                    problem.name(),
                    d.0,
                    d.1
                ));
            }
        }
        let form = problem.residual_form();
        let mut derivs: Vec<Vec<usize>> = Vec::new();
        let mut intern = |o: &[usize]| -> usize {
            if let Some(i) = derivs.iter().position(|d| d == o) {
                i
            } else {
                derivs.push(o.to_vec());
                derivs.len() - 1
            }
        };
        let fields: Vec<usize> = form.fields().iter().map(|o| intern(o)).collect();

        let keep = |p: &[f64]| problem.in_domain(p);
        let (pde, n_pde) = match scheme {
            CollocationScheme::Nodal => {
                let idx: Vec<usize> =
                    grid.node_points().iter().enumerate().filter(|(_, p)| keep(p)).map(|(i, _)| i).collect();
                let n = idx.len();
                if n == grid.size() {
                    (Sampler::AllNodes, n)
                } else {
                    (Sampler::Nodes(idx), n)
                }
            }
            _ => {
                let pts = sample_collocation(scheme, grid, &keep)?;
                let n = pts.len();
                (Sampler::for_points(grid, &pts)?, n)
            }
        };
        if n_pde == 0 {
            return invalid("empty collocation set");
        }

        let mut groups = Vec::new();
        let mut n_ibc = 0;
        for g in problem.ibc_groups(grid)? {
            let terms = g
                .terms
                .iter()
                .map(|t| {
                    if t.points.len() != g.target.len() {
                        return invalid(format!("group {} has mismatched term sizes", g.name));
                    }
                    Ok(CompiledTerm {
                        coef: t.coef,
                        deriv: intern(&t.orders),
                        sampler: Sampler::for_points(grid, &t.points)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            n_ibc += g.target.len();
            groups.push(CompiledGroup { name: g.name, terms, target: g.target });
        }
        if n_ibc == 0 {
            return invalid("no initial/boundary points");
        }
        Ok(Self {
            problem: *problem,
            model: model.clone(),
            form,
            derivs,
            fields,
            pde,
            n_pde,
            groups,
            n_ibc,
            lambda: lambda_ibc,
            test: OnceLock::new(),
            reference: None,
        })
    }

    /// Use reference data (points, values) for the accuracy metric instead
    /// of the built-in test grid.
    pub fn with_reference(mut self, points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() || points.is_empty() {
            return invalid("reference points and values must be non-empty and of equal length");
        }
        self.reference = Some((points, values));
        self.test = OnceLock::new();
        Ok(self)
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn model(&self) -> &BwlerModel {
        &self.model
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn num_collocation(&self) -> usize {
        self.n_pde
    }

    pub fn num_ibc(&self) -> usize {
        self.n_ibc
    }

    pub fn group_names(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.name.as_str()).collect()
    }

    fn apply_derivs(&self, v: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.derivs
            .iter()
            .map(|o| if o.iter().all(|&m| m == 0) { Ok(v.to_vec()) } else { self.model.node_derivative(o, v) })
            .collect()
    }

    /// `Σ_α (D^α)ᵀ acc_α` over the accumulated node-space vectors.
    fn apply_derivs_transpose(&self, acc: Vec<Option<Vec<f64>>>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.model.num_params()];
        for (o, a) in self.derivs.iter().zip(acc) {
            if let Some(a) = a {
                let back = if o.iter().all(|&m| m == 0) { a } else { self.model.node_derivative_transpose(o, &a)? };
                out.iter_mut().zip(&back).for_each(|(x, y)| *x += y);
            }
        }
        Ok(out)
    }

    fn forward(&self, theta: &[f64]) -> Result<Forward> {
        if theta.len() != self.model.num_params() {
            return Err(Error::DimensionMismatch { expected: self.model.num_params(), got: theta.len() });
        }
        let derivs = self.apply_derivs(theta)?;
        let field_vals: Vec<Vec<f64>> = self.fields.iter().map(|&k| self.pde.gather(&derivs[k])).collect();
        let nf = field_vals.len();
        let mut buf = vec![0.0; nf];
        let f = (0..self.n_pde)
            .map(|p| {
                for a in 0..nf {
                    buf[a] = field_vals[a][p];
                }
                self.form.value(&buf)
            })
            .collect();
        let ibc = self
            .groups
            .iter()
            .map(|g| {
                let mut r: Vec<f64> = g.target.iter().map(|t| -t).collect();
                for term in &g.terms {
                    let v = term.sampler.gather(&derivs[term.deriv]);
                    r.iter_mut().zip(&v).for_each(|(x, y)| *x += term.coef * y);
                }
                r
            })
            .collect();
        Ok(Forward { derivs, field_vals, f, ibc })
    }

    fn loss_of(&self, fw: &Forward) -> f64 {
        let pde: f64 = fw.f.iter().map(|v| v * v).sum::<f64>() / self.n_pde as f64;
        let ibc: f64 = fw.ibc.iter().flatten().map(|v| v * v).sum::<f64>() / self.n_ibc as f64;
        pde + self.lambda * ibc
    }

    /// PDE residual at the collocation points and every IBC group's mismatch.
    pub fn residual_parts(&self, theta: &[f64]) -> Result<ResidualParts> {
        let fw = self.forward(theta)?;
        Ok(ResidualParts { pde: fw.f, ibc: self.groups.iter().map(|g| g.name.clone()).zip(fw.ibc).collect() })
    }

    /// Mean-square PDE term and mean-square IBC term (before weighting).
    pub fn loss_terms(&self, theta: &[f64]) -> Result<(f64, f64)> {
        let fw = self.forward(theta)?;
        let pde = fw.f.iter().map(|v| v * v).sum::<f64>() / self.n_pde as f64;
        let ibc = fw.ibc.iter().flatten().map(|v| v * v).sum::<f64>() / self.n_ibc as f64;
        Ok((pde, ibc))
    }

    fn partials(&self, fw: &Forward) -> Vec<Vec<f64>> {
        let nf = self.fields.len();
        let mut out = vec![vec![0.0; self.n_pde]; nf];
        let mut buf = vec![0.0; nf];
        let mut d = vec![0.0; nf];
        for p in 0..self.n_pde {
            for a in 0..nf {
                buf[a] = fw.field_vals[a][p];
            }
            self.form.partials(&buf, &mut d);
            for a in 0..nf {
                out[a][p] = d[a];
            }
        }
        out
    }

    fn add_ibc_transpose(&self, weights: &[Vec<f64>], scale: f64, acc: &mut [Option<Vec<f64>>]) {
        let n = self.model.num_params();
        for (g, w) in self.groups.iter().zip(weights) {
            for term in &g.terms {
                let slot = acc[term.deriv].get_or_insert_with(|| vec![0.0; n]);
                let scaled: Vec<f64> = w.iter().map(|v| v * term.coef * scale).collect();
                term.sampler.scatter_add(&scaled, slot);
            }
        }
    }

    fn test_set(&self) -> Result<&Option<TestSet>> {
        if let Some(t) = self.test.get() {
            return Ok(t);
        }
        let built = self.build_test_set()?;
        Ok(self.test.get_or_init(|| built))
    }

    fn build_test_set(&self) -> Result<Option<TestSet>> {
        let grid = self.model.grid();
        if let Some((pts, vals)) = &self.reference {
            return Ok(Some(TestSet::Points { eval: PointEvaluator::new(grid, pts)?, truth: vals.clone() }));
        }
        if !self.problem.has_exact() {
            return Ok(None);
        }
        let axis_pts: Vec<Vec<f64>> =
            self.problem.domain().iter().map(|&(a, b)| equispaced(a, b, TEST_POINTS_PER_AXIS)).collect();
        let mats = product_matrices(grid, &axis_pts)?;
        let mut keep = Vec::new();
        let mut truth = Vec::new();
        for t in &axis_pts[0] {
            for x in &axis_pts[1] {
                let p = [*t, *x];
                let inside = self.problem.in_domain(&p);
                keep.push(inside);
                if inside {
                    truth.push(self.problem.exact(&p)?);
                }
            }
        }
        let keep = if keep.iter().all(|&k| k) { None } else { Some(keep) };
        Ok(Some(TestSet::Product { mats, keep, truth }))
    }

    /// Predictions on the test set and the matching reference values.
    pub fn test_predictions(&self, theta: &[f64]) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        Ok(match self.test_set()? {
            None => None,
            Some(TestSet::Product { mats, keep, truth }) => {
                let all = apply_product(mats, &self.model.grid().shape(), theta);
                let pred = match keep {
                    None => all,
                    Some(k) => all.into_iter().zip(k).filter(|(_, &k)| k).map(|(v, _)| v).collect(),
                };
                Some((pred, truth.clone()))
            }
            Some(TestSet::Points { eval, truth }) => Some((eval.apply(theta), truth.clone())),
        })
    }
}

/// `n` equispaced points including both endpoints.
pub fn equispaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
}

impl Objective for PinnObjective {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.loss_of(&self.forward(theta)?))
    }

    fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let fw = self.forward(theta)?;
        let loss = self.loss_of(&fw);
        let part = self.partials(&fw);
        let n = self.model.num_params();
        let mut acc: Vec<Option<Vec<f64>>> = vec![None; self.derivs.len()];
        let s = 2.0 / self.n_pde as f64;
        for (a, &k) in self.fields.iter().enumerate() {
            let w: Vec<f64> = fw.f.iter().zip(&part[a]).map(|(f, d)| s * f * d).collect();
            self.pde.scatter_add(&w, acc[k].get_or_insert_with(|| vec![0.0; n]));
        }
        self.add_ibc_transpose(&fw.ibc, 2.0 * self.lambda / self.n_ibc as f64, &mut acc);
        Ok((loss, self.apply_derivs_transpose(acc)?))
    }

    fn hessian_at<'a>(&'a self, theta: &[f64], mode: HvpMode) -> Result<HessianOp<'a>> {
        let fw = self.forward(theta)?;
        let part = self.partials(&fw);
        let second = if mode == HvpMode::Exact { self.form.second_partials() } else { Vec::new() };
        let f = fw.f;
        drop(fw.derivs);
        let s_pde = 2.0 / self.n_pde as f64;
        let s_ibc = 2.0 * self.lambda / self.n_ibc as f64;
        Ok(Box::new(move |v: &[f64]| {
            let n = self.model.num_params();
            let dv = self.apply_derivs(v)?;
            let fv: Vec<Vec<f64>> = self.fields.iter().map(|&k| self.pde.gather(&dv[k])).collect();
            let mut jv = vec![0.0; self.n_pde];
            for (a, vals) in fv.iter().enumerate() {
                for p in 0..self.n_pde {
                    jv[p] += part[a][p] * vals[p];
                }
            }
            let mut acc: Vec<Option<Vec<f64>>> = vec![None; self.derivs.len()];
            for (a, &k) in self.fields.iter().enumerate() {
                let mut w: Vec<f64> = jv.iter().zip(&part[a]).map(|(x, d)| s_pde * x * d).collect();
                for &(i, j, c) in &second {
                    let pairs: &[(usize, usize)] = if i == j { &[(i, j)] } else { &[(i, j), (j, i)] };
                    for &(x, y) in pairs {
                        if x == a {
                            for p in 0..self.n_pde {
                                w[p] += s_pde * f[p] * c * fv[y][p];
                            }
                        }
                    }
                }
                self.pde.scatter_add(&w, acc[k].get_or_insert_with(|| vec![0.0; n]));
            }
            let bv: Vec<Vec<f64>> = self
                .groups
                .iter()
                .map(|g| {
                    let mut r = vec![0.0; g.target.len()];
                    for term in &g.terms {
                        let vals = term.sampler.gather(&dv[term.deriv]);
                        r.iter_mut().zip(&vals).for_each(|(x, y)| *x += term.coef * y);
                    }
                    r
                })
                .collect();
            self.add_ibc_transpose(&bv, s_ibc, &mut acc);
            self.apply_derivs_transpose(acc)
        }))
    }

    fn is_quadratic(&self) -> bool {
        self.form.is_linear()
    }

    fn metric(&self, theta: &[f64]) -> Option<Result<f64>> {
        match self.test_predictions(theta) {
            Err(e) => Some(Err(e)),
            Ok(None) => None,
            Ok(Some((pred, truth))) => Some(crate::analysis::l2re(&pred, &truth)),
        }
    }
}

/// PDE residual `F(u_θ)` of `model` at arbitrary points.
pub fn residual(problem: &PdeProblem, model: &BwlerModel, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
    if let Some(p) = pts.iter().find(|p| !problem.in_domain(p)) {
        return invalid(format!("point {p:?} lies outside the {} domain", problem.name()));
    }
    let form = problem.residual_form();
    let fields = form.fields().iter().map(|o| model.differentiate(o, pts)).collect::<Result<Vec<_>>>()?;
    let mut buf = vec![0.0; fields.len()];
    Ok((0..pts.len())
        .map(|p| {
            for (a, f) in fields.iter().enumerate() {
                buf[a] = f[p];
            }
            form.value(&buf)
        })
        .collect())
}

/// Initial/boundary mismatches of `model`, one vector per condition group.
pub fn ibc_residual(problem: &PdeProblem, model: &BwlerModel) -> Result<Vec<(String, Vec<f64>)>> {
    problem
        .ibc_groups(model.grid())?
        .into_iter()
        .map(|g| {
            let mut r: Vec<f64> = g.target.iter().map(|t| -t).collect();
            for term in &g.terms {
                let v = model.differentiate(&term.orders, &term.points)?;
                r.iter_mut().zip(&v).for_each(|(x, y)| *x += term.coef * y);
            }
            Ok((g.name, r))
        })
        .collect()
}

/// Loss value and gradient with respect to the model parameters.
pub fn loss(
    problem: &PdeProblem,
    model: &BwlerModel,
    lambda_ibc: f64,
    scheme: &CollocationScheme,
) -> Result<(f64, Vec<f64>)> {
    PinnObjective::new(problem, model, lambda_ibc, scheme)?.loss_grad(model.theta())
}

/// Read reference data: a one-line header, then rows of coordinates followed
/// by the solution value (whitespace or comma separated).
pub fn load_reference(path: &Path, ndim: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    parse_reference(&text, ndim)
}

pub fn parse_reference(text: &str, ndim: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("reference line {}: {e}", i + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if cols.len() != ndim + 1 {
            return Err(Error::Config(format!(
                "reference line {} has {} columns, expected {}",
                i + 1,
                cols.len(),
                ndim + 1
            )));
        }
        vals.push(cols[ndim]);
        pts.push(cols[..ndim].to_vec());
    }
    if pts.is_empty() {
        return Err(Error::Config("reference file has no data rows".into()));
    }
    Ok((pts, vals))
}
