use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_finite_vec, HessianOp, Objective, OptimizerInternals, StopReason, TrainOptions, TrainState};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, thin_qr};

/// Which curvature the Hessian-vector products use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvpMode {
    #[default]
    GaussNewton,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    None,
    #[default]
    Backtracking,
}

/// Newton-CG settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NncgConfig {
    /// Rank of the Nyström preconditioner.
    pub rank: usize,
    /// Maximum preconditioned-CG iterations per Newton step.
    pub cg_iters: usize,
    /// Fixed damping μ; `None` starts at `1e-8 ×` the sketched Hessian
    /// trace, divides by 10 after every full step (down to `1e-14 ×` trace)
    /// and multiplies by 10 after a shortened one.
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub hvp_mode: HvpMode,
    #[serde(default)]
    pub line_search: LineSearch,
    /// Rebuild the preconditioner every this many steps; `None` rebuilds
    /// every 20 steps for non-quadratic losses and never for quadratic ones.
    #[serde(default)]
    pub precond_every: Option<usize>,
    /// Relative residual at which CG stops early.
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    /// Seed of the Gaussian sketch.
    #[serde(default)]
    pub seed: u64,
}

fn default_cg_tol() -> f64 {
    1e-12
}

impl NncgConfig {
    pub fn new(rank: usize, cg_iters: usize) -> Self {
        Self {
            rank,
            cg_iters,
            damping: None,
            hvp_mode: HvpMode::GaussNewton,
            line_search: LineSearch::Backtracking,
            precond_every: None,
            cg_tol: default_cg_tol(),
            seed: 0,
        }
    }
}

const AUTO_PRECOND_EVERY: usize = 20;
const DAMPING_FACTOR: f64 = 1e-8;
const DAMPING_FLOOR: f64 = 1e-18;
const DAMPING_DECREASE: f64 = 0.1;
const DAMPING_INCREASE: f64 = 10.0;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

/// Low-rank approximation `H ≈ U diag(λ) Uᵀ` used as a CG preconditioner.
#[derive(Debug, Clone)]
pub struct NystromPreconditioner {
    u: DMatrix<f64>,
    lambda: Vec<f64>,
    mu: f64,
}

impl NystromPreconditioner {
    /// Build from `rank` Hessian-vector products against an orthonormalized
    /// Gaussian sketch.
    pub fn build(hvp: &HessianOp<'_>, dim: usize, rank: usize, seed: u64) -> Result<Self> {
        if rank == 0 || rank > dim {
            return invalid(format!("preconditioner rank {rank} must be in 1..={dim}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(dim, rank, |_, _| StandardNormal.sample(&mut rng));
        let (omega, _) = thin_qr(&g);
        let mut y = DMatrix::zeros(dim, rank);
        for j in 0..rank {
            let col: Vec<f64> = omega.column(j).iter().copied().collect();
            let hv = hvp(&col)?;
            check_finite_vec(&hv, "Hessian-vector product")?;
            y.set_column(j, &DVector::from_vec(hv));
        }
        let mut nu = (dim as f64).sqrt() * f64::EPSILON * y.norm();
        if nu == 0.0 {
            return Ok(Self { u: omega, lambda: vec![0.0; rank], mu: 0.0 });
        }
        let base = omega.transpose() * &y;
        let mut shift = nu;
        for _ in 0..8 {
            let mut m = &base + DMatrix::identity(rank, rank) * shift;
            m = (&m + m.transpose()) * 0.5;
            if let Some(chol) = m.clone().cholesky() {
                nu = shift;
                let y_nu = &y + &omega * nu;
                let (q, r) = thin_qr(&y_nu);
                let x = chol.solve(&r.transpose());
                let core = &r * x;
                let core = (&core + core.transpose()) * 0.5;
                let eig = SymmetricEigen::new(core);
                let mut order: Vec<usize> = (0..rank).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
                let v = DMatrix::from_fn(rank, rank, |i, j| eig.eigenvectors[(i, order[j])]);
                let u = q * v;
                let lambda = order.iter().map(|&k| (eig.eigenvalues[k] - nu).max(0.0)).collect();
                return Ok(Self { u, lambda, mu: 0.0 });
            }
            // Indefinite sketch (exact curvature): shift past the most negative eigenvalue.
            let lo = crate::linalg::sym_eigenvalues(&((&base + base.transpose()) * 0.5))[0];
            shift = shift.max(-lo) * 10.0;
        }
        Err(Error::Numerical("Nyström core matrix could not be factored".into()))
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// Approximate eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    pub fn trace_estimate(&self) -> f64 {
        self.lambda.iter().sum()
    }

    pub fn damping(&self) -> f64 {
        self.mu
    }

    pub fn set_damping(&mut self, mu: f64) {
        self.mu = mu;
    }

    /// `P⁻¹ v = (λ_r + μ) U (Λ + μI)⁻¹ Uᵀ v + (I − UUᵀ) v`.
    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        let lam_r = *self.lambda.last().unwrap_or(&0.0);
        let utv = self.u.tr_mul(&DVector::from_column_slice(v));
        let coef = DVector::from_fn(self.lambda.len(), |i, _| {
            let denom = self.lambda[i] + self.mu;
            if denom > 0.0 {
                ((lam_r + self.mu) / denom - 1.0) * utv[i]
            } else {
                0.0
            }
        });
        let corr = &self.u * coef;
        v.iter().zip(corr.iter()).map(|(a, b)| a + b).collect()
    }
}

enum CgOutcome {
    Solved(Vec<f64>, CgCarry),
    Breakdown,
}

/// Last search direction of a PCG run and its `rᵀP⁻¹r`, used to continue
/// the Krylov sequence on the next Newton step.
#[derive(Debug, Clone)]
struct CgCarry {
    dir: Vec<f64>,
    rz: f64,
}

/// Preconditioned CG on `(H + μI) p = b`, optionally continuing from the
/// previous run's search direction.
fn pcg(
    hvp: &HessianOp<'_>,
    pre: &NystromPreconditioner,
    mu: f64,
    b: &[f64],
    iters: usize,
    tol: f64,
    carry: Option<&CgCarry>,
) -> Result<CgOutcome> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bn = norm(b);
    if bn == 0.0 {
        return Ok(CgOutcome::Solved(x, CgCarry { dir: vec![0.0; n], rz: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut prev: Option<(Vec<f64>, f64)> = carry.filter(|c| c.rz > 0.0).map(|c| (c.dir.clone(), c.rz));
    let mut last = CgCarry { dir: vec![0.0; n], rz: 0.0 };
    for _ in 0..iters {
        let z = pre.apply_inverse(&r);
        let rz = dot(&r, &z);
        let d: Vec<f64> = match &prev {
            Some((dp, rzp)) => {
                let beta = rz / rzp;
                z.iter().zip(dp).map(|(a, b)| a + beta * b).collect()
            }
            None => z,
        };
        let mut ad = hvp(&d)?;
        for (a, di) in ad.iter_mut().zip(&d) {
            *a += mu * di;
        }
        let dad = dot(&d, &ad);
        if !(dad > 0.0) {
            return Ok(CgOutcome::Breakdown);
        }
        let alpha = dot(&r, &d) / dad;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        prev = Some((d, rz));
        if norm(&r) <= tol * bn {
            break;
        }
    }
    if let Some((dir, rz)) = prev {
        last = CgCarry { dir, rz };
    }
    check_finite_vec(&x, "Newton direction")?;
    Ok(CgOutcome::Solved(x, last))
}

/// Armijo backtracking; returns `(alpha, new_loss)` with `alpha = 0` on failure.
fn line_search(
    obj: &dyn Objective,
    theta: &[f64],
    loss: f64,
    g: &[f64],
    p: &[f64],
    mode: LineSearch,
) -> Result<(f64, f64)> {
    let trial = |alpha: f64| -> Result<(Vec<f64>, f64)> {
        let t: Vec<f64> = theta.iter().zip(p).map(|(a, b)| a + alpha * b).collect();
        let l = obj.loss(&t)?;
        Ok((t, l))
    };
    match mode {
        LineSearch::None => {
            let (_, l) = trial(1.0)?;
            Ok((1.0, l))
        }
        LineSearch::Backtracking => {
            let slope = dot(g, p);
            if !(slope <= 0.0) {
                return Ok((0.0, loss));
            }
            let mut alpha = 1.0;
            for _ in 0..MAX_HALVINGS {
                let (_, l) = trial(alpha)?;
                if l.is_finite() && l <= loss + ARMIJO_C * alpha * slope {
                    return Ok((alpha, l));
                }
                alpha *= 0.5;
            }
            Ok((0.0, loss))
        }
    }
}

/// Newton-CG with a Nyström preconditioner and Armijo line search.
pub fn run_nncg(
    obj: &dyn Objective,
    theta: Vec<f64>,
    steps: usize,
    cfg: &NncgConfig,
    opts: &TrainOptions,
) -> Result<TrainState> {
    let n = obj.dim();
    if cfg.rank == 0 || cfg.rank > n {
        return invalid(format!("preconditioner rank {} must be in 1..={n}", cfg.rank));
    }
    if cfg.cg_iters == 0 {
        return invalid("cg_iters must be >= 1");
    }
    if let Some(d) = cfg.damping {
        if !(d >= 0.0 && d.is_finite()) {
            return invalid(format!("invalid damping {d}"));
        }
    }
    let every = cfg.precond_every.unwrap_or(if obj.is_quadratic() { usize::MAX } else { AUTO_PRECOND_EVERY }).max(1);

    let mut st = TrainState::start(obj, theta, opts)?;
    let mut pre: Option<NystromPreconditioner> = None;
    let mut builds = 0u64;
    let mut since_build = 0usize;
    let mut force_rebuild = false;
    let mut alpha = 0.0;
    let mut mu = 0.0;
    let mut mu_floor = 0.0;
    let mut carry: Option<CgCarry> = None;

    for _ in 0..steps {
        let t0 = Instant::now();
        let (mut loss, g) = obj.loss_grad(&st.theta)?;
        let hvp = obj.hessian_at(&st.theta, cfg.hvp_mode)?;

        if pre.is_none() || since_build >= every || force_rebuild {
            let p = NystromPreconditioner::build(&hvp, n, cfg.rank, cfg.seed.wrapping_add(builds))?;
            let tr = p.trace_estimate();
            let scale = if tr > 0.0 { tr } else { 1.0 };
            mu = cfg.damping.unwrap_or(DAMPING_FACTOR * scale);
            mu_floor = cfg.damping.unwrap_or(DAMPING_FLOOR * scale);
            pre = Some(p);
            builds += 1;
            since_build = 0;
            force_rebuild = false;
            carry = None;
        }
        let precond = pre.as_mut().expect("preconditioner built above");
        precond.set_damping(mu);
        since_build += 1;

        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let (dir, next_carry) = match pcg(&hvp, precond, mu, &rhs, cfg.cg_iters, cfg.cg_tol, carry.as_ref())? {
            CgOutcome::Solved(p, c) => (p, c),
            CgOutcome::Breakdown => {
                mu = if mu > 0.0 { mu * 10.0 } else { DAMPING_FACTOR };
                precond.set_damping(mu);
                match pcg(&hvp, precond, mu, &rhs, cfg.cg_iters, cfg.cg_tol, None)? {
                    CgOutcome::Solved(p, c) => (p, c),
                    CgOutcome::Breakdown => {
                        return Err(Error::Numerical(format!(
                            "CG breakdown at iteration {} even with damping {mu:e}",
                            st.iteration + 1
                        )))
                    }
                }
            }
        };
        drop(hvp);

        let (a, new_loss) = line_search(obj, &st.theta, loss, &g, &dir, cfg.line_search)?;
        alpha = a;
        if a > 0.0 {
            for (x, d) in st.theta.iter_mut().zip(&dir) {
                *x += a * d;
            }
            check_finite_vec(&st.theta, "Newton update")?;
            loss = new_loss;
        }
        let full_step = a == 1.0;
        let next_mu = match cfg.damping {
            Some(_) => mu,
            None if full_step => (mu * DAMPING_DECREASE).max(mu_floor),
            None if a < 1.0 => mu * DAMPING_INCREASE,
            None => mu,
        };
        carry = (full_step && next_mu == mu).then_some(next_carry);
        mu = next_mu;
        let hit = st.record(obj, opts, loss, t0, alpha)?;
        if hit {
            break;
        }
        if a == 0.0 {
            if obj.is_quadratic() || force_rebuild || since_build == 1 {
                st.stop_reason = StopReason::Stalled;
                break;
            }
            force_rebuild = true;
        }
    }
    st.internals = OptimizerInternals::Nncg { damping: pre.as_ref().map_or(0.0, |p| p.damping()), preconditioner: pre };
    st.finish(obj, opts, alpha)?;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::LeastSquaresObjective;
    use rand::Rng;

    fn random_problem(m: usize, n: usize, seed: u64) -> LeastSquaresObjective {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, n, |_, j| rng.random_range(-1.0..1.0) * (1.0 + j as f64));
        let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        LeastSquaresObjective::new(a, y).unwrap()
    }

    #[test]
    fn nystrom_exact_at_full_rank() {
        let obj = random_problem(30, 8, 1);
        let h = obj.hessian_at(&[0.0; 8], HvpMode::GaussNewton).unwrap();
        let p = NystromPreconditioner::build(&h, 8, 8, 0).unwrap();
        let dense = obj.matrix().tr_mul(obj.matrix()) * (2.0 / 30.0);
        let recon = &p.u * DMatrix::from_diagonal(&DVector::from_vec(p.lambda.clone())) * p.u.transpose();
        assert!((recon - &dense).norm() <= 1e-8 * dense.norm());
        assert!(p.lambda.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_rank_newton_step_solves_quadratic() {
        let obj = random_problem(40, 10, 2);
        let mut cfg = NncgConfig::new(10, 10);
        cfg.damping = Some(0.0);
        let st = run_nncg(&obj, vec![0.0; 10], 1, &cfg, &TrainOptions::default()).unwrap();
        let (_, g) = obj.loss_grad(&st.theta).unwrap();
        assert!(norm(&g) <= 1e-10, "{}", norm(&g));
    }

    #[test]
    fn loss_non_increasing() {
        let obj = random_problem(50, 20, 3);
        let cfg = NncgConfig::new(5, 3);
        let st = run_nncg(&obj, vec![0.0; 20], 15, &cfg, &TrainOptions::default()).unwrap();
        let mut prev = st.initial_loss;
        for &l in &st.loss_history {
            assert!(l <= prev);
            prev = l;
        }
    }

    #[test]
    fn rejects_bad_config() {
        let obj = random_problem(10, 4, 4);
        assert!(run_nncg(&obj, vec![0.0; 4], 1, &NncgConfig::new(5, 2), &TrainOptions::default()).is_err());
        assert!(run_nncg(&obj, vec![0.0; 4], 1, &NncgConfig::new(2, 0), &TrainOptions::default()).is_err());
    }

    #[test]
    fn preconditioner_is_identity_on_complement() {
        let obj = random_problem(30, 12, 5);
        let h = obj.hessian_at(&[0.0; 12], HvpMode::GaussNewton).unwrap();
        let mut p = NystromPreconditioner::build(&h, 12, 4, 1).unwrap();
        p.set_damping(0.1);
        // a vector orthogonal to range(U) is returned unchanged
        let mut v = DVector::from_fn(12, |i, _| (i as f64).sin());
        let proj = &p.u * p.u.tr_mul(&v);
        v -= proj;
        let out = p.apply_inverse(v.as_slice());
        for (a, b) in out.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
