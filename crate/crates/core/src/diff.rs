//! Derivative operators on node values.
//!
//! * Chebyshev axes: the FFT/even-extension spectral derivative at CGL nodes.
//!   A dense matrix realization is assembled from the same pipeline so that
//!   the adjoint needed for analytic gradients is available.
//! * Fourier axes: the explicit cotangent differentiation matrix.
//! * Any axis: Fornberg finite-difference matrices of given half-bandwidth.
//!
//! All operators act in canonical coordinates and are rescaled by
//! `scale^m` to act on physical coordinates.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Basis, Grid1D, TensorGrid};
use crate::interp::NodeValues;
use crate::linalg::{apply_axis, AxisOp};
use crate::transforms::{even_extension, fft_real, ifft, SpectrumBuffer};

/// First derivative at the CGL nodes of canonical `[-1, 1]` in `O(N log N)`.
pub fn cheb_fft_derivative(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 3 {
        return invalid("Chebyshev FFT derivative needs N >= 2");
    }
    let n = values.len() - 1;
    let spec = fft_real(&even_extension(values)?)?;
    let vhat = spec.values();

    // Chebyshev series coefficients (DCT-I normalization).
    let coef = |k: usize| -> f64 {
        let c = vhat[k].re / n as f64;
        if k == 0 || k == n {
            0.5 * c
        } else {
            c
        }
    };

    let two_n = 2 * n;
    let what: Vec<Complex64> = vhat
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let k_eff = if k < n {
                k as f64
            } else if k == n {
                0.0
            } else {
                k as f64 - two_n as f64
            };
            Complex64::new(0.0, k_eff) * v
        })
        .collect();
    let w = ifft(&SpectrumBuffer::new(what))?;

    let x = crate::grid::cgl_nodes(n)?;
    let mut d = vec![0.0; n + 1];
    for j in 1..n {
        d[j] = -w[j].re / (1.0 - x[j] * x[j]).sqrt();
    }
    let (mut d0, mut dn) = (0.0, 0.0);
    for k in 0..=n {
        let a = coef(k);
        let k2 = (k * k) as f64;
        d0 += k2 * a;
        dn += if k % 2 == 0 { -k2 * a } else { k2 * a };
    }
    d[0] = d0;
    d[n] = dn;
    Ok(d)
}

/// Dense canonical Chebyshev first-derivative matrix, assembled column by
/// column from [`cheb_fft_derivative`].
pub fn cheb_diff_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return invalid("Chebyshev FFT derivative needs N >= 2");
    }
    let mut m = DMatrix::zeros(n + 1, n + 1);
    let mut e = vec![0.0; n + 1];
    for j in 0..=n {
        e[j] = 1.0;
        let col = cheb_fft_derivative(&e)?;
        e[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Fourier differentiation matrix on `N` equispaced points of `[0, 2π)`:
/// `D_ij = ((-1)^{i-j}/2) cot(π(i-j)/N)`, zero diagonal.
///
/// The cotangent form is the classical even-`N` matrix; odd `N` is accepted
/// but is not the exact trigonometric derivative.
pub fn fourier_diff_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return invalid("Fourier differentiation needs N >= 2");
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let d = i as isize - j as isize;
        let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        // cot(π/2) is exactly zero; avoid the ~6e-17 rounding of tan.
        let arg = PI * d as f64 / n as f64;
        let cot = if 2 * d.unsigned_abs() == n { 0.0 } else { 1.0 / arg.tan() };
        0.5 * sign * cot
    }))
}

/// Fornberg finite-difference weights. Returns `w[k][i]`, the weight of
/// `f(nodes[i])` in the approximation of `f^{(k)}(z)` for `k = 0..=m`.
pub fn fornberg_weights(nodes: &[f64], z: f64, m: usize) -> Result<Vec<Vec<f64>>> {
    let n = nodes.len();
    if n < m + 1 {
        return invalid(format!("stencil of {n} nodes cannot resolve derivative order {m}"));
    }
    for i in 0..n {
        for j in 0..i {
            if nodes[i] == nodes[j] {
                return invalid("stencil nodes must be distinct");
            }
        }
    }
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    Ok(c)
}

/// Canonical finite-difference matrix of order `m` and half-bandwidth `k`.
///
/// Non-periodic axes use a window of `min(2k+1, N+1)` consecutive nodes,
/// centred on the row where possible and shifted inward (same width) near
/// the boundaries. Fourier axes wrap periodically with uniform spacing.
pub fn fd_diff_matrix(grid: &Grid1D, m: usize, k: usize) -> Result<AxisOp> {
    if m == 0 {
        return invalid("derivative order must be >= 1");
    }
    if 2 * k + 1 < m + 1 {
        return invalid(format!("half-bandwidth {k} too small for derivative order {m}"));
    }
    let x = grid.canonical_nodes();
    let len = x.len();
    let rows = match grid.basis() {
        Basis::Chebyshev => {
            let width = (2 * k + 1).min(len);
            if width < m + 1 {
                return invalid("grid too small for derivative order");
            }
            (0..len)
                .map(|i| {
                    let start = i.saturating_sub(k).min(len - width);
                    let local = &x[start..start + width];
                    let w = fornberg_weights(local, x[i], m)?;
                    Ok(w[m].iter().enumerate().map(|(j, &v)| (start + j, v)).collect())
                })
                .collect::<Result<Vec<Vec<(usize, f64)>>>>()?
        }
        Basis::Fourier => {
            let kk = k.min((len - 1) / 2);
            if 2 * kk + 1 < m + 1 {
                return invalid("grid too small for derivative order");
            }
            let h = 2.0 * PI / len as f64;
            let local: Vec<f64> = (0..=2 * kk).map(|j| (j as f64 - kk as f64) * h).collect();
            let w = fornberg_weights(&local, 0.0, m)?;
            (0..len).map(|i| (0..=2 * kk).map(|j| ((i + len + j - kk) % len, w[m][j])).collect()).collect()
        }
    };
    Ok(AxisOp::Sparse { rows, ncols: len })
}

/// `D^m` with each diagonal entry reset to minus its off-diagonal row sum, so
/// constants are annihilated up to a single rounding per row.
fn matrix_power_annihilating(d: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let mut p = d.clone();
    for _ in 1..m {
        p = d * p;
    }
    for i in 0..p.nrows() {
        let off: f64 = (0..p.ncols()).filter(|&j| j != i).map(|j| p[(i, j)]).sum();
        p[(i, i)] = -off;
    }
    p
}

/// Derivative discretization selected per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DiffMethod {
    ChebSpectral,
    FourierMatrix,
    FiniteDifference { half_bandwidth: usize },
}

impl DiffMethod {
    /// The spectral method native to a basis.
    pub fn spectral_for(basis: Basis) -> Self {
        match basis {
            Basis::Chebyshev => DiffMethod::ChebSpectral,
            Basis::Fourier => DiffMethod::FourierMatrix,
        }
    }
}

/// An order-`m` derivative on one axis, acting on physical coordinates.
#[derive(Debug, Clone)]
pub struct DiffOperator {
    method: DiffMethod,
    order: usize,
    op: AxisOp,
}

impl DiffOperator {
    pub fn new(grid: &Grid1D, method: DiffMethod, order: usize) -> Result<Self> {
        if order == 0 {
            return invalid("derivative order must be >= 1");
        }
        let scale = grid.scale().powi(order as i32);
        let op = match (method, grid.basis()) {
            (DiffMethod::ChebSpectral, Basis::Chebyshev) => {
                let d = cheb_diff_matrix(grid.n())?;
                AxisOp::dense(matrix_power_annihilating(&d, order) * scale)
            }
            (DiffMethod::FourierMatrix, Basis::Fourier) => {
                let d = fourier_diff_matrix(grid.len())?;
                AxisOp::dense(matrix_power_annihilating(&d, order) * scale)
            }
            (DiffMethod::FiniteDifference { half_bandwidth }, _) => {
                fd_diff_matrix(grid, order, half_bandwidth)?.scaled(scale)
            }
            (m, b) => return Err(Error::InvalidArgument(format!("{m:?} is not compatible with a {b:?} axis"))),
        };
        Ok(Self { method, order, op })
    }

    pub fn method(&self) -> DiffMethod {
        self.method
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn axis_op(&self) -> &AxisOp {
        &self.op
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        self.op.to_dense()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.op.matvec(values)
    }

    pub fn apply_transpose(&self, values: &[f64]) -> Vec<f64> {
        self.op.matvec_t(values)
    }
}

/// Derivative of order `m` along `axis` of tensor node values.
pub fn axis_derivative(nv: &NodeValues<'_, TensorGrid>, axis: usize, m: usize, method: DiffMethod) -> Result<Vec<f64>> {
    let grid = nv.grid();
    if axis >= grid.ndim() {
        return invalid(format!("axis {axis} out of range"));
    }
    let op = DiffOperator::new(grid.axis(axis), method, m)?;
    Ok(apply_axis(op.axis_op(), nv.values(), &grid.shape(), axis, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cgl_nodes;
    use crate::linalg::kappa_sq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn cheb_derivative_of_monomials() {
        let x = cgl_nodes(8).unwrap();
        let d = cheb_fft_derivative(&x).unwrap();
        assert!(max_err(&d, &[1.0; 9]) < 1e-13, "{d:?}");
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let d = cheb_fft_derivative(&sq).unwrap();
        let expect: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!(max_err(&d, &expect) < 1e-12);
    }

    #[test]
    fn cheb_derivative_exp() {
        let x = cgl_nodes(20).unwrap();
        let v: Vec<f64> = x.iter().map(|t| t.exp()).collect();
        let d = cheb_fft_derivative(&v).unwrap();
        assert!(max_err(&d, &v) <= 1e-11);
    }

    #[test]
    fn cheb_derivative_polynomial_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=20 {
            let x = cgl_nodes(n).unwrap();
            let c: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = |t: f64| c.iter().rev().fold(0.0, |a, ci| a * t + ci);
            let dp = |t: f64| c.iter().enumerate().skip(1).rev().fold(0.0, |a, (k, ci)| a * t + k as f64 * ci);
            let v: Vec<f64> = x.iter().map(|&t| p(t)).collect();
            let expect: Vec<f64> = x.iter().map(|&t| dp(t)).collect();
            let scale = expect.iter().fold(1.0f64, |m, e| m.max(e.abs()));
            let d = cheb_fft_derivative(&v).unwrap();
            assert!(max_err(&d, &expect) <= 1e-12 * scale, "n={n}");
        }
    }

    #[test]
    fn cheb_derivative_rejects_tiny() {
        assert!(cheb_fft_derivative(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn fourier_matrix_examples() {
        let d = fourier_diff_matrix(2).unwrap();
        assert_eq!(d, DMatrix::zeros(2, 2));
        let d = fourier_diff_matrix(4).unwrap();
        assert!((d[(1, 0)] + 0.5).abs() < 1e-15);
        let d = fourier_diff_matrix(16).unwrap();
        let x: Vec<f64> = (0..16).map(|j| 2.0 * PI * j as f64 / 16.0).collect();
        let s: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let got: Vec<f64> = (0..16).map(|i| (0..16).map(|j| d[(i, j)] * s[j]).sum()).collect();
        let expect: Vec<f64> = x.iter().map(|v| v.cos()).collect();
        assert!(max_err(&got, &expect) < 1e-12);
    }

    #[test]
    fn fornberg_examples() {
        let h = 0.1;
        let w = fornberg_weights(&[-h, 0.0, h], 0.0, 2).unwrap();
        assert!(max_err(&w[1], &[-1.0 / (2.0 * h), 0.0, 1.0 / (2.0 * h)]) < 1e-12);
        assert!(max_err(&w[2], &[1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)]) < 1e-9);
        let w = fornberg_weights(&[0.0, h], 0.0, 1).unwrap();
        assert!(max_err(&w[1], &[-1.0 / h, 1.0 / h]) < 1e-12);
        assert!(fornberg_weights(&[0.0, 0.0, 1.0], 0.0, 1).is_err());
        assert!(fornberg_weights(&[0.0, 1.0], 0.0, 2).is_err());
    }

    #[test]
    fn fornberg_matches_vandermonde_moments() {
        // Independent oracle: solve Σ w_i (x_i - z)^p / p! = δ_{pm}.
        let nodes: [f64; 5] = [-0.3, -0.1, 0.05, 0.2, 0.45];
        let z = 0.02;
        for m in 0..4 {
            let n = nodes.len();
            let a = DMatrix::from_fn(n, n, |p, i| {
                let f: f64 = (1..=p).map(|q| q as f64).product();
                (nodes[i] - z).powi(p as i32) / f
            });
            let mut rhs = nalgebra::DVector::zeros(n);
            rhs[m] = 1.0;
            let w = a.lu().solve(&rhs).unwrap();
            let f = fornberg_weights(&nodes, z, m).unwrap();
            for i in 0..n {
                assert!((f[m][i] - w[i]).abs() < 1e-9 * w.amax().max(1.0));
            }
        }
    }

    #[test]
    fn fd_linear_data_exact() {
        for grid in [Grid1D::chebyshev(12, 0.0, 3.0).unwrap(), Grid1D::chebyshev(5, -1.0, 1.0).unwrap()] {
            let op = DiffOperator::new(&grid, DiffMethod::FiniteDifference { half_bandwidth: 1 }, 1).unwrap();
            let v: Vec<f64> = grid.nodes().iter().map(|x| 2.5 * x - 1.0).collect();
            let d = op.apply(&v);
            assert!(max_err(&d, &vec![2.5; v.len()]) < 1e-12);
        }
    }

    #[test]
    fn fd_stencil_width() {
        let g = Grid1D::chebyshev(20, -1.0, 1.0).unwrap();
        for k in 1..4 {
            if let AxisOp::Sparse { rows, .. } = fd_diff_matrix(&g, 1, k).unwrap() {
                assert!(rows.iter().all(|r| r.len() <= 2 * k + 1));
            } else {
                panic!("expected sparse");
            }
        }
        assert!(fd_diff_matrix(&g, 3, 0).is_err());
    }

    #[test]
    fn fd_periodic_truncation_error() {
        // Central 3-point first derivative: error ≈ h²/6 |f'''|.
        let n = 64;
        let g = Grid1D::fourier(n, 0.0, 2.0 * PI).unwrap();
        let op = DiffOperator::new(&g, DiffMethod::FiniteDifference { half_bandwidth: 1 }, 1).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let d = op.apply(&v);
        let expect: Vec<f64> = g.nodes().iter().map(|x| x.cos()).collect();
        let err = max_err(&d, &expect);
        let h = 2.0 * PI / n as f64;
        let predicted = h * h / 6.0;
        assert!(err >= predicted / 2.0 && err <= predicted * 2.0, "{err} vs {predicted}");
    }

    #[test]
    fn fd_global_stencil_is_spectral() {
        let g = Grid1D::chebyshev(16, -1.0, 1.0).unwrap();
        let fd = DiffOperator::new(&g, DiffMethod::FiniteDifference { half_bandwidth: 16 }, 2).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| x * x * x).collect();
        let d = fd.apply(&v);
        let expect: Vec<f64> = g.nodes().iter().map(|x| 6.0 * x).collect();
        assert!(max_err(&d, &expect) < 1e-10);

        for n in [4, 8, 16, 32] {
            let g = Grid1D::chebyshev(n, -1.0, 1.0).unwrap();
            let fd = DiffOperator::new(&g, DiffMethod::FiniteDifference { half_bandwidth: n }, 1).unwrap();
            let v: Vec<f64> = g.nodes().iter().map(|x| x.exp()).collect();
            let a = fd.apply(&v);
            let b = cheb_fft_derivative(&v).unwrap();
            let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(max_err(&a, &b) <= 1e-9 * scale, "n={n}");
        }
    }

    #[test]
    fn operators_kill_constants() {
        for (g, m) in [
            (Grid1D::chebyshev(30, 0.0, 1.0).unwrap(), DiffMethod::ChebSpectral),
            (Grid1D::fourier(30, 0.0, 1.0).unwrap(), DiffMethod::FourierMatrix),
            (Grid1D::chebyshev(30, 0.0, 1.0).unwrap(), DiffMethod::FiniteDifference { half_bandwidth: 2 }),
            (Grid1D::fourier(30, 0.0, 1.0).unwrap(), DiffMethod::FiniteDifference { half_bandwidth: 3 }),
        ] {
            for order in 1..=2 {
                let op = DiffOperator::new(&g, m, order).unwrap();
                let d = op.apply(&vec![1.0; g.len()]);
                // canonical tolerance 1e-12·N, rescaled to the unit interval
                let tol = 1e-12 * g.len() as f64 * g.scale().powi(order as i32);
                let worst = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                assert!(worst <= tol, "{m:?} order {order}: {worst} > {tol}");
            }
        }
    }

    #[test]
    fn incompatible_method_rejected() {
        let g = Grid1D::fourier(8, 0.0, 1.0).unwrap();
        assert!(DiffOperator::new(&g, DiffMethod::ChebSpectral, 1).is_err());
        let g = Grid1D::chebyshev(8, 0.0, 1.0).unwrap();
        assert!(DiffOperator::new(&g, DiffMethod::FourierMatrix, 1).is_err());
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.9);
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let du = cheb_fft_derivative(&u).unwrap();
        let dv = cheb_fft_derivative(&v).unwrap();
        let dm = cheb_fft_derivative(&mix).unwrap();
        let comb: Vec<f64> = du.iter().zip(&dv).map(|(x, y)| a * x + b * y).collect();
        let scale = comb.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max_err(&dm, &comb) <= 1e-12 * scale);
    }

    #[test]
    fn spectral_conditioning_grows() {
        // κ of the first-derivative matrix restricted to its row space; use the
        // Dirichlet-pinned square block (drop last row/col) to remove the constant null vector.
        let mut last = 0.0;
        for n in [8, 16, 32, 64] {
            let d = cheb_diff_matrix(n).unwrap();
            let k = kappa_sq(&d.view((0, 0), (n, n)).into_owned()).unwrap();
            assert!(k > last, "n={n}: {k} <= {last}");
            last = k;
        }
    }

    #[test]
    fn fd_order_of_accuracy() {
        // k-point centred stencils on smooth periodic data.
        let f = |x: f64| (x.sin()).exp();
        let df = |x: f64| x.cos() * (x.sin()).exp();
        for k in 1..=3usize {
            let err = |n: usize| {
                let g = Grid1D::fourier(n, 0.0, 2.0 * PI).unwrap();
                let op = DiffOperator::new(&g, DiffMethod::FiniteDifference { half_bandwidth: k }, 1).unwrap();
                let v: Vec<f64> = g.nodes().iter().map(|&x| f(x)).collect();
                let e: Vec<f64> = g.nodes().iter().map(|&x| df(x)).collect();
                max_err(&op.apply(&v), &e)
            };
            let ratio = err(64) / err(128);
            let bound = 0.7 * 2f64.powi(2 * k as i32 - 1);
            assert!(ratio >= bound, "k={k}: ratio {ratio} below {bound}");
        }
    }

    #[test]
    fn axis_derivative_examples() {
        let g =
            TensorGrid::new(vec![Grid1D::chebyshev(6, 0.0, 1.0).unwrap(), Grid1D::fourier(8, 0.0, 2.0 * PI).unwrap()])
                .unwrap();
        let v: Vec<f64> = g.node_points().iter().map(|p| p[0]).collect();
        let nv = NodeValues::<TensorGrid>::new(&g, &v).unwrap();
        let d = axis_derivative(&nv, 0, 1, DiffMethod::ChebSpectral).unwrap();
        assert!(d.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(axis_derivative(&nv, 1, 1, DiffMethod::ChebSpectral).is_err());
        assert!(axis_derivative(&nv, 2, 1, DiffMethod::ChebSpectral).is_err());

        let g =
            TensorGrid::new(vec![Grid1D::chebyshev(8, -1.0, 1.0).unwrap(), Grid1D::chebyshev(8, -1.0, 1.0).unwrap()])
                .unwrap();
        let v: Vec<f64> = g.node_points().iter().map(|p| p[0] * p[0] * p[1]).collect();
        let nv = NodeValues::<TensorGrid>::new(&g, &v).unwrap();
        let d = axis_derivative(&nv, 0, 2, DiffMethod::ChebSpectral).unwrap();
        for (p, dv) in g.node_points().iter().zip(&d) {
            assert!((dv - 2.0 * p[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn convection_solution_annihilated() {
        let g = TensorGrid::new(vec![
            Grid1D::chebyshev(81, 0.0, 1.0).unwrap(),
            Grid1D::fourier(80, 0.0, 2.0 * PI).unwrap(),
        ])
        .unwrap();
        let v: Vec<f64> = g.node_points().iter().map(|p| (p[1] - 40.0 * p[0]).sin()).collect();
        let nv = NodeValues::<TensorGrid>::new(&g, &v).unwrap();
        let dt = axis_derivative(&nv, 0, 1, DiffMethod::ChebSpectral).unwrap();
        let dx = axis_derivative(&nv, 1, 1, DiffMethod::FourierMatrix).unwrap();
        let res = dt.iter().zip(&dx).map(|(a, b)| (a + 40.0 * b).abs()).fold(0.0, f64::max);
        assert!(res <= 1e-8, "{res}");
    }
}
