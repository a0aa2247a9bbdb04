//! Dense/sparse helpers shared by the operators and optimizers.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, SymmetricEigen};

use crate::error::{Error, Result};

/// A linear map applied along one axis of row-major tensor data.
#[derive(Debug, Clone)]
pub enum AxisOp {
    /// Dense matrix together with its transpose (both are used by the
    /// forward and adjoint applications).
    Dense { mat: DMatrix<f64>, mat_t: DMatrix<f64> },
    /// Row-wise sparse stencils `(column, weight)`.
    Sparse { rows: Vec<Vec<(usize, f64)>>, ncols: usize },
}

impl AxisOp {
    pub fn dense(mat: DMatrix<f64>) -> Self {
        let mat_t = mat.transpose();
        AxisOp::Dense { mat, mat_t }
    }

    pub fn nrows(&self) -> usize {
        match self {
            AxisOp::Dense { mat, .. } => mat.nrows(),
            AxisOp::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            AxisOp::Dense { mat, .. } => mat.ncols(),
            AxisOp::Sparse { ncols, .. } => *ncols,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            AxisOp::Dense { mat, .. } => mat.clone(),
            AxisOp::Sparse { rows, ncols } => {
                let mut m = DMatrix::zeros(rows.len(), *ncols);
                for (i, row) in rows.iter().enumerate() {
                    for &(j, w) in row {
                        m[(i, j)] += w;
                    }
                }
                m
            }
        }
    }

    /// Multiply every entry by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        match self {
            AxisOp::Dense { mat, mat_t } => AxisOp::Dense { mat: mat * s, mat_t: mat_t * s },
            AxisOp::Sparse { rows, ncols } => AxisOp::Sparse {
                rows: rows.iter().map(|r| r.iter().map(|&(j, w)| (j, w * s)).collect()).collect(),
                ncols: *ncols,
            },
        }
    }

    /// Matrix-vector product on a single vector.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        apply_axis(self, v, &[v.len()], 0, false)
    }

    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        apply_axis(self, v, &[v.len()], 0, true)
    }
}

/// Apply `op` (or its transpose) along `axis` of row-major data of the given
/// shape. The output has `shape[axis]` replaced by the operator's output size.
pub fn apply_axis(op: &AxisOp, data: &[f64], shape: &[usize], axis: usize, transpose: bool) -> Vec<f64> {
    let n_in = shape[axis];
    let (rows_out, cols_in) = if transpose { (op.ncols(), op.nrows()) } else { (op.nrows(), op.ncols()) };
    assert_eq!(cols_in, n_in, "operator size does not match axis length");
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    debug_assert_eq!(data.len(), outer * n_in * inner);
    let mut out = vec![0.0; outer * rows_out * inner];

    match op {
        AxisOp::Dense { mat, mat_t } => {
            // Forward: out_block = M · block, with block (n_in × inner) row-major.
            let m = if transpose { mat_t } else { mat };
            let m_t = if transpose { mat } else { mat_t };
            if inner == 1 {
                // Data is (outer × n_in) row-major == (n_in × outer) column-major.
                let x = DMatrixView::from_slice(data, n_in, outer);
                let mut y = DMatrixViewMut::from_slice(&mut out, rows_out, outer);
                y.gemm(1.0, m, &x, 0.0);
            } else {
                for o in 0..outer {
                    let blk = &data[o * n_in * inner..(o + 1) * n_in * inner];
                    let x = DMatrixView::from_slice(blk, inner, n_in);
                    let ob = &mut out[o * rows_out * inner..(o + 1) * rows_out * inner];
                    let mut y = DMatrixViewMut::from_slice(ob, inner, rows_out);
                    y.gemm(1.0, &x, m_t, 0.0);
                }
            }
        }
        AxisOp::Sparse { rows, .. } => {
            for o in 0..outer {
                let blk = &data[o * n_in * inner..(o + 1) * n_in * inner];
                let ob = &mut out[o * rows_out * inner..(o + 1) * rows_out * inner];
                for (i, row) in rows.iter().enumerate() {
                    for &(j, w) in row {
                        let (src, dst) = if transpose { (i, j) } else { (j, i) };
                        let s = &blk[src * inner..(src + 1) * inner];
                        let d = &mut ob[dst * inner..(dst + 1) * inner];
                        for (a, b) in d.iter_mut().zip(s) {
                            *a += w * b;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
/// Stops after `max_iter` iterations or when the Rayleigh quotient changes by
/// less than `rel_tol` relatively.
pub fn power_iteration(
    dim: usize,
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    max_iter: usize,
    rel_tol: f64,
    seed_vec: Option<Vec<f64>>,
) -> Result<f64> {
    let mut v = seed_vec.unwrap_or_else(|| {
        // deterministic, not aligned with any grid mode
        (0..dim).map(|i| 1.0 + ((i as f64) * 0.618_033_988_7).fract()).collect()
    });
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v)?;
        let new_lambda = dot(&v, &w);
        let nw = norm(&w);
        if !nw.is_finite() {
            return Err(Error::Numerical("power iteration diverged".into()));
        }
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let done = (new_lambda - lambda).abs() <= rel_tol * new_lambda.abs();
        lambda = new_lambda;
        if done {
            break;
        }
    }
    Ok(lambda)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

/// `λ_max / λ_min` of a symmetric PSD matrix, `None` when singular.
pub fn sym_condition(m: &DMatrix<f64>) -> Option<f64> {
    let e = sym_eigenvalues(m);
    let lo = *e.first()?;
    let hi = *e.last()?;
    if lo <= hi * f64::EPSILON * (m.nrows() as f64) || lo <= 0.0 {
        None
    } else {
        Some(hi / lo)
    }
}

/// κ² of a (possibly rectangular) matrix: `λ_max(AᵀA)/λ_min(AᵀA)`.
pub fn kappa_sq(a: &DMatrix<f64>) -> Option<f64> {
    sym_condition(&(a.transpose() * a))
}

/// Thin QR `Y = QR` by two passes of Cholesky-QR (falls back to Householder
/// if the Gram matrix is numerically indefinite).
pub fn thin_qr(y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    fn chol_pass(y: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let g = y.transpose() * y;
        let chol = g.cholesky()?;
        let l = chol.l();
        let k = l.nrows();
        let l_inv = l.solve_lower_triangular(&DMatrix::identity(k, k))?;
        let q = y * l_inv.transpose();
        Some((q, l.transpose()))
    }
    if let Some((q1, r1)) = chol_pass(y) {
        if let Some((q2, r2)) = chol_pass(&q1) {
            return (q2, r2 * r1);
        }
    }
    let qr = y.clone().qr();
    (qr.q(), qr.r())
}
