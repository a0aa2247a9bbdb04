use nalgebra::{DMatrix, DVector};

use super::{HessianOp, HvpMode, Objective};
use crate::error::{invalid, Error, Result};

/// Mean-square fit `L(θ) = ‖Aθ − y‖² / M`, optionally with an accuracy
/// metric `‖Bθ − z‖ / ‖z‖` on held-out data.
#[derive(Debug, Clone)]
pub struct LeastSquaresObjective {
    a: DMatrix<f64>,
    y: DVector<f64>,
    test: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl LeastSquaresObjective {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return invalid("least-squares objective needs a non-empty matrix");
        }
        if a.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: y.len() });
        }
        Ok(Self { a, y, test: None })
    }

    pub fn with_test(mut self, b: DMatrix<f64>, z: DVector<f64>) -> Result<Self> {
        if b.ncols() != self.a.ncols() || b.nrows() != z.len() {
            return invalid("test matrix does not match the parameter count");
        }
        self.test = Some((b, z));
        Ok(self)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    fn residual(&self, theta: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(theta) - &self.y
    }

    /// Direct minimizer via SVD (the floor gradient methods converge to).
    pub fn solve_direct(&self) -> Result<Vec<f64>> {
        let svd = self.a.clone().svd(true, true);
        let x = svd.solve(&self.y, 1e-14 * svd.singular_values.max()).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(x.iter().copied().collect())
    }
}

impl Objective for LeastSquaresObjective {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.residual(theta).norm_squared() / self.a.nrows() as f64)
    }

    fn loss_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = self.residual(theta);
        let m = self.a.nrows() as f64;
        let g = self.a.tr_mul(&r) * (2.0 / m);
        Ok((r.norm_squared() / m, g.iter().copied().collect()))
    }

    fn hessian_at<'a>(&'a self, _theta: &[f64], _mode: HvpMode) -> Result<HessianOp<'a>> {
        let s = 2.0 / self.a.nrows() as f64;
        Ok(Box::new(move |v: &[f64]| {
            let av = &self.a * DVector::from_column_slice(v);
            Ok(self.a.tr_mul(&av).iter().map(|x| x * s).collect())
        }))
    }

    fn is_quadratic(&self) -> bool {
        true
    }

    fn metric(&self, theta: &[f64]) -> Option<Result<f64>> {
        let (b, z) = self.test.as_ref()?;
        let pred = b * DVector::from_column_slice(theta);
        let zn = z.norm();
        Some(if zn > 0.0 { Ok((pred - z).norm() / zn) } else { invalid("reference values have zero norm") })
    }
}
