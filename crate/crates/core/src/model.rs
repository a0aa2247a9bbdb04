//! The explicit model: one trainable value per tensor-grid node.
//!
//! Evaluation interpolates the node values; differentiation applies the
//! per-axis derivative operators to the node values and interpolates the
//! result. Both are linear in the parameters, so gradients are formed with
//! the transposes of the same operators.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diff::{DiffMethod, DiffOperator};
use crate::error::{invalid, Error, Result};
use crate::grid::{AxisSpec, TensorGrid};
use crate::interp::{evaluation_matrix, tensor_eval_batch, NodeValues};
use crate::linalg::{apply_axis, AxisOp};

const CHECKPOINT_FORMAT: &str = "spectral-pinn-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

type OpCache = Arc<Mutex<HashMap<(usize, usize), Arc<DiffOperator>>>>;

/// Node-value model on a tensor grid.
#[derive(Debug, Clone)]
pub struct BwlerModel {
    grid: TensorGrid,
    theta: Vec<f64>,
    deriv: Vec<DiffMethod>,
    ops: OpCache,
}

impl BwlerModel {
    /// Zero-initialized model with spectral derivatives on every axis.
    pub fn new(grid: TensorGrid) -> Self {
        let deriv = grid.axes().iter().map(|a| DiffMethod::spectral_for(a.basis())).collect();
        Self::with_deriv(grid, deriv).expect("spectral methods always match their basis")
    }

    /// Zero-initialized model with explicit per-axis derivative methods.
    pub fn with_deriv(grid: TensorGrid, deriv: Vec<DiffMethod>) -> Result<Self> {
        if deriv.len() != grid.ndim() {
            return Err(Error::DimensionMismatch { expected: grid.ndim(), got: deriv.len() });
        }
        for (axis, m) in grid.axes().iter().zip(&deriv) {
            let ok = matches!(
                (m, axis.basis()),
                (DiffMethod::ChebSpectral, crate::grid::Basis::Chebyshev)
                    | (DiffMethod::FourierMatrix, crate::grid::Basis::Fourier)
                    | (DiffMethod::FiniteDifference { .. }, _)
            );
            if !ok {
                return invalid(format!("{m:?} is not compatible with a {:?} axis", axis.basis()));
            }
        }
        let theta = vec![0.0; grid.size()];
        Ok(Self { grid, theta, deriv, ops: Arc::default() })
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn deriv_config(&self) -> &[DiffMethod] {
        &self.deriv
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// Replace the parameters. Non-finite values are rejected.
    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.grid.size() {
            return Err(Error::DimensionMismatch { expected: self.grid.size(), got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        self.theta = theta;
        Ok(())
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        self.set_theta(theta)?;
        Ok(self)
    }

    /// Order-`m` derivative operator along `axis`, built on first use.
    pub fn operator(&self, axis: usize, m: usize) -> Result<Arc<DiffOperator>> {
        if axis >= self.grid.ndim() {
            return invalid(format!("axis {axis} out of range"));
        }
        let mut cache = self.ops.lock().map_err(|_| Error::Numerical("operator cache poisoned".into()))?;
        if let Some(op) = cache.get(&(axis, m)) {
            return Ok(op.clone());
        }
        let op = Arc::new(DiffOperator::new(self.grid.axis(axis), self.deriv[axis], m)?);
        cache.insert((axis, m), op.clone());
        Ok(op)
    }

    fn check_orders(&self, orders: &[usize]) -> Result<()> {
        if orders.len() != self.grid.ndim() {
            return Err(Error::DimensionMismatch { expected: self.grid.ndim(), got: orders.len() });
        }
        Ok(())
    }

    /// Derivative node values `D^orders data` for arbitrary node data.
    pub fn node_derivative(&self, orders: &[usize], data: &[f64]) -> Result<Vec<f64>> {
        self.check_orders(orders)?;
        if data.len() != self.grid.size() {
            return Err(Error::DimensionMismatch { expected: self.grid.size(), got: data.len() });
        }
        let shape = self.grid.shape();
        let mut out = data.to_vec();
        for (axis, &m) in orders.iter().enumerate() {
            if m > 0 {
                let op = self.operator(axis, m)?;
                out = apply_axis(op.axis_op(), &out, &shape, axis, false);
            }
        }
        Ok(out)
    }

    /// Transpose action of [`node_derivative`](Self::node_derivative).
    pub fn node_derivative_transpose(&self, orders: &[usize], data: &[f64]) -> Result<Vec<f64>> {
        self.check_orders(orders)?;
        if data.len() != self.grid.size() {
            return Err(Error::DimensionMismatch { expected: self.grid.size(), got: data.len() });
        }
        let shape = self.grid.shape();
        let mut out = data.to_vec();
        for (axis, &m) in orders.iter().enumerate().rev() {
            if m > 0 {
                let op = self.operator(axis, m)?;
                out = apply_axis(op.axis_op(), &out, &shape, axis, true);
            }
        }
        Ok(out)
    }

    /// Interpolated values at arbitrary points.
    pub fn evaluate(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let nv = NodeValues::<TensorGrid>::new(&self.grid, &self.theta)?;
        tensor_eval_batch(&nv, points)
    }

    /// Mixed partial derivative of the interpolant at arbitrary points.
    pub fn differentiate(&self, orders: &[usize], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.node_derivative(orders, &self.theta)?;
        let nv = NodeValues::<TensorGrid>::new(&self.grid, &d)?;
        tensor_eval_batch(&nv, points)
    }

    /// Values on the product of per-axis point lists, row-major in the
    /// same axis order as the grid.
    pub fn evaluate_product(&self, axis_points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mats = product_matrices(&self.grid, axis_points)?;
        Ok(apply_product(&mats, &self.grid.shape(), &self.theta))
    }

    /// Sample `source` at every node; the derivative configuration is kept.
    pub fn warm_start<F>(&self, source: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<f64>,
    {
        let theta = self.grid.node_points().iter().map(|p| source(p)).collect::<Result<Vec<f64>>>()?;
        self.clone().with_theta(theta)
    }

    /// Interpolate another model onto this model's nodes.
    pub fn warm_start_from(&self, other: &BwlerModel) -> Result<Self> {
        if !self.grid.same_domain(&other.grid) {
            return invalid("warm start source covers a different domain");
        }
        if self.grid == other.grid {
            return self.clone().with_theta(other.theta.clone());
        }
        let axis_points: Vec<Vec<f64>> = self.grid.axes().iter().map(|a| a.nodes().to_vec()).collect();
        let theta = other.evaluate_product(&axis_points)?;
        self.clone().with_theta(theta)
    }

    /// Write a versioned checkpoint: one JSON header line, then one value per line.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.checkpoint_string()?)?;
        Ok(())
    }

    pub fn checkpoint_string(&self) -> Result<String> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            axes: self.grid.specs(),
            deriv: self.deriv.clone(),
        };
        let mut s = serde_json::to_string(&header)?;
        s.push('\n');
        for v in &self.theta {
            writeln!(s, "{v:e}").expect("writing to a String cannot fail");
        }
        Ok(s)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        Self::parse_checkpoint(&std::fs::read_to_string(path)?)
    }

    pub fn parse_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: CheckpointHeader =
            serde_json::from_str(lines.next().ok_or_else(|| Error::Config("empty checkpoint".into()))?)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("not a checkpoint file: format {:?}", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", header.version)));
        }
        let grid = TensorGrid::from_specs(&header.axes)?;
        let theta = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad value {l:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        Self::with_deriv(grid, header.deriv)?.with_theta(theta)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format: String,
    version: u32,
    axes: Vec<AxisSpec>,
    deriv: Vec<DiffMethod>,
}

/// Per-axis evaluation matrices for a product point set.
pub fn product_matrices(grid: &TensorGrid, axis_points: &[Vec<f64>]) -> Result<Vec<AxisOp>> {
    if axis_points.len() != grid.ndim() {
        return Err(Error::DimensionMismatch { expected: grid.ndim(), got: axis_points.len() });
    }
    grid.axes().iter().zip(axis_points).map(|(g, xs)| Ok(AxisOp::dense(evaluation_matrix(g, xs)?))).collect()
}

/// Apply one operator per axis to row-major tensor data.
pub fn apply_product(mats: &[AxisOp], shape: &[usize], data: &[f64]) -> Vec<f64> {
    let mut shape = shape.to_vec();
    let mut out = data.to_vec();
    for (axis, m) in mats.iter().enumerate() {
        out = apply_axis(m, &out, &shape, axis, false);
        shape[axis] = m.nrows();
    }
    out
}

/// Dense matrix of [`BwlerModel::node_derivative`] (for small grids and tests).
pub fn node_derivative_matrix(model: &BwlerModel, orders: &[usize]) -> Result<DMatrix<f64>> {
    let n = model.num_params();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = model.node_derivative(orders, &e)?;
        e[j] = 0.0;
        m.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    Ok(m)
}
