//! Interpolation grids.
//!
//! Chebyshev axes use the Chebyshev-Gauss-Lobatto points `cos(jπ/N)`,
//! `j = 0..=N` (so `N + 1` nodes, decreasing in canonical coordinates).
//! Fourier axes use `N` equispaced points `2πj/N` on `[0, 2π)`. Physical
//! coordinates are related to canonical ones by an affine map.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative slack allowed when checking that a physical point lies in its interval.
pub const INTERVAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Chebyshev,
    Fourier,
}

/// Chebyshev-Gauss-Lobatto nodes `cos(jπ/N)` with exact `±1` endpoints.
pub fn cgl_nodes(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("Chebyshev grid needs N >= 1");
    }
    // sin((N-2j)π/(2N)) equals cos(jπ/N) and is exactly antisymmetric about
    // the midpoint, with exact ±1 endpoints and an exact zero for even N.
    let x = (0..=n)
        .map(|j| {
            let k = n as f64 - 2.0 * j as f64;
            (k * PI / (2.0 * n as f64)).sin()
        })
        .collect();
    Ok(x)
}

/// Barycentric weights `(-1)^j / (1 + δ_{j0} + δ_{jN})` for the CGL nodes.
pub fn cgl_bary_weights(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("Chebyshev grid needs N >= 1");
    }
    Ok((0..=n)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                0.5 * sign
            } else {
                sign
            }
        })
        .collect())
}

/// Equispaced periodic nodes `2πj/N`, `j = 0..N`.
pub fn fourier_nodes(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return invalid("Fourier grid needs N >= 2");
    }
    Ok((0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect())
}

/// Diagonal quadrature weights on the CGL nodes: `π/(2N)` at the endpoints,
/// `π/N` in the interior. They sum to `π`.
pub fn clenshaw_curtis_weights(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("Chebyshev grid needs N >= 1");
    }
    let interior = PI / n as f64;
    let end = PI / (2 * n) as f64;
    Ok((0..=n).map(|j| if j == 0 || j == n { end } else { interior }).collect())
}

/// One axis of a solution grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    basis: Basis,
    n: usize,
    interval: (f64, f64),
    canonical: Vec<f64>,
    nodes: Vec<f64>,
    bary_weights: Vec<f64>,
}

impl Grid1D {
    pub fn chebyshev(n: usize, a: f64, b: f64) -> Result<Self> {
        check_interval(a, b)?;
        let canonical = cgl_nodes(n)?;
        let bary_weights = cgl_bary_weights(n)?;
        let nodes = canonical.iter().map(|&t| (a + 0.5 * (b - a) * (t + 1.0)).clamp(a, b)).collect();
        Ok(Self { basis: Basis::Chebyshev, n, interval: (a, b), canonical, nodes, bary_weights })
    }

    pub fn fourier(n: usize, a: f64, b: f64) -> Result<Self> {
        check_interval(a, b)?;
        let canonical = fourier_nodes(n)?;
        let nodes = (0..n).map(|j| a + (b - a) * j as f64 / n as f64).collect();
        Ok(Self { basis: Basis::Fourier, n, interval: (a, b), canonical, nodes, bary_weights: Vec::new() })
    }

    pub fn new(basis: Basis, n: usize, a: f64, b: f64) -> Result<Self> {
        match basis {
            Basis::Chebyshev => Self::chebyshev(n, a, b),
            Basis::Fourier => Self::fourier(n, a, b),
        }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// The node-count parameter (`N + 1` nodes for Chebyshev, `N` for Fourier).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Physical node coordinates.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn canonical_nodes(&self) -> &[f64] {
        &self.canonical
    }

    /// Barycentric weights; empty for Fourier axes.
    pub fn bary_weights(&self) -> &[f64] {
        &self.bary_weights
    }

    /// Derivative rescaling factor: one canonical derivative times `scale`
    /// is one physical derivative.
    pub fn scale(&self) -> f64 {
        let (a, b) = self.interval;
        match self.basis {
            Basis::Chebyshev => 2.0 / (b - a),
            Basis::Fourier => 2.0 * PI / (b - a),
        }
    }

    /// Map a physical coordinate to `(canonical coordinate, derivative scale)`.
    pub fn map_point(&self, x: f64) -> Result<(f64, f64)> {
        if !x.is_finite() {
            return Err(Error::NonFinite("map_point"));
        }
        let (a, b) = self.interval;
        let slack = INTERVAL_TOL * (b - a);
        if x < a - slack || x > b + slack {
            return Err(Error::Domain { x, a, b });
        }
        Ok((self.to_canonical_unchecked(x), self.scale()))
    }

    pub(crate) fn to_canonical_unchecked(&self, x: f64) -> f64 {
        let (a, b) = self.interval;
        match self.basis {
            Basis::Chebyshev => (2.0 * (x - a) / (b - a) - 1.0).clamp(-1.0, 1.0),
            Basis::Fourier => 2.0 * PI * (x - a) / (b - a),
        }
    }

    /// Inverse of the affine map.
    pub fn to_physical(&self, t: f64) -> f64 {
        let (a, b) = self.interval;
        match self.basis {
            Basis::Chebyshev => a + 0.5 * (b - a) * (t + 1.0),
            Basis::Fourier => a + (b - a) * t / (2.0 * PI),
        }
    }

    /// Serializable descriptor (basis, n, interval).
    pub fn spec(&self) -> AxisSpec {
        AxisSpec { basis: self.basis, n: self.n, interval: [self.interval.0, self.interval.1] }
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return invalid(format!("interval must satisfy a < b, got ({a}, {b})"));
    }
    Ok(())
}

/// Grid descriptor as it appears in reports, configs and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub basis: Basis,
    pub n: usize,
    pub interval: [f64; 2],
}

impl AxisSpec {
    pub fn build(&self) -> Result<Grid1D> {
        Grid1D::new(self.basis, self.n, self.interval[0], self.interval[1])
    }
}

/// Ordered tensor product of 1-D axes. Data on the grid is stored row-major
/// (last axis varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    axes: Vec<Grid1D>,
}

impl TensorGrid {
    pub fn new(axes: Vec<Grid1D>) -> Result<Self> {
        if axes.is_empty() {
            return invalid("tensor grid needs at least one axis");
        }
        Ok(Self { axes })
    }

    pub fn from_specs(specs: &[AxisSpec]) -> Result<Self> {
        Self::new(specs.iter().map(AxisSpec::build).collect::<Result<_>>()?)
    }

    pub fn axes(&self) -> &[Grid1D] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Grid1D {
        &self.axes[i]
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Grid1D::len).collect()
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(Grid1D::len).product()
    }

    pub fn specs(&self) -> Vec<AxisSpec> {
        self.axes.iter().map(Grid1D::spec).collect()
    }

    /// Multi-index of a flat row-major offset.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.ndim()];
        for (d, ax) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % ax.len();
            flat /= ax.len();
        }
        idx
    }

    /// Physical coordinates of every node, row-major.
    pub fn node_points(&self) -> Vec<Vec<f64>> {
        (0..self.size())
            .map(|f| self.unravel(f).iter().zip(&self.axes).map(|(&i, ax)| ax.nodes()[i]).collect())
            .collect()
    }

    /// True when both grids span the same physical box.
    pub fn same_domain(&self, other: &TensorGrid) -> bool {
        self.ndim() == other.ndim()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                let (a0, a1) = a.interval();
                let (b0, b1) = b.interval();
                let tol = 1e-12 * (a1 - a0).abs().max(1.0);
                (a0 - b0).abs() <= tol && (a1 - b1).abs() <= tol
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn cgl_nodes_small() {
        assert_eq!(cgl_nodes(1).unwrap(), vec![1.0, -1.0]);
        assert_eq!(cgl_nodes(2).unwrap(), vec![1.0, 0.0, -1.0]);
        let h = 0.5f64.sqrt();
        close(&cgl_nodes(4).unwrap(), &[1.0, h, 0.0, -h, -1.0], 2.3e-16);
        assert!(cgl_nodes(0).is_err());
    }

    #[test]
    fn cgl_nodes_strictly_decreasing() {
        for n in 1..60 {
            let x = cgl_nodes(n).unwrap();
            assert!(x.windows(2).all(|w| w[0] > w[1]));
        }
    }

    #[test]
    fn bary_weights_small() {
        assert_eq!(cgl_bary_weights(2).unwrap(), vec![0.5, -1.0, 0.5]);
        assert_eq!(cgl_bary_weights(1).unwrap(), vec![0.5, -0.5]);
        assert_eq!(cgl_bary_weights(3).unwrap(), vec![0.5, -1.0, 1.0, -0.5]);
    }

    #[test]
    fn bary_weights_match_product_definition() {
        // w_j ∝ 1 / Π_{k≠j} (x_j - x_k)
        for n in 1..=12 {
            let x = cgl_nodes(n).unwrap();
            let w = cgl_bary_weights(n).unwrap();
            let prod: Vec<f64> =
                (0..=n).map(|j| 1.0 / (0..=n).filter(|&k| k != j).map(|k| x[j] - x[k]).product::<f64>()).collect();
            let r0 = prod[0] / w[0];
            for j in 0..=n {
                let r = prod[j] / w[j];
                assert!((r / r0 - 1.0).abs() < 1e-10, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn fourier_nodes_small() {
        close(&fourier_nodes(2).unwrap(), &[0.0, PI], 0.0);
        close(&fourier_nodes(4).unwrap(), &[0.0, PI / 2.0, PI, 1.5 * PI], 1e-15);
        close(&fourier_nodes(3).unwrap(), &[0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0], 1e-15);
        assert!(fourier_nodes(1).is_err());
    }

    #[test]
    fn cc_weights() {
        close(&clenshaw_curtis_weights(2).unwrap(), &[PI / 4.0, PI / 2.0, PI / 4.0], 1e-16);
        close(&clenshaw_curtis_weights(1).unwrap(), &[PI / 2.0, PI / 2.0], 1e-16);
        close(&clenshaw_curtis_weights(4).unwrap(), &[PI / 8.0, PI / 4.0, PI / 4.0, PI / 4.0, PI / 8.0], 1e-16);
        for n in 1..200 {
            let s: f64 = clenshaw_curtis_weights(n).unwrap().iter().sum();
            assert!((s - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn map_point_examples() {
        let g = Grid1D::chebyshev(8, 0.0, 2.0).unwrap();
        assert_eq!(g.map_point(1.0).unwrap(), (0.0, 1.0));
        let g = Grid1D::chebyshev(8, -1.0, 1.0).unwrap();
        let (t, s) = g.map_point(0.3).unwrap();
        assert!((t - 0.3).abs() < 1e-16 && s == 1.0);
        let g = Grid1D::fourier(8, 0.0, 2.0 * PI).unwrap();
        let (t, s) = g.map_point(PI).unwrap();
        assert!((t - PI).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn map_point_tolerance_and_errors() {
        let g = Grid1D::chebyshev(4, 0.0, 1.0).unwrap();
        assert!(g.map_point(1.0 + 1e-14).is_ok());
        assert!(matches!(g.map_point(1.01), Err(Error::Domain { .. })));
        assert!(matches!(g.map_point(f64::NAN), Err(Error::NonFinite(_))));
        assert!(Grid1D::chebyshev(4, 1.0, 1.0).is_err());
    }

    #[test]
    fn mapped_nodes_round_trip() {
        let grids = [
            Grid1D::chebyshev(17, -3.0, 5.5).unwrap(),
            Grid1D::chebyshev(81, 0.0, 1.0).unwrap(),
            Grid1D::fourier(80, 0.0, 2.0 * PI).unwrap(),
            Grid1D::fourier(31, -1.0, 2.0).unwrap(),
        ];
        for g in &grids {
            let (a, b) = g.interval();
            for (x, t) in g.nodes().iter().zip(g.canonical_nodes()) {
                assert!(*x >= a && *x <= b);
                let (tt, _) = g.map_point(*x).unwrap();
                let tol = 4.0 * f64::EPSILON * t.abs().max(1.0);
                assert!((tt - t).abs() <= tol, "{tt} vs {t}");
            }
        }
    }

    #[test]
    fn tensor_grid_shape() {
        let g = TensorGrid::new(vec![
            Grid1D::chebyshev(81, 0.0, 1.0).unwrap(),
            Grid1D::fourier(80, 0.0, 2.0 * PI).unwrap(),
        ])
        .unwrap();
        assert_eq!(g.shape(), vec![82, 80]);
        assert_eq!(g.size(), 82 * 80);
        assert_eq!(g.unravel(81), vec![1, 1]);
        let pts = g.node_points();
        assert_eq!(pts.len(), g.size());
        assert_eq!(pts[81], vec![g.axis(0).nodes()[1], g.axis(1).nodes()[1]]);
    }
}
