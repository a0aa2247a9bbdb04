//! Evaluation of interpolants from node values.
//!
//! Every evaluation is linear in the node values, so besides the direct
//! evaluators this module exposes the underlying cardinal-function weights
//! ([`AxisWeights`]) and a [`PointEvaluator`] that applies a whole batch of
//! evaluation functionals (and their transpose) to tensor data.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Basis, Grid1D, TensorGrid};
use crate::transforms::fft_real;

/// A query closer than this (in canonical coordinates) to a node returns the
/// node value directly.
pub const NODE_HIT_TOL: f64 = 1e-14;

/// Node values attached to a grid.
#[derive(Debug, Clone, Copy)]
pub struct NodeValues<'a, G> {
    grid: &'a G,
    values: &'a [f64],
}

impl<'a> NodeValues<'a, Grid1D> {
    pub fn new(grid: &'a Grid1D, values: &'a [f64]) -> Result<Self> {
        check_values(grid.len(), values)?;
        Ok(Self { grid, values })
    }
}

impl<'a> NodeValues<'a, TensorGrid> {
    pub fn new(grid: &'a TensorGrid, values: &'a [f64]) -> Result<Self> {
        check_values(grid.size(), values)?;
        Ok(Self { grid, values })
    }
}

impl<'a, G> NodeValues<'a, G> {
    pub fn grid(&self) -> &'a G {
        self.grid
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }
}

fn check_values(expected: usize, values: &[f64]) -> Result<()> {
    if values.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("node values"));
    }
    Ok(())
}

/// Cardinal-function values of one axis at one query point.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisWeights {
    /// The query coincides with node `i`; the weight vector is `e_i`.
    Node(usize),
    Dense(Vec<f64>),
}

impl AxisWeights {
    pub fn dot(&self, values: &[f64]) -> f64 {
        match self {
            AxisWeights::Node(i) => values[*i],
            AxisWeights::Dense(w) => w.iter().zip(values).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        match self {
            AxisWeights::Node(i) => {
                let mut v = vec![0.0; len];
                v[*i] = 1.0;
                v
            }
            AxisWeights::Dense(w) => w.clone(),
        }
    }
}

/// Barycentric cardinal weights `ℓ_j(t)` on a CGL axis at canonical `t`.
pub fn cheb_cardinal(grid: &Grid1D, t: f64) -> AxisWeights {
    let x = grid.canonical_nodes();
    let w = grid.bary_weights();
    if let Some(j) = x.iter().position(|&xj| (t - xj).abs() <= NODE_HIT_TOL) {
        return AxisWeights::Node(j);
    }
    let mut terms: Vec<f64> = w.iter().zip(x).map(|(wj, xj)| wj / (t - xj)).collect();
    let denom: f64 = terms.iter().sum();
    for v in &mut terms {
        *v /= denom;
    }
    AxisWeights::Dense(terms)
}

/// Reduce a canonical Fourier coordinate to `[0, 2π)`.
fn wrap(t: f64) -> f64 {
    let r = t.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Periodic cardinal weights `S_N(t - t_j)` on a Fourier axis at canonical `t`,
/// using the balanced convention (Nyquist mode split evenly for even `N`).
pub fn fourier_cardinal(grid: &Grid1D, t: f64) -> AxisWeights {
    let n = grid.len();
    let t = wrap(t);
    let h = 2.0 * PI / n as f64;
    let nearest = (t / h).round() as usize % n;
    let mut dist = (t - grid.canonical_nodes()[nearest]).abs();
    dist = dist.min(2.0 * PI - dist);
    if dist <= NODE_HIT_TOL {
        return AxisWeights::Node(nearest);
    }
    let nf = n as f64;
    let w = grid
        .canonical_nodes()
        .iter()
        .map(|&tj| {
            let d = t - tj;
            let s = (0.5 * nf * d).sin();
            if n.is_multiple_of(2) {
                s / (nf * (0.5 * d).tan())
            } else {
                s / (nf * (0.5 * d).sin())
            }
        })
        .collect();
    AxisWeights::Dense(w)
}

/// Cardinal weights at a physical coordinate. Fourier axes accept any finite
/// coordinate (periodic); Chebyshev axes require the interval.
pub fn cardinal_weights(grid: &Grid1D, x: f64) -> Result<AxisWeights> {
    if !x.is_finite() {
        return Err(Error::NonFinite("query point"));
    }
    match grid.basis() {
        Basis::Chebyshev => {
            let (t, _) = grid.map_point(x)?;
            Ok(cheb_cardinal(grid, t))
        }
        Basis::Fourier => Ok(fourier_cardinal(grid, grid.to_canonical_unchecked(x))),
    }
}

/// Barycentric evaluation on a Chebyshev axis.
pub fn bary_eval(nv: &NodeValues<'_, Grid1D>, x: f64) -> Result<f64> {
    let grid = nv.grid();
    if grid.basis() != Basis::Chebyshev {
        return Err(Error::InvalidArgument("bary_eval needs a Chebyshev grid".into()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("query point"));
    }
    let (t, _) = grid.map_point(x)?;
    let xs = grid.canonical_nodes();
    let f = nv.values();
    if let Some(j) = xs.iter().position(|&xj| (t - xj).abs() <= NODE_HIT_TOL) {
        return Ok(f[j]);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((wj, xj), fj) in grid.bary_weights().iter().zip(xs).zip(f) {
        let c = wj / (t - xj);
        num += c * fj;
        den += c;
    }
    Ok(num / den)
}

pub fn bary_eval_batch(nv: &NodeValues<'_, Grid1D>, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter().map(|&x| bary_eval(nv, x)).collect()
}

/// Trigonometric interpolation via `f̂ = FFT(values)/N`.
pub fn fourier_eval(nv: &NodeValues<'_, Grid1D>, x: f64) -> Result<f64> {
    let coeffs = fourier_coefficients(nv)?;
    fourier_eval_coeffs(nv.grid(), &coeffs, x)
}

pub fn fourier_eval_batch(nv: &NodeValues<'_, Grid1D>, xs: &[f64]) -> Result<Vec<f64>> {
    let coeffs = fourier_coefficients(nv)?;
    xs.iter().map(|&x| fourier_eval_coeffs(nv.grid(), &coeffs, x)).collect()
}

fn fourier_coefficients(nv: &NodeValues<'_, Grid1D>) -> Result<Vec<Complex64>> {
    if nv.grid().basis() != Basis::Fourier {
        return Err(Error::InvalidArgument("fourier_eval needs a Fourier grid".into()));
    }
    let n = nv.values().len() as f64;
    Ok(fft_real(nv.values())?.into_values().into_iter().map(|c| c / n).collect())
}

fn fourier_eval_coeffs(grid: &Grid1D, coeffs: &[Complex64], x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("query point"));
    }
    let t = wrap(grid.to_canonical_unchecked(x));
    let n = coeffs.len();
    let mut acc = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        if 2 * k == n {
            acc += c.re * (0.5 * n as f64 * t).cos();
            continue;
        }
        let freq = if 2 * k < n { k as f64 } else { k as f64 - n as f64 };
        acc += (c * Complex64::from_polar(1.0, freq * t)).re;
    }
    Ok(acc)
}

/// 1-D evaluation dispatching on the basis.
pub fn eval_1d(nv: &NodeValues<'_, Grid1D>, x: f64) -> Result<f64> {
    match nv.grid().basis() {
        Basis::Chebyshev => bary_eval(nv, x),
        Basis::Fourier => cardinal_weights(nv.grid(), x).map(|w| w.dot(nv.values())),
    }
}

/// Per-axis cardinal weights for a multidimensional point.
pub fn point_weights(grid: &TensorGrid, point: &[f64]) -> Result<Vec<AxisWeights>> {
    if point.len() != grid.ndim() {
        return Err(Error::DimensionMismatch { expected: grid.ndim(), got: point.len() });
    }
    grid.axes().iter().zip(point).map(|(ax, &x)| cardinal_weights(ax, x)).collect()
}

/// Contract row-major `data` against one weight vector per axis.
pub(crate) fn contract(data: &[f64], weights: &[AxisWeights], shape: &[usize]) -> f64 {
    match weights.split_first() {
        None => data[0],
        Some((w, rest)) => {
            let stride = data.len() / shape[0];
            match w {
                AxisWeights::Node(i) => contract(&data[i * stride..(i + 1) * stride], rest, &shape[1..]),
                AxisWeights::Dense(ws) => {
                    if rest.is_empty() {
                        return ws.iter().zip(data).map(|(a, b)| a * b).sum();
                    }
                    ws.iter()
                        .enumerate()
                        .filter(|(_, c)| **c != 0.0)
                        .map(|(i, c)| c * contract(&data[i * stride..(i + 1) * stride], rest, &shape[1..]))
                        .sum()
                }
            }
        }
    }
}

/// Transpose of [`contract`]: `out += coef · (w_0 ⊗ w_1 ⊗ …)`.
pub(crate) fn scatter(out: &mut [f64], weights: &[AxisWeights], shape: &[usize], coef: f64) {
    match weights.split_first() {
        None => out[0] += coef,
        Some((w, rest)) => {
            let stride = out.len() / shape[0];
            match w {
                AxisWeights::Node(i) => scatter(&mut out[i * stride..(i + 1) * stride], rest, &shape[1..], coef),
                AxisWeights::Dense(ws) if rest.is_empty() => {
                    for (o, c) in out.iter_mut().zip(ws) {
                        *o += coef * c;
                    }
                }
                AxisWeights::Dense(ws) => {
                    for (i, c) in ws.iter().enumerate() {
                        if *c != 0.0 {
                            scatter(&mut out[i * stride..(i + 1) * stride], rest, &shape[1..], coef * c);
                        }
                    }
                }
            }
        }
    }
}

/// Tensor-product evaluation at one point.
pub fn tensor_eval(nv: &NodeValues<'_, TensorGrid>, point: &[f64]) -> Result<f64> {
    let w = point_weights(nv.grid(), point)?;
    Ok(contract(nv.values(), &w, &nv.grid().shape()))
}

pub fn tensor_eval_batch(nv: &NodeValues<'_, TensorGrid>, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let ev = PointEvaluator::new(nv.grid(), points)?;
    Ok(ev.apply(nv.values()))
}

/// A batch of point-evaluation functionals on a tensor grid, stored as
/// per-axis cardinal weights.
#[derive(Debug, Clone)]
pub struct PointEvaluator {
    shape: Vec<usize>,
    weights: Vec<Vec<AxisWeights>>,
    /// Dense per-axis weights `(W0, W0ᵀ, W1)` for two-axis grids.
    planar: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)>,
}

/// Largest number of stored entries for the dense two-axis evaluator.
const PLANAR_MAX_ENTRIES: usize = 1 << 22;

impl PointEvaluator {
    pub fn new(grid: &TensorGrid, points: &[Vec<f64>]) -> Result<Self> {
        let weights = points.iter().map(|p| point_weights(grid, p)).collect::<Result<Vec<Vec<AxisWeights>>>>()?;
        let shape = grid.shape();
        let planar = (shape.len() == 2 && weights.len() * (shape[0] + shape[1]) <= PLANAR_MAX_ENTRIES).then(|| {
            let rows = |axis: usize| {
                DMatrix::from_fn(weights.len(), shape[axis], |p, j| match &weights[p][axis] {
                    AxisWeights::Node(i) => f64::from(u8::from(*i == j)),
                    AxisWeights::Dense(w) => w[j],
                })
            };
            let w0 = rows(0);
            (w0.transpose(), w0, rows(1))
        });
        Ok(Self { shape, weights, planar })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn apply(&self, data: &[f64]) -> Vec<f64> {
        if let Some((_, w0, w1)) = &self.planar {
            let u = DMatrix::from_row_slice(self.shape[0], self.shape[1], data);
            let a = w0 * u;
            return a.row_iter().zip(w1.row_iter()).map(|(x, y)| x.dot(&y)).collect();
        }
        self.weights.iter().map(|w| contract(data, w, &self.shape)).collect()
    }

    /// `out += Eᵀ r`.
    pub fn apply_transpose_add(&self, r: &[f64], out: &mut [f64]) {
        if let Some((w0t, _, w1)) = &self.planar {
            let mut scaled = w1.clone();
            for (mut row, &c) in scaled.row_iter_mut().zip(r) {
                row *= c;
            }
            let m = w0t * scaled;
            for (i, o) in out.iter_mut().enumerate() {
                *o += m[(i / self.shape[1], i % self.shape[1])];
            }
            return;
        }
        for (w, &c) in self.weights.iter().zip(r) {
            if c != 0.0 {
                scatter(out, w, &self.shape, c);
            }
        }
    }
}

/// Dense `(xs.len()) × (grid.len())` matrix of cardinal weights.
pub fn evaluation_matrix(grid: &Grid1D, xs: &[f64]) -> Result<DMatrix<f64>> {
    let n = grid.len();
    let mut m = DMatrix::zeros(xs.len(), n);
    for (i, &x) in xs.iter().enumerate() {
        let w = cardinal_weights(grid, x)?.to_dense(n);
        for (j, v) in w.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::l2re;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cheb(n: usize) -> Grid1D {
        Grid1D::chebyshev(n, -1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_reproduced() {
        let g = cheb(9);
        let v = vec![3.5; 10];
        let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
        for x in [-1.0, -0.33, 0.0, 0.71, 1.0] {
            assert!((bary_eval(&nv, x).unwrap() - 3.5).abs() < 1e-14);
        }
        let g = Grid1D::fourier(8, 0.0, 2.0 * PI).unwrap();
        let v = vec![-2.0; 8];
        let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
        for x in [0.1, 1.0, 5.0, 7.0] {
            assert!((fourier_eval(&nv, x).unwrap() + 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_reproduced() {
        for n in 1..6 {
            let g = cheb(n);
            let v = g.nodes().to_vec();
            let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
            assert!((bary_eval(&nv, 0.37).unwrap() - 0.37).abs() < 1e-14);
        }
    }

    #[test]
    fn node_hits_are_bitwise() {
        let g = Grid1D::chebyshev(13, 0.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v: Vec<f64> = (0..14).map(|_| rng.random()).collect();
        let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
        for (j, &x) in g.nodes().iter().enumerate() {
            assert_eq!(bary_eval(&nv, x).unwrap(), v[j]);
        }
    }

    #[test]
    fn sin4x_spectral_accuracy() {
        let g = cheb(40);
        let v: Vec<f64> = g.nodes().iter().map(|x| (4.0 * x).sin()).collect();
        let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
        let xs: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
        let pred = bary_eval_batch(&nv, &xs).unwrap();
        let truth: Vec<f64> = xs.iter().map(|x| (4.0 * x).sin()).collect();
        assert!(l2re(&pred, &truth).unwrap() <= 1e-11);
    }

    #[test]
    fn polynomial_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 8, 15, 20] {
            let g = cheb(n);
            let coef: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = |x: f64| coef.iter().rev().fold(0.0, |acc, c| acc * x + c);
            let v: Vec<f64> = g.nodes().iter().map(|&x| p(x)).collect();
            let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
            for _ in 0..100 {
                let x = rng.random_range(-1.0..1.0);
                assert!((bary_eval(&nv, x).unwrap() - p(x)).abs() <= 1e-12 * vmax.max(1.0));
            }
        }
    }

    #[test]
    fn spectral_convergence_sin4x() {
        let xs: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
        let truth: Vec<f64> = xs.iter().map(|x| (4.0 * x).sin()).collect();
        let errs: Vec<f64> = (8..=32)
            .step_by(2)
            .map(|n| {
                let g = cheb(n);
                let v: Vec<f64> = g.nodes().iter().map(|x| (4.0 * x).sin()).collect();
                let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
                l2re(&bary_eval_batch(&nv, &xs).unwrap(), &truth).unwrap().max(1e-13)
            })
            .collect();
        // Stop at the first point that hits the floor.
        let end = errs.iter().position(|&e| e <= 1e-13).unwrap_or(errs.len() - 1);
        let decades = errs[0].log10() - errs[end].log10();
        assert!(decades / end as f64 >= 0.3, "{errs:?}");
    }

    #[test]
    fn lebesgue_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2, 4, 8, 16, 32, 64] {
            let g = cheb(n);
            let v: Vec<f64> = (0..=n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
            let sup =
                (0..2000).map(|i| bary_eval(&nv, -1.0 + 2.0 * i as f64 / 1999.0).unwrap().abs()).fold(0.0, f64::max);
            assert!(sup <= 2.0 + 2.0 / PI * ((n + 1) as f64).ln());
        }
    }

    #[test]
    fn fourier_band_limited() {
        let g = Grid1D::fourier(8, 0.0, 2.0 * PI).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
        assert!((fourier_eval(&nv, PI / 3.0).unwrap() - (PI / 3.0).sin()).abs() < 1e-13);

        let g = Grid1D::fourier(16, 0.0, 2.0 * PI).unwrap();
        let f = |x: f64| (3.0 * x).sin() + x.cos();
        let v: Vec<f64> = g.nodes().iter().map(|&x| f(x)).collect();
        let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let got = fourier_eval_batch(&nv, &xs).unwrap();
        for (x, y) in xs.iter().zip(got) {
            assert!((y - f(*x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn fourier_cardinal_matches_fft_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in [4, 7, 16, 33, 80] {
            let g = Grid1D::fourier(n, -1.0, 3.0).unwrap();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
            for _ in 0..20 {
                let x = rng.random_range(-1.0..3.0);
                let a = fourier_eval(&nv, x).unwrap();
                let b = cardinal_weights(&g, x).unwrap().dot(&v);
                assert!((a - b).abs() < 1e-12, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let g = cheb(4);
        assert!(NodeValues::<Grid1D>::new(&g, &[1.0; 4]).is_err());
        assert!(NodeValues::<Grid1D>::new(&g, &[1.0, 2.0, f64::NAN, 0.0, 0.0]).is_err());
        let v = [0.0; 5];
        let nv = NodeValues::<Grid1D>::new(&g, &v).unwrap();
        assert!(matches!(bary_eval(&nv, 2.0), Err(Error::Domain { .. })));
        assert!(bary_eval(&nv, f64::INFINITY).is_err());
    }

    fn grid2(a: Grid1D, b: Grid1D) -> TensorGrid {
        TensorGrid::new(vec![a, b]).unwrap()
    }

    #[test]
    fn tensor_examples() {
        let g = grid2(cheb(4), cheb(4));
        let ones = vec![1.0; 25];
        let nv = NodeValues::<TensorGrid>::new(&g, &ones).unwrap();
        assert!((tensor_eval(&nv, &[0.3, -0.8]).unwrap() - 1.0).abs() < 1e-14);

        let v: Vec<f64> = g.node_points().iter().map(|p| p[0] * p[1]).collect();
        let nv = NodeValues::<TensorGrid>::new(&g, &v).unwrap();
        assert!((tensor_eval(&nv, &[0.5, -0.25]).unwrap() + 0.125).abs() < 1e-14);
        assert!(tensor_eval(&nv, &[0.5]).is_err());
    }

    #[test]
    fn tensor_convection_solution() {
        let g = grid2(Grid1D::chebyshev(81, 0.0, 1.0).unwrap(), Grid1D::fourier(80, 0.0, 2.0 * PI).unwrap());
        let f = |t: f64, x: f64| (x - 40.0 * t).sin();
        let v: Vec<f64> = g.node_points().iter().map(|p| f(p[0], p[1])).collect();
        let nv = NodeValues::<TensorGrid>::new(&g, &v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<Vec<f64>> =
            (0..500).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..2.0 * PI)]).collect();
        let pred = tensor_eval_batch(&nv, &pts).unwrap();
        let truth: Vec<f64> = pts.iter().map(|p| f(p[0], p[1])).collect();
        assert!(l2re(&pred, &truth).unwrap() <= 1e-9);
    }

    #[test]
    fn evaluator_transpose_is_adjoint() {
        let g = grid2(Grid1D::chebyshev(6, 0.0, 1.0).unwrap(), Grid1D::fourier(6, 0.0, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pts: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                if i == 0 {
                    g.node_points()[5].clone()
                } else {
                    vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]
                }
            })
            .collect();
        let ev = PointEvaluator::new(&g, &pts).unwrap();
        let u: Vec<f64> = (0..g.size()).map(|_| rng.random()).collect();
        let r: Vec<f64> = (0..pts.len()).map(|_| rng.random()).collect();
        let eu = ev.apply(&u);
        let mut etr = vec![0.0; g.size()];
        ev.apply_transpose_add(&r, &mut etr);
        let lhs: f64 = eu.iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = etr.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
