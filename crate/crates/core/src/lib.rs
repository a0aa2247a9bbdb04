//! Physics-informed PDE solving with explicit barycentric spectral interpolants.
//!
//! A model is the vector of solution values on a tensor grid of
//! Chebyshev-Gauss-Lobatto and/or equispaced Fourier nodes. Evaluation uses
//! barycentric (or trigonometric) interpolation, differentiation uses
//! spectral or finite-difference operators on the node values, and the
//! physics-informed least-squares loss is minimized with gradient descent,
//! Adam, or a Nyström-preconditioned Newton-CG method.
//!
//! Module map:
//!
//! * [`grid`]: nodes, barycentric and quadrature weights, affine maps.
//! * [`transforms`]: FFT wrappers and the even extension.
//! * [`interp`]: barycentric, trigonometric and tensor-product evaluation.
//! * [`diff`]: spectral, Fourier-matrix and Fornberg derivative operators.
//! * [`model`]: the trainable node-value model and checkpoints.
//! * [`pde`]: benchmark problems, collocation, residuals and the loss.
//! * [`optim`]: GD, Adam, NNCG and multi-stage training.
//! * [`analysis`]: error metrics and conditioning / mis-specification probes.
//! * [`cli`]: config files, reports and the experiment runner.

pub mod analysis;
pub mod cli;
pub mod diff;
pub mod error;
pub mod grid;
pub mod interp;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod pde;
pub mod report;
pub mod transforms;

pub use error::{Error, Result};
