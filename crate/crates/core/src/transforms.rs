//! FFT primitives used by the spectral operators.
//!
//! Convention: the forward transform is unnormalized,
//! `X_k = Σ_n x_n e^{-2πikn/L}`, and the inverse carries the `1/L` factor.
//! Arbitrary lengths are supported (rustfft falls back to Bluestein/Rader for
//! awkward sizes), which matters for grids like 81, 161 or 321 points.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((len, inverse))
            .or_insert_with(|| if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) })
            .clone()
    })
}

/// Complex spectrum of a length-`L` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumBuffer {
    values: Vec<Complex64>,
}

impl SpectrumBuffer {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
}

/// Unnormalized forward DFT.
pub fn fft(signal: &[Complex64]) -> Result<SpectrumBuffer> {
    if signal.is_empty() {
        return invalid("fft of an empty signal");
    }
    let mut buf = signal.to_vec();
    plan(buf.len(), false).process(&mut buf);
    Ok(SpectrumBuffer::new(buf))
}

/// Forward DFT of real data.
pub fn fft_real(signal: &[f64]) -> Result<SpectrumBuffer> {
    let c: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft(&c)
}

/// Inverse DFT with `1/L` normalization.
pub fn ifft(spectrum: &SpectrumBuffer) -> Result<Vec<Complex64>> {
    if spectrum.is_empty() {
        return invalid("ifft of an empty spectrum");
    }
    let mut buf = spectrum.values.clone();
    plan(buf.len(), true).process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    for v in &mut buf {
        *v *= scale;
    }
    Ok(buf)
}

/// Even extension `[u_0, …, u_N, u_{N-1}, …, u_1]` of length `2N`.
pub fn even_extension(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return invalid("even extension needs at least two values");
    }
    let n = values.len() - 1;
    let mut v = Vec::with_capacity(2 * n);
    v.extend_from_slice(values);
    v.extend(values[1..n].iter().rev());
    Ok(v)
}
