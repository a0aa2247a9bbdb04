use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{check_finite_vec, HvpMode, Objective, OptimizerInternals, TrainOptions, TrainState};
use crate::error::{invalid, Result};
use crate::linalg::power_iteration;

/// Gradient-descent step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `1/λ_max` of the loss Hessian (quadratic losses only).
    Auto,
    Fixed(f64),
}

impl Serialize for StepSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSize::Auto => s.serialize_str("auto"),
            StepSize::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(StepSize::Fixed(v)),
            Repr::Text(s) if s == "auto" => Ok(StepSize::Auto),
            Repr::Text(s) => {
                Err(serde::de::Error::custom(format!("step size must be a number or \"auto\", got {s:?}")))
            }
        }
    }
}

const POWER_ITERS: usize = 100;
const POWER_TOL: f64 = 1e-10;

/// Plain gradient descent `θ ← θ − η ∇L`.
pub fn run_gd(
    obj: &dyn Objective,
    theta: Vec<f64>,
    steps: usize,
    step: StepSize,
    opts: &TrainOptions,
) -> Result<TrainState> {
    let eta = match step {
        StepSize::Fixed(e) if e.is_finite() && e >= 0.0 => e,
        StepSize::Fixed(e) => return invalid(format!("invalid step size {e}")),
        StepSize::Auto => {
            if !obj.is_quadratic() {
                return invalid("automatic step size requires a quadratic loss");
            }
            let h = obj.hessian_at(&theta, HvpMode::GaussNewton)?;
            let lam = power_iteration(obj.dim(), |v| h(v), POWER_ITERS, POWER_TOL, None)?;
            if lam <= 0.0 {
                return invalid("loss Hessian is zero; no step size can be derived");
            }
            1.0 / lam
        }
    };
    let mut st = TrainState::start(obj, theta, opts)?;
    st.internals = OptimizerInternals::Gd { step: eta };
    for _ in 0..steps {
        let t0 = Instant::now();
        let (_, g) = obj.loss_grad(&st.theta)?;
        for (x, gi) in st.theta.iter_mut().zip(&g) {
            *x -= eta * gi;
        }
        check_finite_vec(&st.theta, "gradient descent update")?;
        let loss = obj.loss(&st.theta)?;
        if st.record(obj, opts, loss, t0, eta)? {
            break;
        }
    }
    st.finish(obj, opts, eta)?;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::LeastSquaresObjective;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn identity_gram_converges_in_one_step() {
        let a = DMatrix::<f64>::identity(5, 5);
        let y = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5, 0.0]);
        let obj = LeastSquaresObjective::new(a, y.clone()).unwrap();
        let st = run_gd(&obj, vec![0.0; 5], 1, StepSize::Auto, &TrainOptions::default()).unwrap();
        for (x, t) in st.theta.iter().zip(y.iter()) {
            assert!((x - t).abs() <= 1e-12);
        }
    }

    #[test]
    fn fixed_point_is_kept() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
        let star = [0.3, -0.7];
        let y = &a * DVector::from_row_slice(&star);
        let obj = LeastSquaresObjective::new(a, y).unwrap();
        let st = run_gd(&obj, star.to_vec(), 50, StepSize::Auto, &TrainOptions::default()).unwrap();
        assert_eq!(st.theta, star.to_vec());
        assert_eq!(st.loss_history.len(), 50);
    }

    #[test]
    fn step_size_parsing() {
        let s: StepSize = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(s, StepSize::Auto);
        let s: StepSize = serde_json::from_str("0.25").unwrap();
        assert_eq!(s, StepSize::Fixed(0.25));
        assert!(serde_json::from_str::<StepSize>("\"fast\"").is_err());
        assert_eq!(serde_json::to_string(&StepSize::Auto).unwrap(), "\"auto\"");
    }
}
