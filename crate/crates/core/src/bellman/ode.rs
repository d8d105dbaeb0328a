use nalgebra::{DMatrix, DVector};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::gfun::{hu_driver, maximize_g, GContext};
use crate::model::{eval_conjugate, JointCharacteristics, PowerUtilitySpec};

/// Number of RK4 steps on [0, T].
pub const ODE_STEPS: usize = 2000;

/// Function table on an increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OdePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl OdePath {
    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("nonempty path")
    }

    /// Linear interpolation, clamped to the grid.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let j = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        self.values[j] * (1.0 - w) + self.values[j + 1] * w
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> OdePath {
        OdePath { times: self.times.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

fn rk4_backward(horizon: f64, terminal: f64, rhs: impl Fn(f64, f64) -> Result<f64>) -> Result<OdePath> {
    let h = horizon / ODE_STEPS as f64;
    let mut values = vec![0.0; ODE_STEPS + 1];
    values[ODE_STEPS] = terminal;
    for n in (0..ODE_STEPS).rev() {
        let t = (n + 1) as f64 * h;
        let y = values[n + 1];
        let k1 = rhs(t, y)?;
        let k2 = rhs(t - 0.5 * h, y - 0.5 * h * k1)?;
        let k3 = rhs(t - 0.5 * h, y - 0.5 * h * k2)?;
        let k4 = rhs(t - h, y - h * k3)?;
        values[n] = y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !values[n].is_finite() {
            return Err(Error::Numerical(format!("solution left the finite range at t = {}", t - h)));
        }
    }
    let times = (0..=ODE_STEPS).map(|n| n as f64 * h).collect();
    Ok(OdePath { times, values })
}

/// Deterministic opportunity process for constant characteristics:
/// L' = -p (U*(L) + L g0) with consumption, L' = -p L g0 without; L(T) = D_T.
pub fn solve_levy_ode(spec: &PowerUtilitySpec, chars: &JointCharacteristics, c: &ConstraintSet) -> Result<OdePath> {
    let mut returns = chars.clone();
    returns.c_rl = DVector::zeros(chars.dim());
    returns.c_l = None;
    returns.atoms.retain(|a| a.x.iter().any(|v| *v != 0.0));
    returns.atoms.iter_mut().for_each(|a| a.x_l = 0.0);
    let (_, g0) = maximize_g(&GContext::new(1.0, returns, spec.p(), c.clone())?)?;
    let p = spec.p();
    rk4_backward(spec.horizon(), spec.terminal_weight(), |t, l| {
        if !(l > 0.0) {
            return Err(Error::Numerical(format!("opportunity process reached {l} at t = {t}")));
        }
        let consume = if spec.consumes() { eval_conjugate(spec, t, l)? } else { 0.0 };
        Ok(-p * (consume + l * g0))
    })
}

/// Y = log L for deterministic market price of risk theta(t): Y' = f(Y, 0, 0), Y(T) = log D_T.
pub fn solve_deterministic_ito<F>(
    spec: &PowerUtilitySpec,
    theta: F,
    sigma: &DMatrix<f64>,
    c: &ConstraintSet,
) -> Result<OdePath>
where
    F: Fn(f64) -> DVector<f64>,
{
    let m = sigma.ncols();
    let zero = DVector::zeros(m);
    rk4_backward(spec.horizon(), spec.terminal_weight().ln(), |t, y| {
        let th = theta(t);
        if th.len() != m {
            return Err(Error::Shape(format!("theta has length {} but the factor has {m} columns", th.len())));
        }
        hu_driver(y, &zero, &th, sigma, c, spec, spec.weight_at(t))
    })
}
