//! The local objective g, its directional derivative and maximizers, and the
//! drivers of the continuous-time Bellman equation.

mod maximize;
#[cfg(test)]
mod tests;

pub use maximize::{maximize_g, maximize_g_from, maximize_g_with, MaxOptions};

use nalgebra::{DMatrix, DVector};

use crate::constraints::{sigma_image, ConstraintSet, Membership, NaturalConstraints};
use crate::error::{Error, Result};
use crate::model::{JointCharacteristics, PowerUtilitySpec};

/// Data of g at one state: the left limit of the opportunity process and the joint characteristics.
#[derive(Debug, Clone, PartialEq)]
pub struct GContext {
    ell_minus: f64,
    chars: JointCharacteristics,
    p: f64,
    constraint: ConstraintSet,
    natural: NaturalConstraints,
}

impl GContext {
    pub fn new(ell_minus: f64, chars: JointCharacteristics, p: f64, constraint: ConstraintSet) -> Result<Self> {
        if !(ell_minus > 0.0 && ell_minus.is_finite()) {
            return Err(Error::Domain(format!("left limit must be positive, got {ell_minus}")));
        }
        if !(p < 1.0 && p != 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!("exponent must lie in (-inf, 0) or (0, 1), got {p}")));
        }
        chars.validate()?;
        if constraint.dim() != chars.dim() {
            return Err(Error::Shape(format!(
                "constraint has dimension {} but returns have {}",
                constraint.dim(),
                chars.dim()
            )));
        }
        if let Some(a) = chars.active_atoms().find(|a| ell_minus + a.x_l <= 0.0) {
            return Err(Error::Domain(format!("companion jump {} sends {ell_minus} to a nonpositive value", a.x_l)));
        }
        let natural = NaturalConstraints::from_chars(&chars);
        Ok(Self { ell_minus, chars, p, constraint, natural })
    }

    pub fn ell_minus(&self) -> f64 {
        self.ell_minus
    }

    pub fn chars(&self) -> &JointCharacteristics {
        &self.chars
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn beta(&self) -> f64 {
        1.0 / (1.0 - self.p)
    }

    pub fn constraint(&self) -> &ConstraintSet {
        &self.constraint
    }

    pub fn natural(&self) -> &NaturalConstraints {
        &self.natural
    }

    pub fn dim(&self) -> usize {
        self.chars.dim()
    }

    pub fn with_constraint(&self, constraint: ConstraintSet) -> Result<Self> {
        Self::new(self.ell_minus, self.chars.clone(), self.p, constraint)
    }

    fn check_dim(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::Shape(format!("portfolio has length {} but d = {}", y.len(), self.dim())));
        }
        Ok(())
    }

    fn check_domain(&self, y: &DVector<f64>) -> Result<()> {
        self.check_dim(y)?;
        if !self.natural.contains(y, false) {
            return Err(Error::Domain(format!(
                "portfolio outside the natural constraints (margin {})",
                self.natural.margin(y)
            )));
        }
        Ok(())
    }

    /// Linear coefficient b + cRL / L.
    pub fn drift_term(&self) -> DVector<f64> {
        &self.chars.b_r + &self.chars.c_rl / self.ell_minus
    }

    /// Gradient of g at y; `None` when some atom sits on the boundary of C0.
    pub fn gradient(&self, y: &DVector<f64>) -> Option<DVector<f64>> {
        let l = self.ell_minus;
        let p = self.p;
        let mut grad = self.drift_term() * l + &self.chars.c_r * y * (l * (p - 1.0));
        for a in self.chars.active_atoms() {
            let m = 1.0 + y.dot(&a.x);
            if m <= 0.0 {
                return None;
            }
            let h = self.chars.cutoff.apply(&a.x);
            grad += (&h * a.x_l + (&a.x * m.powf(p - 1.0) - h) * (l + a.x_l)) * a.weight;
        }
        Some(grad)
    }

    /// Hessian of g at y (negative semidefinite).
    pub fn hessian(&self, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        let l = self.ell_minus;
        let p = self.p;
        let mut h = &self.chars.c_r * (l * (p - 1.0));
        for a in self.chars.active_atoms() {
            let m = 1.0 + y.dot(&a.x);
            if m <= 0.0 {
                return None;
            }
            h += &a.x * a.x.transpose() * (a.weight * (l + a.x_l) * (p - 1.0) * m.powf(p - 2.0));
        }
        Some(h)
    }

    /// g restricted to C0, no domain check.
    pub(crate) fn value_unchecked(&self, y: &DVector<f64>) -> f64 {
        let l = self.ell_minus;
        let p = self.p;
        let c = &self.chars;
        let mut g = l * y.dot(&(self.drift_term() + &c.c_r * y * ((p - 1.0) / 2.0)));
        for a in c.active_atoms() {
            let m = (1.0 + y.dot(&a.x)).max(0.0);
            if m == 0.0 && p < 0.0 {
                return f64::NEG_INFINITY;
            }
            let yh = y.dot(&c.cutoff.apply(&a.x));
            let power = if m == 0.0 { -1.0 / p } else { (m.powf(p) - 1.0) / p };
            g += a.weight * (a.x_l * yh + (l + a.x_l) * (power - yh));
        }
        g
    }
}

/// U(k) - L k: the consumption part of the drift of Z.
pub fn eval_f(ctx: &GContext, spec: &PowerUtilitySpec, t: f64, k: f64) -> Result<f64> {
    if !(k >= 0.0) {
        return Err(Error::Domain(format!("consumption rate must be nonnegative, got {k}")));
    }
    if k == 0.0 {
        return Ok(if spec.p() < 0.0 { f64::NEG_INFINITY } else { 0.0 });
    }
    Ok(spec.weight_at(t) * k.powf(spec.p()) / spec.p() - ctx.ell_minus * k)
}

/// Optimal propensity to consume (D_t / ell)^beta.
pub fn kappa_star(spec: &PowerUtilitySpec, t: f64, ell: f64) -> Result<f64> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::Domain(format!("opportunity value must be positive, got {ell}")));
    }
    Ok((spec.weight_at(t) / ell).powf(spec.beta()))
}

/// g(y); -inf when p < 0 and y puts some atom on the boundary of C0.
pub fn eval_g(ctx: &GContext, y: &DVector<f64>) -> Result<f64> {
    ctx.check_domain(y)?;
    Ok(ctx.value_unchecked(y))
}

/// Directional derivative of g at `y_check` toward `y`.
pub fn directional_g(ctx: &GContext, y: &DVector<f64>, y_check: &DVector<f64>) -> Result<f64> {
    ctx.check_domain(y)?;
    ctx.check_dim(y_check)?;
    if !ctx.natural.contains(y_check, true) {
        return Err(Error::Domain("reference portfolio must lie in the strict natural constraints".into()));
    }
    let grad = ctx.gradient(y_check).expect("strict interior");
    Ok(grad.dot(&(y - y_check)))
}

/// Continuous driver: half L times p(1-p) d^2(sigma' beta Psi) + (p/(p-1)) |sigma' Psi|^2, Psi = lambda + phi / L.
pub fn continuous_driver_f(
    ell_minus: f64,
    phi: &DVector<f64>,
    sigma: &DMatrix<f64>,
    lambda: &DVector<f64>,
    c: &ConstraintSet,
    p: f64,
) -> Result<f64> {
    let beta = 1.0 / (1.0 - p);
    let psi = lambda + phi / ell_minus;
    let w = sigma.transpose() * &psi;
    let image = sigma_image(sigma, c)?;
    let d2 = image.distance_sq(&(&w * beta));
    Ok(0.5 * ell_minus * (p * (1.0 - p) * d2 + p / (p - 1.0) * w.norm_squared()))
}

/// Cone form of the continuous driver: p / (2(p-1)) L |proj(sigma' Psi)|^2.
pub fn cone_driver_f(
    ell_minus: f64,
    phi: &DVector<f64>,
    sigma: &DMatrix<f64>,
    lambda: &DVector<f64>,
    c: &ConstraintSet,
    p: f64,
) -> Result<f64> {
    if !c.is_cone() {
        return Err(Error::Unsupported("cone driver needs a cone".into()));
    }
    let psi = lambda + phi / ell_minus;
    let w = sigma.transpose() * &psi;
    let proj = &sigma_image(sigma, c)?.project(&w)[0];
    Ok(p / (2.0 * (p - 1.0)) * ell_minus * proj.norm_squared())
}

/// Quadratic driver of the log opportunity process in a continuous Ito market.
pub fn hu_driver(
    y: f64,
    z: &DVector<f64>,
    theta: &DVector<f64>,
    sigma: &DMatrix<f64>,
    c: &ConstraintSet,
    spec: &PowerUtilitySpec,
    d_t: f64,
) -> Result<f64> {
    hu_driver_split(y, z, &DVector::zeros(z.len()), theta, sigma, c, spec, d_t)
}

/// Driver with the martingale part split into a traded part `z` and an orthogonal part `z_perp`.
#[allow(clippy::too_many_arguments)]
pub fn hu_driver_split(
    y: f64,
    z: &DVector<f64>,
    z_perp: &DVector<f64>,
    theta: &DVector<f64>,
    sigma: &DMatrix<f64>,
    c: &ConstraintSet,
    spec: &PowerUtilitySpec,
    d_t: f64,
) -> Result<f64> {
    let p = spec.p();
    let (q, beta) = (spec.q(), spec.beta());
    let tz = theta + z;
    let d2 = sigma_image(sigma, c)?.distance_sq(&(&tz * beta));
    let consume = if spec.consumes() { (p - 1.0) * d_t.powf(beta) * ((q - 1.0) * y).exp() } else { 0.0 };
    Ok(0.5 * p * (1.0 - p) * d2 + 0.5 * q * tz.norm_squared() + consume
        - 0.5 * z.norm_squared()
        - 0.5 * z_perp.norm_squared())
}

/// Growth bound (2|q| + 1)(|theta|^2 + |z|^2) + |p-1| D^beta e^{(q-1)Y}.
pub fn hu_driver_bound(y: f64, z: &DVector<f64>, theta: &DVector<f64>, spec: &PowerUtilitySpec, d_t: f64) -> f64 {
    let quad = (2.0 * spec.q().abs() + 1.0) * (theta.norm_squared() + z.norm_squared());
    let consume =
        if spec.consumes() { (1.0 - spec.p()) * d_t.powf(spec.beta()) * ((spec.q() - 1.0) * y).exp() } else { 0.0 };
    quad + consume
}
