use nalgebra::{DMatrix, DVector};

use super::ConstraintSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Symmetric PSD square root of the covariance.
pub fn sigma_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::psd_sqrt(c)
}

/// The image sigma'K in R^m of a constraint set K in R^d, for sigma of shape d x m.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaImage {
    sigma: DMatrix<f64>,
    base: ConstraintSet,
    metric: DMatrix<f64>,
}

pub fn sigma_image(sigma: &DMatrix<f64>, k: &ConstraintSet) -> Result<SigmaImage> {
    if sigma.nrows() != k.dim() {
        return Err(Error::Invalid(format!(
            "factor has {} rows but the set lives in dimension {}",
            sigma.nrows(),
            k.dim()
        )));
    }
    Ok(SigmaImage { sigma: sigma.clone(), base: k.clone(), metric: sigma * sigma.transpose() })
}

impl SigmaImage {
    pub fn dim(&self) -> usize {
        self.sigma.ncols()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn base(&self) -> &ConstraintSet {
        &self.base
    }

    /// Points y in K whose images sigma'y are nearest to w.
    pub fn nearest_preimages(&self, w: &DVector<f64>) -> Vec<DVector<f64>> {
        let st = self.sigma.transpose();
        let (y_w, _) = linalg::min_norm_solve(&st, w);
        self.base.metric_project(&y_w, &self.metric)
    }

    pub fn project(&self, w: &DVector<f64>) -> Vec<DVector<f64>> {
        if let Ok(k) = self.explicit() {
            return k.project(w);
        }
        let st = self.sigma.transpose();
        let mut out: Vec<DVector<f64>> = Vec::new();
        for y in self.nearest_preimages(w) {
            let z = &st * y;
            if !out.iter().any(|o| (o - &z).amax() <= 1e-14) {
                out.push(z);
            }
        }
        out
    }

    pub fn distance_sq(&self, w: &DVector<f64>) -> f64 {
        let z = &self.project(w)[0];
        (w - z).norm_squared()
    }

    /// Explicit constraint set in R^m where the image has a closed-form description.
    pub fn explicit(&self) -> Result<ConstraintSet> {
        let (d, m) = (self.sigma.nrows(), self.sigma.ncols());
        let st = self.sigma.transpose();
        let diagonal = d == m && (0..d).all(|i| (0..d).all(|j| i == j || self.sigma[(i, j)] == 0.0));
        match &self.base {
            ConstraintSet::Full { .. } => {
                let comp = linalg::kernel_basis(&self.sigma, m);
                if comp.is_empty() {
                    Ok(ConstraintSet::Full { dim: m })
                } else {
                    let rows = DMatrix::from_fn(2 * comp.len(), m, |r, c| {
                        let v = &comp[r % comp.len()];
                        if r < comp.len() {
                            v[c]
                        } else {
                            -v[c]
                        }
                    });
                    Ok(ConstraintSet::Cone { rows })
                }
            }
            ConstraintSet::Box { lo, hi } if diagonal => {
                let mut nlo = DVector::zeros(d);
                let mut nhi = DVector::zeros(d);
                for j in 0..d {
                    let s = self.sigma[(j, j)];
                    let (a, b) = if s == 0.0 { (0.0, 0.0) } else { (lo[j] * s, hi[j] * s) };
                    nlo[j] = a.min(b);
                    nhi[j] = a.max(b);
                }
                Ok(ConstraintSet::Box { lo: nlo, hi: nhi })
            }
            ConstraintSet::Finite { points } => {
                Ok(ConstraintSet::Finite { points: points.iter().map(|p| &st * p).collect() })
            }
            ConstraintSet::ScaledStar { points } => {
                Ok(ConstraintSet::ScaledStar { points: points.iter().map(|p| &st * p).collect() })
            }
            ConstraintSet::Polyhedron { .. } | ConstraintSet::Cone { .. } | ConstraintSet::Box { .. } if d == m => {
                let inv = st
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::NotRepresentable("polyhedral image under a singular factor".into()))?;
                let (a, b) = self.base.polyhedral().expect("polyhedral variant");
                let rows = a * inv;
                Ok(if self.base.is_cone() {
                    ConstraintSet::Cone { rows }
                } else {
                    ConstraintSet::Polyhedron { rows, bounds: b }
                })
            }
            other => Err(Error::NotRepresentable(format!(
                "no explicit image for {} under a {d}x{m} factor",
                variant_name(other)
            ))),
        }
    }
}

pub(crate) fn variant_name(k: &ConstraintSet) -> &'static str {
    match k {
        ConstraintSet::Full { .. } => "full",
        ConstraintSet::Box { .. } => "box",
        ConstraintSet::Ball { .. } => "ball",
        ConstraintSet::Polyhedron { .. } => "polyhedron",
        ConstraintSet::Cone { .. } => "cone",
        ConstraintSet::Finite { .. } => "finite",
        ConstraintSet::ScaledStar { .. } => "scaled_star",
    }
}
