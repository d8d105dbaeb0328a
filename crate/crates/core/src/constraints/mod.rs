//! Constraint geometry: the portfolio set C, natural constraints, null investments,
//! projections and the representative-portfolio transform.

mod image;
mod qp;
mod transform;

pub use image::{sigma_factor, sigma_image, SigmaImage};
pub use transform::{polytope_vertices, representative_portfolio, transform_model, TransformedModel};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{JointCharacteristics, LatticeNode};

const MEMBER_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;

/// Portfolio constraint set; always contains the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Full {
        dim: usize,
    },
    /// lo <= y <= hi componentwise; bounds may be infinite
    Box {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
    Ball {
        dim: usize,
        radius: f64,
    },
    /// rows y <= bounds
    Polyhedron {
        rows: DMatrix<f64>,
        bounds: DVector<f64>,
    },
    /// rows y <= 0
    Cone {
        rows: DMatrix<f64>,
    },
    Finite {
        points: Vec<DVector<f64>>,
    },
    /// union of the segments [0, v] over the listed points
    ScaledStar {
        points: Vec<DVector<f64>>,
    },
}

pub trait Membership {
    fn contains(&self, y: &DVector<f64>, strict: bool) -> bool;
}

pub fn membership<K: Membership>(k: &K, y: &DVector<f64>, strict: bool) -> bool {
    k.contains(y, strict)
}

impl ConstraintSet {
    pub fn full(dim: usize) -> Self {
        ConstraintSet::Full { dim }
    }

    pub fn zero(dim: usize) -> Self {
        ConstraintSet::Finite { points: vec![DVector::zeros(dim)] }
    }

    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(hi.iter()).any(|(l, h)| !(*l <= 0.0 && *h >= 0.0)) {
            return Err(Error::Invalid("box must contain the origin".into()));
        }
        Ok(ConstraintSet::Box { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(DVector::from_element(1, lo), DVector::from_element(1, hi))
    }

    /// Nonnegative orthant.
    pub fn orthant(dim: usize) -> Self {
        ConstraintSet::Cone { rows: -DMatrix::identity(dim, dim) }
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::Invalid("ball radius must be finite and nonnegative".into()));
        }
        Ok(ConstraintSet::Ball { dim, radius })
    }

    pub fn polyhedron(rows: DMatrix<f64>, bounds: DVector<f64>) -> Result<Self> {
        if rows.nrows() != bounds.len() || bounds.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::Invalid("polyhedron must contain the origin (bounds >= 0)".into()));
        }
        Ok(ConstraintSet::Polyhedron { rows, bounds })
    }

    pub fn cone(rows: DMatrix<f64>) -> Self {
        ConstraintSet::Cone { rows }
    }

    /// Finite set, augmented with the origin.
    pub fn finite(points: Vec<DVector<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).ok_or_else(|| Error::Invalid("finite set needs points".into()))?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Invalid("finite set points differ in dimension".into()));
        }
        let mut pts: Vec<DVector<f64>> = Vec::new();
        if !points.iter().any(|p| p.iter().all(|v| *v == 0.0)) {
            pts.push(DVector::zeros(dim));
        }
        for p in points {
            if !pts.contains(&p) {
                pts.push(p);
            }
        }
        Ok(ConstraintSet::Finite { points: pts })
    }

    pub fn scaled_star(points: Vec<DVector<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).ok_or_else(|| Error::Invalid("star set needs points".into()))?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Invalid("star set points differ in dimension".into()));
        }
        Ok(ConstraintSet::ScaledStar { points })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Full { dim } | ConstraintSet::Ball { dim, .. } => *dim,
            ConstraintSet::Box { lo, .. } => lo.len(),
            ConstraintSet::Polyhedron { rows, .. } | ConstraintSet::Cone { rows } => rows.ncols(),
            ConstraintSet::Finite { points } | ConstraintSet::ScaledStar { points } => points[0].len(),
        }
    }

    fn nonzero_points(points: &[DVector<f64>]) -> Vec<&DVector<f64>> {
        points.iter().filter(|p| p.iter().any(|v| *v != 0.0)).collect()
    }

    pub fn is_convex(&self) -> bool {
        match self {
            ConstraintSet::Finite { points } => Self::nonzero_points(points).is_empty(),
            ConstraintSet::ScaledStar { points } => {
                let nz = Self::nonzero_points(points);
                nz.iter().all(|v| {
                    let u = nz[0];
                    (v.dot(u) - v.norm() * u.norm()).abs() <= 1e-12 * v.norm() * u.norm()
                })
            }
            _ => true,
        }
    }

    /// Closed under positive scaling.
    pub fn is_cone(&self) -> bool {
        match self {
            ConstraintSet::Full { .. } | ConstraintSet::Cone { .. } => true,
            ConstraintSet::Box { lo, hi } => lo.iter().chain(hi.iter()).all(|v| *v == 0.0 || v.is_infinite()),
            ConstraintSet::Ball { radius, .. } => *radius == 0.0,
            ConstraintSet::Polyhedron { bounds, .. } => bounds.iter().all(|b| *b == 0.0),
            ConstraintSet::Finite { points } => Self::nonzero_points(points).is_empty(),
            ConstraintSet::ScaledStar { points } => Self::nonzero_points(points).is_empty(),
        }
    }

    /// Inequality form `rows y <= bounds` for polyhedral variants.
    pub fn polyhedral(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let d = self.dim();
        match self {
            ConstraintSet::Full { .. } => Some((DMatrix::zeros(0, d), DVector::zeros(0))),
            ConstraintSet::Box { lo, hi } => {
                let mut rows = Vec::new();
                let mut bounds = Vec::new();
                for j in 0..d {
                    if hi[j].is_finite() {
                        rows.push(linalg::unit(d, j));
                        bounds.push(hi[j]);
                    }
                    if lo[j].is_finite() {
                        rows.push(-linalg::unit(d, j));
                        bounds.push(-lo[j]);
                    }
                }
                Some(stack_rows(&rows, d, bounds))
            }
            ConstraintSet::Polyhedron { rows, bounds } => Some((rows.clone(), bounds.clone())),
            ConstraintSet::Cone { rows } => Some((rows.clone(), DVector::zeros(rows.nrows()))),
            ConstraintSet::Finite { points } if Self::nonzero_points(points).is_empty() => {
                let rows: Vec<DVector<f64>> = (0..d).flat_map(|j| [linalg::unit(d, j), -linalg::unit(d, j)]).collect();
                Some(stack_rows(&rows, d, vec![0.0; 2 * d]))
            }
            _ => None,
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        match self {
            ConstraintSet::Box { lo, hi } => vec![DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))],
            ConstraintSet::Ball { radius, .. } => {
                let n = x.norm();
                if n <= *radius {
                    vec![x.clone()]
                } else {
                    vec![x * (*radius / n)]
                }
            }
            _ => self.metric_project(x, &DMatrix::identity(x.len(), x.len())),
        }
    }

    /// Minimizers of (y-x)'H(y-x) over the set, H positive semidefinite.
    pub fn metric_project(&self, x: &DVector<f64>, h: &DMatrix<f64>) -> Vec<DVector<f64>> {
        let dist = |y: &DVector<f64>| {
            let r = y - x;
            r.dot(&(h * &r))
        };
        let ties = |cands: Vec<DVector<f64>>| -> Vec<DVector<f64>> {
            let vals: Vec<f64> = cands.iter().map(&dist).collect();
            let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut out: Vec<DVector<f64>> = Vec::new();
            for (c, v) in cands.into_iter().zip(vals) {
                if v <= best + TIE_TOL * (1.0 + best) && !out.iter().any(|o| (o - &c).amax() <= 1e-14) {
                    out.push(c);
                }
            }
            out
        };
        match self {
            ConstraintSet::Full { .. } => vec![x.clone()],
            ConstraintSet::Ball { radius, .. } => vec![qp::ball_projection(h, *radius, x)],
            ConstraintSet::Finite { points } => ties(points.clone()),
            ConstraintSet::ScaledStar { points } => {
                let mut cands = vec![DVector::zeros(x.len())];
                for v in points {
                    let hv = h * v;
                    let den = v.dot(&hv);
                    let eta = if den > 0.0 { (x.dot(&hv) / den).clamp(0.0, 1.0) } else { 0.0 };
                    cands.push(v * eta);
                }
                ties(cands)
            }
            _ => {
                let (a, b) = self.polyhedral().expect("polyhedral variant");
                vec![qp::polyhedral_projection(&a, &b, h, x)]
            }
        }
    }

    pub fn distance_sq(&self, x: &DVector<f64>) -> f64 {
        let p = &self.project(x)[0];
        (x - p).norm_squared()
    }

    /// {f y : y in C} for f > 0.
    pub fn scaled(&self, f: f64) -> ConstraintSet {
        match self {
            ConstraintSet::Full { .. } | ConstraintSet::Cone { .. } => self.clone(),
            ConstraintSet::Box { lo, hi } => ConstraintSet::Box { lo: lo * f, hi: hi * f },
            ConstraintSet::Ball { dim, radius } => ConstraintSet::Ball { dim: *dim, radius: radius * f },
            ConstraintSet::Polyhedron { rows, bounds } => {
                ConstraintSet::Polyhedron { rows: rows.clone(), bounds: bounds * f }
            }
            ConstraintSet::Finite { points } => {
                ConstraintSet::Finite { points: points.iter().map(|p| p * f).collect() }
            }
            ConstraintSet::ScaledStar { points } => {
                ConstraintSet::ScaledStar { points: points.iter().map(|p| p * f).collect() }
            }
        }
    }

    /// {y : m y in C}.
    pub fn preimage(&self, m: &DMatrix<f64>) -> Result<ConstraintSet> {
        let d = m.ncols();
        let diagonal = m.is_square() && (0..d).all(|i| (0..d).all(|j| i == j || m[(i, j)] == 0.0));
        match self {
            ConstraintSet::Full { .. } => Ok(ConstraintSet::Full { dim: d }),
            ConstraintSet::Box { lo, hi } if diagonal => {
                let mut nlo = DVector::zeros(d);
                let mut nhi = DVector::zeros(d);
                for j in 0..d {
                    let s = m[(j, j)];
                    if s == 0.0 {
                        nlo[j] = f64::NEG_INFINITY;
                        nhi[j] = f64::INFINITY;
                    } else {
                        let (a, b) = (lo[j] / s, hi[j] / s);
                        nlo[j] = a.min(b);
                        nhi[j] = a.max(b);
                    }
                }
                Ok(ConstraintSet::Box { lo: nlo, hi: nhi })
            }
            ConstraintSet::Box { .. } | ConstraintSet::Polyhedron { .. } => {
                let (a, b) = self.polyhedral().expect("polyhedral variant");
                Ok(ConstraintSet::Polyhedron { rows: a * m, bounds: b })
            }
            ConstraintSet::Cone { rows } => Ok(ConstraintSet::Cone { rows: rows * m }),
            ConstraintSet::Ball { radius, .. } => {
                let s = if m.is_square() { m[(0, 0)].abs() } else { 0.0 };
                if diagonal && s > 0.0 && (0..d).all(|j| m[(j, j)].abs() == s) {
                    Ok(ConstraintSet::Ball { dim: d, radius: radius / s })
                } else {
                    Err(Error::Unsupported("preimage of a ball under a non-scalar map".into()))
                }
            }
            ConstraintSet::Finite { points } if Self::nonzero_points(points).is_empty() => {
                if m.iter().all(|v| *v == 0.0) {
                    Ok(ConstraintSet::Full { dim: d })
                } else {
                    let mut rows = DMatrix::zeros(2 * m.nrows(), d);
                    rows.view_mut((0, 0), (m.nrows(), d)).copy_from(m);
                    rows.view_mut((m.nrows(), 0), (m.nrows(), d)).copy_from(&(-m));
                    Ok(ConstraintSet::Cone { rows })
                }
            }
            ConstraintSet::Finite { points } | ConstraintSet::ScaledStar { points } => {
                let inv = m
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Unsupported("preimage of a point set under a singular map".into()))?;
                let mapped: Vec<DVector<f64>> = points.iter().map(|p| &inv * p).collect();
                Ok(match self {
                    ConstraintSet::Finite { .. } => ConstraintSet::Finite { points: mapped },
                    _ => ConstraintSet::ScaledStar { points: mapped },
                })
            }
        }
    }
}

fn stack_rows(rows: &[DVector<f64>], d: usize, bounds: Vec<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let m = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
    (m, DVector::from_vec(bounds))
}

impl Membership for ConstraintSet {
    fn contains(&self, y: &DVector<f64>, _strict: bool) -> bool {
        if y.len() != self.dim() {
            return false;
        }
        let tol = MEMBER_TOL * (1.0 + y.amax());
        match self {
            ConstraintSet::Full { .. } => true,
            ConstraintSet::Box { lo, hi } => (0..y.len()).all(|i| y[i] >= lo[i] - tol && y[i] <= hi[i] + tol),
            ConstraintSet::Ball { radius, .. } => y.norm_squared() <= radius * radius * (1.0 + MEMBER_TOL) + tol,
            ConstraintSet::Polyhedron { rows, bounds } => (rows * y - bounds).iter().all(|&r| r <= tol),
            ConstraintSet::Cone { rows } => (rows * y).iter().all(|&r| r <= tol),
            ConstraintSet::Finite { points } => points.iter().any(|p| (p - y).amax() <= tol),
            ConstraintSet::ScaledStar { points } => {
                y.iter().all(|v| *v == 0.0)
                    || points.iter().any(|v| {
                        let den = v.norm_squared();
                        if den == 0.0 {
                            return false;
                        }
                        let eta = y.dot(v) / den;
                        (-tol..=1.0 + tol).contains(&eta) && (v * eta - y).amax() <= tol
                    })
            }
        }
    }
}

/// Natural constraints C0 = {y : 1 + y'x >= 0 for every jump x}; strict membership gives C0*.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalConstraints {
    dim: usize,
    rows: Vec<DVector<f64>>,
}

impl NaturalConstraints {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    pub fn unconstrained(dim: usize) -> Self {
        Self { dim, rows: Vec::new() }
    }

    pub fn from_chars(chars: &JointCharacteristics) -> Self {
        natural_constraints(chars.dim(), chars.active_atoms().map(|a| (a.x.clone(), a.weight)))
    }

    /// Every branch of a lattice node is a jump.
    pub fn from_node(dim: usize, node: &LatticeNode) -> Self {
        natural_constraints(dim, node.branches.iter().map(|b| (b.increment.clone(), b.prob)))
    }

    /// min over rows of 1 + y'x (infinite without rows).
    pub fn margin(&self, y: &DVector<f64>) -> f64 {
        self.rows.iter().map(|x| 1.0 + y.dot(x)).fold(f64::INFINITY, f64::min)
    }

    /// Inequality form -x'y <= 1.
    pub fn polyhedral(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = DMatrix::from_fn(self.rows.len(), self.dim, |r, c| -self.rows[r][c]);
        (m, DVector::from_element(self.rows.len(), 1.0))
    }

    /// Largest t in [0, cap] with t*v in C0.
    pub fn ray_limit(&self, v: &DVector<f64>, cap: f64) -> f64 {
        self.rows.iter().map(|x| v.dot(x)).filter(|s| *s < 0.0).map(|s| -1.0 / s).fold(cap, f64::min)
    }
}

impl Membership for NaturalConstraints {
    fn contains(&self, y: &DVector<f64>, strict: bool) -> bool {
        let tol = MEMBER_TOL * (1.0 + y.amax());
        self.rows.iter().all(|x| {
            let m = 1.0 + y.dot(x);
            if strict {
                m > 0.0
            } else {
                m >= -tol
            }
        })
    }
}

/// Half-spaces y'x >= -1 from atoms with positive weight.
pub fn natural_constraints<I>(dim: usize, atoms: I) -> NaturalConstraints
where
    I: IntoIterator<Item = (DVector<f64>, f64)>,
{
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for (x, w) in atoms {
        if w > 0.0 && x.iter().any(|v| *v != 0.0) && !rows.contains(&x) {
            rows.push(x);
        }
    }
    NaturalConstraints { dim, rows }
}

/// Orthonormal basis of the null investments {y : y'b = 0, c y = 0, y'x_i = 0}.
pub fn null_space(chars: &JointCharacteristics) -> Vec<DVector<f64>> {
    let d = chars.dim();
    let mut rows: Vec<DVector<f64>> = vec![chars.b_r.clone()];
    for i in 0..d {
        rows.push(chars.c_r.row(i).transpose());
    }
    rows.extend(chars.active_atoms().map(|a| a.x.clone()));
    let m = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
    linalg::kernel_basis(&m, d)
}

#[cfg(test)]
mod tests;
