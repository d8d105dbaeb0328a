use nalgebra::{DMatrix, DVector};

use super::{qp, ConstraintSet, Membership, NaturalConstraints};
use crate::error::Result;
use crate::linalg;
use crate::model::{CutOff, JointCharacteristics, JumpAtom};

/// Vertices of the bounded polyhedron {y : a y <= b}.
pub fn polytope_vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = a.ncols();
    let mut out: Vec<DVector<f64>> = Vec::new();
    if a.nrows() < d {
        return out;
    }
    for set in qp::combinations(a.nrows(), d) {
        let a_s = DMatrix::from_fn(d, d, |r, c| a[(set[r], c)]);
        let b_s = DVector::from_fn(d, |r, _| b[set[r]]);
        let Some(y) = a_s.lu().solve(&b_s) else { continue };
        if !y.iter().all(|v| v.is_finite()) {
            continue;
        }
        let tol = qp::feas_tol(b, &y);
        if (a * &y - b).iter().all(|&r| r <= tol) && !out.iter().any(|o| (o - &y).amax() <= 1e-12) {
            out.push(y);
        }
    }
    out
}

/// Feasible portfolio with nonzero exposure to asset `j` when one exists.
///
/// Candidates are the coordinate rays and, for polyhedral sets, the vertices of
/// C n C0 n [-1,1]^d; the winner is scaled into the unit ball and halved so it lands in C0*.
pub fn representative_portfolio(
    j: usize,
    c: &ConstraintSet,
    natural: &NaturalConstraints,
) -> Result<Option<DVector<f64>>> {
    let d = c.dim();
    let score = |v: &DVector<f64>| v[j].abs() / v.norm().max(1.0);
    let halve = |v: &DVector<f64>| v * (0.5 / v.norm().max(1.0));
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut offer = |v: DVector<f64>| {
        let s = score(&v);
        if s > 1e-12 && best.as_ref().is_none_or(|(b, _)| s > *b + 1e-15) {
            best = Some((s, v));
        }
    };
    match c {
        ConstraintSet::Finite { points } => {
            for p in points {
                if natural.contains(p, true) {
                    offer(p.clone());
                }
            }
            return Ok(best.map(|(_, v)| v));
        }
        ConstraintSet::ScaledStar { points } => {
            for p in points {
                let t = natural.ray_limit(p, 1.0);
                offer(p * t);
            }
        }
        ConstraintSet::Ball { radius, .. } => {
            for sign in [1.0, -1.0] {
                let e = linalg::unit(d, j) * sign;
                let t = natural.ray_limit(&e, radius.min(1.0));
                offer(e * t);
            }
        }
        _ => {
            let (a, b) = c.polyhedral().expect("polyhedral variant");
            let (na, nb) = natural.polyhedral();
            let rows = a.nrows() + na.nrows() + 2 * d;
            let mut big = DMatrix::zeros(rows, d);
            let mut bounds = DVector::zeros(rows);
            big.view_mut((0, 0), (a.nrows(), d)).copy_from(&a);
            bounds.rows_mut(0, a.nrows()).copy_from(&b);
            big.view_mut((a.nrows(), 0), (na.nrows(), d)).copy_from(&na);
            bounds.rows_mut(a.nrows(), na.nrows()).copy_from(&nb);
            let off = a.nrows() + na.nrows();
            for i in 0..d {
                big[(off + 2 * i, i)] = 1.0;
                big[(off + 2 * i + 1, i)] = -1.0;
                bounds[off + 2 * i] = 1.0;
                bounds[off + 2 * i + 1] = 1.0;
            }
            for sign in [1.0, -1.0] {
                let e = linalg::unit(d, j) * sign;
                let mut t = natural.ray_limit(&e, 1.0);
                for r in 0..a.nrows() {
                    let s = a.row(r).transpose().dot(&e);
                    if s > 0.0 {
                        t = t.min(b[r] / s);
                    }
                }
                offer(e * t);
            }
            for v in polytope_vertices(&big, &bounds) {
                offer(v);
            }
        }
    }
    Ok(best.map(|(_, v)| halve(&v)))
}

/// Model in representative-portfolio coordinates: returns phi' R and constraints {y : phi y in C}.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedModel {
    pub chars: JointCharacteristics,
    pub constraint: ConstraintSet,
    /// columns are the portfolios held by the new assets
    pub phi: DMatrix<f64>,
    /// which coordinates received a nonzero representative
    pub represented: Vec<bool>,
}

fn map_chars(chars: &JointCharacteristics, m: &DMatrix<f64>) -> JointCharacteristics {
    let flat = chars.recut(CutOff::Zero);
    let mt = m.transpose();
    let atoms = flat
        .atoms
        .iter()
        .map(|a| JumpAtom { x: &mt * &a.x, x_l: a.x_l, weight: a.weight })
        .filter(|a| a.x.iter().any(|v| *v != 0.0) || a.x_l != 0.0)
        .collect();
    let mapped =
        JointCharacteristics { b_r: &mt * &flat.b_r, c_r: &mt * &flat.c_r * m, c_rl: &mt * &flat.c_rl, atoms, ..flat };
    mapped.recut(chars.cutoff)
}

pub fn transform_model(chars: &JointCharacteristics, c: &ConstraintSet) -> Result<TransformedModel> {
    chars.validate()?;
    let d = chars.dim();
    let mut cur_chars = chars.clone();
    let mut cur_c = c.clone();
    let mut phi = DMatrix::identity(d, d);
    let mut represented = Vec::with_capacity(d);
    for j in 0..d {
        let natural = NaturalConstraints::from_chars(&cur_chars);
        let rep = representative_portfolio(j, &cur_c, &natural)?;
        represented.push(rep.is_some());
        let mut step = DMatrix::identity(d, d);
        step.set_column(j, &rep.unwrap_or_else(|| DVector::zeros(d)));
        cur_c = cur_c.preimage(&step)?;
        cur_chars = map_chars(&cur_chars, &step);
        phi *= step;
    }
    Ok(TransformedModel { chars: cur_chars, constraint: cur_c, phi, represented })
}
