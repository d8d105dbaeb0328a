use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GContext;
use crate::constraints::{ConstraintSet, Membership};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::check_structure_condition;

const MAX_ITER: usize = 20_000;
const UNBOUNDED_NORM: f64 = 1e9;
const ACTIVE_TOL: f64 = 1e-10;

/// Extra random starting points for the iterative solver; the best result wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxOptions {
    pub extra_starts: usize,
    pub seed: u64,
}

impl Default for MaxOptions {
    fn default() -> Self {
        Self { extra_starts: 0, seed: 7 }
    }
}

/// Maximizer of g over C intersected with C0, and the maximal value.
pub fn maximize_g(ctx: &GContext) -> Result<(DVector<f64>, f64)> {
    maximize_g_with(ctx, &MaxOptions::default())
}

pub fn maximize_g_with(ctx: &GContext, opts: &MaxOptions) -> Result<(DVector<f64>, f64)> {
    let d = ctx.dim();
    match ctx.constraint() {
        ConstraintSet::Finite { points } => enumerate(ctx, points),
        ConstraintSet::ScaledStar { points } => star(ctx, points),
        _ if ctx.natural().rows().is_empty() => closed_form(ctx),
        _ => {
            let mut best = maximize_g_from(ctx, &DVector::zeros(d))?;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            for _ in 0..opts.extra_starts {
                let raw = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
                let cand = maximize_g_from(ctx, &raw)?;
                if cand.1 > best.1 {
                    best = cand;
                }
            }
            Ok(best)
        }
    }
}

/// Iterative maximization from a given start (moved into C and C0* first); convex C only.
pub fn maximize_g_from(ctx: &GContext, start: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let c = ctx.constraint();
    if !c.is_convex() {
        return Err(Error::Unsupported("iterative maximization needs a convex constraint".into()));
    }
    if start.len() != ctx.dim() {
        return Err(Error::Shape("start has the wrong dimension".into()));
    }
    let z = c.project(start).swap_remove(0);
    let t = (0.5 * ctx.natural().ray_limit(&z, f64::INFINITY)).min(1.0);
    let y = ascend(ctx, z * t)?;
    let y = polish(ctx, y);
    let g = ctx.value_unchecked(&y);
    if y.norm() > UNBOUNDED_NORM || !g.is_finite() {
        return Err(Error::Unbounded);
    }
    Ok((y, g))
}

fn enumerate(ctx: &GContext, points: &[DVector<f64>]) -> Result<(DVector<f64>, f64)> {
    let mut best: Option<(DVector<f64>, f64)> = None;
    for y in points.iter().filter(|y| ctx.natural().contains(y, false)) {
        let g = ctx.value_unchecked(y);
        if best.as_ref().is_none_or(|(_, b)| g > *b) {
            best = Some((y.clone(), g));
        }
    }
    best.ok_or_else(|| Error::Domain("no feasible point".into()))
}

fn star(ctx: &GContext, points: &[DVector<f64>]) -> Result<(DVector<f64>, f64)> {
    let d = ctx.dim();
    let mut best = (DVector::zeros(d), 0.0);
    for v in points.iter().filter(|v| v.iter().any(|x| *x != 0.0)) {
        let slope = |t: f64| ctx.gradient(&(v * t)).map(|g| g.dot(v));
        let limit = ctx.natural().ray_limit(v, 1.0);
        if slope(0.0).unwrap_or(0.0) <= 0.0 {
            continue;
        }
        let t = if limit >= 1.0 && slope(1.0).is_some_and(|s| s >= 0.0) {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, limit);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                match slope(mid) {
                    Some(s) if s > 0.0 => lo = mid,
                    _ => hi = mid,
                }
            }
            lo
        };
        let y = v * t;
        let g = ctx.value_unchecked(&y);
        if g > best.1 {
            best = (y, g);
        }
    }
    Ok(best)
}

fn closed_form(ctx: &GContext) -> Result<(DVector<f64>, f64)> {
    let cr = &ctx.chars().c_r;
    let psi = check_structure_condition(&ctx.drift_term(), cr)?;
    let target = psi * ctx.beta();
    let y = ctx.constraint().metric_project(&target, cr).swap_remove(0);
    let g = ctx.value_unchecked(&y);
    Ok((y, g))
}

fn gradient_mapping(ctx: &GContext, y: &DVector<f64>, grad: &DVector<f64>) -> f64 {
    (&ctx.constraint().project(&(y + grad))[0] - y).norm()
}

fn ascend(ctx: &GContext, mut y: DVector<f64>) -> Result<DVector<f64>> {
    let c = ctx.constraint();
    let nat = ctx.natural();
    let floor = 1e-12 * nat.margin(&y).min(1.0);
    let mut g = ctx.value_unchecked(&y);
    let mut grad = ctx.gradient(&y).expect("interior start");
    let mut s = 1.0 / (1.0 + grad.norm());
    for _ in 0..MAX_ITER {
        let mut t = s;
        let mut next = None;
        for _ in 0..80 {
            let yn = c.project(&(&y + &grad * t)).swap_remove(0);
            if nat.margin(&yn) > floor {
                let gn = ctx.value_unchecked(&yn);
                if gn >= g + 1e-4 * grad.dot(&(&yn - &y)) - 1e-14 * (1.0 + g.abs()) {
                    next = Some((yn, gn));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((yn, gn)) = next else { break };
        let step = &yn - &y;
        let gradn = ctx.gradient(&yn).expect("strict interior");
        let curv = -step.dot(&(&gradn - &grad));
        s = if curv > 0.0 { step.norm_squared() / curv } else { 2.0 * t };
        s = s.clamp(1e-14, 1e14);
        y = yn;
        g = gn;
        grad = gradn;
        if y.norm() > UNBOUNDED_NORM || !g.is_finite() {
            return Err(Error::Unbounded);
        }
        if step.norm() <= 1e-15 * (1.0 + y.norm()) || gradient_mapping(ctx, &y, &grad) <= 1e-13 * (1.0 + y.norm()) {
            break;
        }
    }
    Ok(y)
}

/// Newton steps on the active face of the constraint.
fn polish(ctx: &GContext, mut y: DVector<f64>) -> DVector<f64> {
    let c = ctx.constraint();
    let nat = ctx.natural();
    let d = ctx.dim();
    for _ in 0..30 {
        let (Some(grad), Some(h)) = (ctx.gradient(&y), ctx.hessian(&y)) else { break };
        let step = match c {
            ConstraintSet::Ball { radius, .. } if y.norm() >= radius * (1.0 - ACTIVE_TOL) && *radius > 0.0 => {
                sphere_step(&y, &grad, &h)
            }
            _ => face_step(c, &y, &grad, &h, d),
        };
        let Some(step) = step else { break };
        if step.norm() <= 1e-16 * (1.0 + y.norm()) {
            break;
        }
        let g = ctx.value_unchecked(&y);
        let res = gradient_mapping(ctx, &y, &grad);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let yn = c.project(&(&y + &step * t)).swap_remove(0);
            if nat.contains(&yn, true) {
                let gn = ctx.value_unchecked(&yn);
                if let Some(gradn) = ctx.gradient(&yn) {
                    if gn >= g - 1e-14 * (1.0 + g.abs()) && gradient_mapping(ctx, &yn, &gradn) <= res {
                        y = yn;
                        moved = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    y
}

fn face_step(
    c: &ConstraintSet,
    y: &DVector<f64>,
    grad: &DVector<f64>,
    h: &DMatrix<f64>,
    d: usize,
) -> Option<DVector<f64>> {
    let basis = match c.polyhedral() {
        Some((a, b)) => {
            let active: Vec<usize> = (0..a.nrows())
                .filter(|&i| a.row(i).transpose().dot(y) >= b[i] - ACTIVE_TOL * (1.0 + b[i].abs()))
                .collect();
            if active.is_empty() {
                (0..d).map(|j| linalg::unit(d, j)).collect()
            } else {
                let m = DMatrix::from_fn(active.len(), d, |r, col| a[(active[r], col)]);
                linalg::kernel_basis(&m, d)
            }
        }
        None => (0..d).map(|j| linalg::unit(d, j)).collect::<Vec<_>>(),
    };
    if basis.is_empty() {
        return None;
    }
    let z = DMatrix::from_columns(&basis);
    let reduced = -(z.transpose() * h * &z);
    let (u, _) = linalg::min_norm_solve(&reduced, &(z.transpose() * grad));
    Some(z * u)
}

fn sphere_step(y: &DVector<f64>, grad: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let d = y.len();
    let mu = grad.dot(y) / y.norm_squared();
    if mu < 0.0 {
        return None;
    }
    let mut j = DMatrix::zeros(d + 1, d + 1);
    j.view_mut((0, 0), (d, d)).copy_from(&(h - DMatrix::identity(d, d) * mu));
    for i in 0..d {
        j[(i, d)] = -y[i];
        j[(d, i)] = y[i];
    }
    let mut rhs = DVector::zeros(d + 1);
    rhs.rows_mut(0, d).copy_from(&-(grad - y * mu));
    let (delta, _) = linalg::min_norm_solve(&j, &rhs);
    Some(delta.rows(0, d).into_owned())
}
