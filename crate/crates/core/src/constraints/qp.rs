//! Exact small-scale projections: active-set enumeration for polyhedra and the
//! trust-region secular equation for balls, both under a PSD metric.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::linalg;

pub(crate) fn feas_tol(b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    1e-10 * (1.0 + b.amax() + x.amax())
}

/// All index subsets of `0..m` of size `k`, in lexicographic order.
pub(crate) fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

/// argmin (y-x)'H(y-x) subject to a y <= b.
pub(crate) fn polyhedral_projection(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    h: &DMatrix<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    let d = x.len();
    let m = a.nrows();
    let tol = feas_tol(b, x);
    let feasible = |y: &DVector<f64>| (a * y - b).iter().all(|&r| r <= tol);
    if feasible(x) {
        return x.clone();
    }
    let objective = |y: &DVector<f64>| {
        let r = y - x;
        r.dot(&(h * &r))
    };
    let hx = h * x;
    // among approximate KKT points keep the one with the smallest primal plus dual violation
    let mut kkt: Option<(f64, DVector<f64>)> = None;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for k in 1..=m.min(d) {
        for set in combinations(m, k) {
            // H y + A_S' lambda = H x, A_S y = b_S
            let mut sys = DMatrix::zeros(d + k, d + k);
            sys.view_mut((0, 0), (d, d)).copy_from(h);
            let mut rhs = DVector::zeros(d + k);
            rhs.rows_mut(0, d).copy_from(&hx);
            for (r, &i) in set.iter().enumerate() {
                for c in 0..d {
                    sys[(d + r, c)] = a[(i, c)];
                    sys[(c, d + r)] = a[(i, c)];
                }
                rhs[d + r] = b[i];
            }
            let sol = match sys.clone().full_piv_lu().solve(&rhs) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => linalg::min_norm_solve(&sys, &rhs).0,
            };
            if (&sys * &sol - &rhs).amax() > 1e-10 * (1.0 + rhs.amax()) {
                continue;
            }
            let y = sol.rows(0, d).into_owned();
            let lambda = sol.rows(d, k).into_owned();
            if !feasible(&y) {
                continue;
            }
            let primal = (a * &y - b).iter().fold(0.0_f64, |m, &r| m.max(r));
            let dual = lambda.iter().fold(0.0_f64, |m, &l| m.max(-l));
            if dual <= 1e-10 * (1.0 + lambda.amax()) {
                let score = primal + dual;
                if kkt.as_ref().is_none_or(|(v, _)| score < *v) {
                    kkt = Some((score, y.clone()));
                }
            }
            let val = objective(&y);
            if best.as_ref().is_none_or(|(v, _)| val < *v) {
                best = Some((val, y));
            }
        }
    }
    kkt.or(best).map(|(_, y)| y).unwrap_or_else(|| DVector::zeros(d))
}

/// argmin (y-x)'H(y-x) over |y| <= r for PSD H (convex trust-region problem).
pub(crate) fn ball_projection(h: &DMatrix<f64>, radius: f64, x: &DVector<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(linalg::symmetrize(h));
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = 1e-14 * top.max(1.0);
    let xt = eig.eigenvectors.transpose() * x;
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|&v| if v > floor { v } else { 0.0 }).collect();
    let z_of =
        |mu: f64| DVector::from_fn(x.len(), |i, _| if lam[i] > 0.0 { lam[i] * xt[i] / (lam[i] + mu) } else { 0.0 });
    let z0 = z_of(0.0);
    let z = if z0.norm() <= radius {
        z0
    } else {
        let mut lo = 0.0;
        let mut hi = top.max(1e-300) * (xt.norm() / radius.max(1e-300)).max(1.0);
        while z_of(hi).norm() > radius {
            hi *= 2.0;
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if z_of(mid).norm() > radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-17 * hi {
                break;
            }
        }
        let z = z_of(hi);
        // land exactly on the sphere
        let n = z.norm();
        if n > 0.0 {
            z * (radius / n)
        } else {
            z
        }
    };
    &eig.eigenvectors * z
}
