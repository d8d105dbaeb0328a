use super::*;
use crate::constraints::{null_space, ConstraintSet, Membership};
use crate::linalg;
use crate::model::{ConsumptionMode, CutOff, JointCharacteristics, JumpAtom, PowerUtilitySpec};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_vec(xs.to_vec())
}

fn merton_ctx(c: ConstraintSet) -> GContext {
    GContext::new(1.0, JointCharacteristics::scalar(0.1, 0.04, &[]).unwrap(), 0.5, c).unwrap()
}

#[test]
fn f_and_kappa_examples() {
    let spec = PowerUtilitySpec::simple(0.5, 1.0, ConsumptionMode::Intermediate, 1.0).unwrap();
    let ctx = merton_ctx(ConstraintSet::full(1));
    assert_abs_diff_eq!(eval_f(&ctx, &spec, 0.0, 1.0).unwrap(), 1.0);
    assert_eq!(eval_f(&ctx, &spec, 0.0, 0.0).unwrap(), 0.0);
    let neg = PowerUtilitySpec::simple(-1.0, 1.0, ConsumptionMode::Intermediate, 1.0).unwrap();
    assert_eq!(eval_f(&ctx, &neg, 0.0, 0.0).unwrap(), f64::NEG_INFINITY);

    assert_abs_diff_eq!(kappa_star(&spec, 0.0, 1.0).unwrap(), 1.0);
    let two = PowerUtilitySpec::simple(0.5, 2.0, ConsumptionMode::Intermediate, 1.0).unwrap();
    assert_abs_diff_eq!(kappa_star(&two, 0.0, 1.0).unwrap(), 4.0, epsilon = 1e-14);
    let four = PowerUtilitySpec::simple(-1.0, 4.0, ConsumptionMode::Intermediate, 1.0).unwrap();
    assert_abs_diff_eq!(kappa_star(&four, 0.0, 1.0).unwrap(), 2.0, epsilon = 1e-14);
    assert!(kappa_star(&four, 0.0, 0.0).is_err());
}

#[test]
fn kappa_matches_grid_argmax() {
    for (p, d, ell) in [(0.5, 1.3, 0.7), (-1.0, 2.0, 1.5), (0.2, 0.5, 3.0)] {
        let spec = PowerUtilitySpec::simple(p, d, ConsumptionMode::Intermediate, 1.0).unwrap();
        let ctx = GContext::new(ell, JointCharacteristics::scalar(0.0, 0.0, &[]).unwrap(), p, ConstraintSet::full(1))
            .unwrap();
        let k = kappa_star(&spec, 0.0, ell).unwrap();
        let foc = d * k.powf(p - 1.0);
        assert!((foc - ell).abs() <= 1e-10 * ell);
        let step = 1e-4;
        let grid_best = (1..100_000)
            .map(|i| i as f64 * step)
            .max_by(|a, b| eval_f(&ctx, &spec, 0.0, *a).unwrap().total_cmp(&eval_f(&ctx, &spec, 0.0, *b).unwrap()))
            .unwrap();
        assert!((grid_best - k).abs() <= step);
    }
}

#[test]
fn g_examples() {
    let ctx = merton_ctx(ConstraintSet::full(1));
    assert_eq!(eval_g(&ctx, &v(&[0.0])).unwrap(), 0.0);
    assert_abs_diff_eq!(eval_g(&ctx, &v(&[1.0])).unwrap(), 0.09, epsilon = 1e-15);

    let jump = JointCharacteristics::scalar(0.0, 0.0, &[(-1.0, 1.0)]).unwrap();
    let neg = GContext::new(1.0, jump.clone(), -1.0, ConstraintSet::full(1)).unwrap();
    assert_eq!(eval_g(&neg, &v(&[1.0])).unwrap(), f64::NEG_INFINITY);
    assert!(matches!(eval_g(&neg, &v(&[1.5])), Err(Error::Domain(_))));
    let pos = GContext::new(1.0, jump, 0.5, ConstraintSet::full(1)).unwrap();
    // w [(0 - 1)/p - h(-1) y] = -2 + 1
    assert_abs_diff_eq!(eval_g(&pos, &v(&[1.0])).unwrap(), -1.0, epsilon = 1e-15);
}

#[test]
fn context_rejects_bad_inputs() {
    let chars = JointCharacteristics::scalar(0.1, 0.04, &[]).unwrap();
    assert!(GContext::new(0.0, chars.clone(), 0.5, ConstraintSet::full(1)).is_err());
    assert!(GContext::new(1.0, chars.clone(), 0.5, ConstraintSet::full(2)).is_err());
    let mut companion = JointCharacteristics::scalar(0.0, 0.0, &[(0.5, 1.0)]).unwrap();
    companion.atoms[0].x_l = -1.0;
    assert!(matches!(GContext::new(1.0, companion.clone(), 0.5, ConstraintSet::full(1)), Err(Error::Domain(_))));
    assert!(GContext::new(1.5, companion, 0.5, ConstraintSet::full(1)).is_ok());
}

#[test]
fn maximize_examples() {
    let (y, g) = maximize_g(&merton_ctx(ConstraintSet::full(1))).unwrap();
    assert_abs_diff_eq!(y[0], 5.0, epsilon = 1e-12);
    assert_abs_diff_eq!(g, 0.25, epsilon = 1e-14);

    let (y, g) = maximize_g(&merton_ctx(ConstraintSet::zero(1))).unwrap();
    assert_eq!((y[0], g), (0.0, 0.0));

    // two-point atoms {-1, 8} with equal weight; the linear terms cancel when b = sum w h(x)
    let w = 0.5;
    let chars = JointCharacteristics::scalar(-w, 0.0, &[(-1.0, w), (8.0, w)]).unwrap();
    let c = ConstraintSet::finite(vec![v(&[0.0]), v(&[1.0])]).unwrap();
    let ctx = GContext::new(1.0, chars, 0.5, c).unwrap();
    let (y, g) = maximize_g(&ctx).unwrap();
    assert_eq!(y[0], 1.0);
    assert_abs_diff_eq!(g, w * (0.0 - 2.0) + w * (2.0 * 3.0 - 2.0), epsilon = 1e-14);
}

#[test]
fn maximize_constrained_closed_form() {
    let (y, g) = maximize_g(&merton_ctx(ConstraintSet::interval(0.0, 1.0).unwrap())).unwrap();
    assert_abs_diff_eq!(y[0], 1.0);
    assert_abs_diff_eq!(g, 0.09, epsilon = 1e-15);
    let (y, _) = maximize_g(&merton_ctx(ConstraintSet::ball(1, 2.0).unwrap())).unwrap();
    assert_abs_diff_eq!(y[0], 2.0, epsilon = 1e-12);
    let fail =
        GContext::new(1.0, JointCharacteristics::scalar(0.1, 0.0, &[]).unwrap(), 0.5, ConstraintSet::full(1)).unwrap();
    assert!(matches!(maximize_g(&fail), Err(Error::StructureCondition { .. })));
}

#[test]
fn maximize_detects_unbounded() {
    // only upward jumps on top of their compensator
    let chars = JointCharacteristics::scalar(0.5, 0.0, &[(0.5, 1.0)]).unwrap();
    let ctx = GContext::new(1.0, chars, 0.5, ConstraintSet::full(1)).unwrap();
    let r = maximize_g(&ctx);
    assert!(matches!(r, Err(Error::Unbounded)), "{r:?}");
}

#[test]
fn maximize_scalar_jump_matches_bisection() {
    // g'(y) = b - w h(x) + w x (1 + y x)^(p-1) with b = 0.05, c = 0, atom x = -0.5 w = 1
    let chars = JointCharacteristics::scalar(0.05, 0.0, &[(-0.5, 1.0)]).unwrap();
    for p in [0.5, -2.0] {
        let ctx = GContext::new(1.0, chars.clone(), p, ConstraintSet::full(1)).unwrap();
        let (y, _) = maximize_g(&ctx).unwrap();
        let deriv = |y: f64| 0.05 + 0.5 - 0.5 * (1.0 - 0.5 * y).powf(p - 1.0);
        let (mut lo, mut hi) = (0.0, 2.0 - 1e-15);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert_abs_diff_eq!(y[0], lo, epsilon = 1e-10);
    }
}

#[test]
fn star_set_maximizer() {
    let chars = JointCharacteristics::scalar(0.1, 0.04, &[]).unwrap();
    let c = ConstraintSet::scaled_star(vec![v(&[10.0]), v(&[-1.0])]).unwrap();
    let (y, _) = maximize_g(&GContext::new(1.0, chars, 0.5, c).unwrap()).unwrap();
    assert_abs_diff_eq!(y[0], 5.0, epsilon = 1e-10);
}

#[test]
fn directional_examples() {
    let ctx = merton_ctx(ConstraintSet::full(1));
    assert_eq!(directional_g(&ctx, &v(&[0.3]), &v(&[0.3])).unwrap(), 0.0);
    assert_abs_diff_eq!(directional_g(&ctx, &v(&[1.0]), &v(&[0.0])).unwrap(), 0.1, epsilon = 1e-15);
    for y in [-3.0, 0.0, 7.0] {
        assert_abs_diff_eq!(directional_g(&ctx, &v(&[y]), &v(&[5.0])).unwrap(), 0.0, epsilon = 1e-14);
    }
    let jump = JointCharacteristics::scalar(0.0, 0.0, &[(-1.0, 1.0)]).unwrap();
    let b = GContext::new(1.0, jump, 0.5, ConstraintSet::full(1)).unwrap();
    assert!(directional_g(&b, &v(&[0.0]), &v(&[1.0])).is_err());
}

#[test]
fn driver_examples() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let zero = v(&[0.0]);
    let cone = ConstraintSet::orthant(1);
    let general = continuous_driver_f(1.0, &zero, &one, &v(&[-0.3]), &cone, 0.5).unwrap();
    let simple = cone_driver_f(1.0, &zero, &one, &v(&[-0.3]), &cone, 0.5).unwrap();
    assert_abs_diff_eq!(general, 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(simple, 0.0, epsilon = 1e-15);
    let general = continuous_driver_f(1.0, &zero, &one, &v(&[0.3]), &cone, 0.5).unwrap();
    let simple = cone_driver_f(1.0, &zero, &one, &v(&[0.3]), &cone, 0.5).unwrap();
    assert_abs_diff_eq!(general, -0.045, epsilon = 1e-15);
    assert_abs_diff_eq!(simple, -0.045, epsilon = 1e-15);

    let sigma = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, 0.3]);
    let lam = v(&[1.0, -2.0]);
    let phi = v(&[0.1, 0.2]);
    let f = continuous_driver_f(2.0, &phi, &sigma, &lam, &ConstraintSet::full(2), -1.0).unwrap();
    let w = sigma.transpose() * (&lam + &phi / 2.0);
    assert_abs_diff_eq!(f, -(-1.0 / (2.0 * -2.0) * -2.0 * w.norm_squared()), epsilon = 1e-14);
}

#[test]
fn hu_driver_examples() {
    let spec = PowerUtilitySpec::simple(0.5, 1.0, ConsumptionMode::TerminalOnly, 1.0).unwrap();
    let theta = v(&[0.3, -0.2]);
    let f = hu_driver(0.0, &DVector::zeros(2), &theta, &DMatrix::identity(2, 2), &ConstraintSet::full(2), &spec, 1.0)
        .unwrap();
    assert_abs_diff_eq!(f, spec.q() / 2.0 * theta.norm_squared(), epsilon = 1e-15);
}

fn atom_ctx(d: usize, p: f64, ell: f64, raw: &[f64], n_atoms: usize, constraint: ConstraintSet) -> GContext {
    let mut k = 0;
    let mut next = || {
        let r = raw[k % raw.len()];
        k += 1;
        r
    };
    let a = DMatrix::from_fn(d, d, |_, _| next());
    let c = &a * a.transpose() * 0.1 + DMatrix::identity(d, d) * 0.01;
    let b = DVector::from_fn(d, |_, _| 0.2 * next());
    let c_rl = DVector::from_fn(d, |_, _| 0.02 * next());
    let atoms = (0..n_atoms)
        .map(|_| JumpAtom {
            x: DVector::from_fn(d, |_, _| 0.6 * next() + 0.3),
            x_l: 0.4 * ell * next(),
            weight: 0.5 + 0.4 * next(),
        })
        .collect();
    let chars =
        JointCharacteristics { b_r: b, a_l: 0.0, c_r: c, c_rl, c_l: None, atoms, d_a: 1.0, cutoff: CutOff::Truncation };
    GContext::new(ell, chars, p, constraint).unwrap()
}

fn interior_point(ctx: &GContext, raw: &DVector<f64>) -> DVector<f64> {
    let z = ctx.constraint().project(raw).swap_remove(0);
    let t = (0.95 * ctx.natural().ray_limit(&z, f64::INFINITY)).min(1.0);
    z * t
}

fn convex_constraint(kind: u8, d: usize) -> ConstraintSet {
    match kind % 5 {
        0 => ConstraintSet::full(d),
        1 => ConstraintSet::boxed(DVector::from_element(d, -0.5), DVector::from_element(d, 0.8)).unwrap(),
        2 => ConstraintSet::ball(d, 0.7).unwrap(),
        3 => ConstraintSet::orthant(d),
        _ => ConstraintSet::polyhedron(DMatrix::from_element(1, d, 1.0), DVector::from_element(1, 0.5)).unwrap(),
    }
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![-3.0..-0.1f64, 0.1..0.9f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn g_is_concave(d in 1usize..4, p in exponent(), ell in 0.2..3.0f64,
                    raw in proptest::collection::vec(-1.0..1.0f64, 40), n in 0usize..4,
                    y1 in proptest::collection::vec(-3.0..3.0f64, 3), y2 in proptest::collection::vec(-3.0..3.0f64, 3),
                    lam in 0.0..1.0f64) {
        let ctx = atom_ctx(d, p, ell, &raw, n, ConstraintSet::full(d));
        let y1 = interior_point(&ctx, &DVector::from_fn(d, |i, _| y1[i]));
        let y2 = interior_point(&ctx, &DVector::from_fn(d, |i, _| y2[i]));
        let g1 = eval_g(&ctx, &y1).unwrap();
        let g2 = eval_g(&ctx, &y2).unwrap();
        let gm = eval_g(&ctx, &(&y1 * lam + &y2 * (1.0 - lam))).unwrap();
        prop_assert!(gm >= lam * g1 + (1.0 - lam) * g2 - 1e-9 * (1.0 + g1.abs() + g2.abs()));
    }

    #[test]
    fn cone_driver_agrees(d in 1usize..4, m_extra in 0usize..2, p in exponent(), ell in 0.1..5.0f64,
                          raw in proptest::collection::vec(-1.0..1.0f64, 40), kind in 0u8..3) {
        let m = d + m_extra;
        let sigma = DMatrix::from_fn(d, m, |i, j| raw[(i * m + j) % 40]);
        let lam = DVector::from_fn(d, |i, _| 2.0 * raw[(i + 17) % 40]);
        let phi = DVector::from_fn(d, |i, _| raw[(i + 29) % 40]);
        let c = match kind {
            0 => ConstraintSet::full(d),
            1 => ConstraintSet::orthant(d),
            _ => ConstraintSet::cone(DMatrix::from_fn(1, d, |_, j| raw[(j + 5) % 40])),
        };
        let general = continuous_driver_f(ell, &phi, &sigma, &lam, &c, p).unwrap();
        let simple = cone_driver_f(ell, &phi, &sigma, &lam, &c, p).unwrap();
        prop_assert!((general - simple).abs() <= 1e-10 * (1.0 + simple.abs()), "{} vs {}", general, simple);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn g_is_cutoff_independent(d in 1usize..4, p in exponent(), ell in 0.2..3.0f64,
                               raw in proptest::collection::vec(-1.0..1.0f64, 40), n in 1usize..4,
                               y in proptest::collection::vec(-3.0..3.0f64, 3)) {
        let ctx = atom_ctx(d, p, ell, &raw, n, ConstraintSet::full(d));
        let y = interior_point(&ctx, &DVector::from_fn(d, |i, _| y[i]));
        let flat = ctx.chars().recut(CutOff::Zero);
        let other = GContext::new(ell, flat, p, ConstraintSet::full(d)).unwrap();
        let (g1, g2) = (eval_g(&ctx, &y).unwrap(), eval_g(&other, &y).unwrap());
        prop_assert!((g1 - g2).abs() <= 1e-10 * (1.0 + g1.abs()));
    }

    #[test]
    fn gradient_matches_finite_differences(d in 1usize..4, p in exponent(), ell in 0.2..3.0f64,
                                           raw in proptest::collection::vec(-1.0..1.0f64, 40),
                                           y in proptest::collection::vec(-1.0..1.0f64, 3),
                                           dir in proptest::collection::vec(-1.0..1.0f64, 3)) {
        let ctx = atom_ctx(d, p, ell, &raw, 0, ConstraintSet::full(d));
        let yc = DVector::from_fn(d, |i, _| y[i]);
        let dir = DVector::from_fn(d, |i, _| dir[i]);
        prop_assume!(dir.norm() > 0.1);
        let eps = 1e-6;
        let fd = (eval_g(&ctx, &(&yc + &dir * eps)).unwrap() - eval_g(&ctx, &yc).unwrap()) / eps;
        let an = directional_g(&ctx, &(&yc + &dir), &yc).unwrap();
        prop_assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-2));
        let closed = ell * dir.dot(&(ctx.drift_term() + &ctx.chars().c_r * &yc * (p - 1.0)));
        prop_assert!((closed - an).abs() <= 1e-12 * (1.0 + an.abs()));
    }

    #[test]
    fn first_order_condition_at_maximizer(d in 1usize..4, p in exponent(), ell in 0.2..3.0f64,
                                          raw in proptest::collection::vec(-1.0..1.0f64, 40), n in 1usize..4,
                                          kind in 0u8..5,
                                          audit in proptest::collection::vec(proptest::collection::vec(-3.0..3.0f64, 3), 20)) {
        let ctx = atom_ctx(d, p, ell, &raw, n, convex_constraint(kind, d));
        let (y_star, g_star) = maximize_g(&ctx).unwrap();
        prop_assert!(ctx.constraint().contains(&y_star, false));
        prop_assert!(ctx.natural().contains(&y_star, true));
        for a in audit {
            let y = interior_point(&ctx, &DVector::from_fn(d, |i, _| a[i]));
            prop_assert!(directional_g(&ctx, &y, &y_star).unwrap() <= 1e-8);
            prop_assert!(eval_g(&ctx, &y).unwrap() <= g_star + 1e-9);
        }
    }

    #[test]
    fn growth_bound_holds(p in exponent(), y in -3.0..3.0f64, dz in proptest::collection::vec(-3.0..3.0f64, 2),
                          th in proptest::collection::vec(-3.0..3.0f64, 2), dt in 0.1..3.0f64, consume in any::<bool>()) {
        let mode = if consume { ConsumptionMode::Intermediate } else { ConsumptionMode::TerminalOnly };
        let spec = PowerUtilitySpec::simple(p, dt, mode, 1.0).unwrap();
        let z = DVector::from_vec(dz);
        let theta = DVector::from_vec(th);
        let f = hu_driver(y, &z, &theta, &DMatrix::identity(2, 2), &ConstraintSet::orthant(2), &spec, dt).unwrap();
        prop_assert!(f.abs() <= hu_driver_bound(y, &z, &theta, &spec, dt) * (1.0 + 1e-12));
    }
}

#[test]
fn maximizers_agree_modulo_null_space() {
    // the second asset duplicates the first, so y and y + t(1, -1) give the same wealth
    let chars = JointCharacteristics::returns_only(
        v(&[0.05, 0.05]),
        DMatrix::from_row_slice(2, 2, &[0.04, 0.04, 0.04, 0.04]),
        vec![(v(&[-0.4, -0.4]), 0.3), (v(&[0.5, 0.5]), 0.2)],
    )
    .unwrap();
    for p in [0.5, -1.5] {
        let ctx = GContext::new(1.3, chars.clone(), p, ConstraintSet::full(2)).unwrap();
        let null = null_space(&chars);
        assert_eq!(null.len(), 1);
        let proj = linalg::complement_projector(&null, 2);
        let starts = [v(&[0.0, 0.0]), v(&[1.0, -1.0]), v(&[-2.0, 0.5]), v(&[0.3, 0.3]), v(&[1.5, -0.2])];
        let sols: Vec<_> = starts.iter().map(|s| maximize_g_from(&ctx, s).unwrap().0).collect();
        for s in &sols[1..] {
            assert!((&proj * (s - &sols[0])).norm() <= 1e-8);
        }
    }
}
