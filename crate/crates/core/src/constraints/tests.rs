use super::*;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_vec(xs.to_vec())
}

#[test]
fn natural_constraint_examples() {
    let none = natural_constraints(2, Vec::<(DVector<f64>, f64)>::new());
    assert!(none.contains(&v(&[1e9, -1e9]), true));
    let scalar = natural_constraints(1, vec![(v(&[-0.5]), 1.0), (v(&[1.0]), 1.0)]);
    assert!(scalar.contains(&v(&[2.0]), false));
    assert!(scalar.contains(&v(&[-1.0]), false));
    assert!(!scalar.contains(&v(&[2.0001]), false));
    assert!(!scalar.contains(&v(&[-1.0001]), false));
    let plane = natural_constraints(2, vec![(v(&[-1.0, 0.0]), 1.0)]);
    assert!(plane.contains(&v(&[1.0, 100.0]), false));
    assert!(!plane.contains(&v(&[1.01, 0.0]), false));
    let zero_weight = natural_constraints(1, vec![(v(&[-1.0]), 0.0)]);
    assert!(zero_weight.contains(&v(&[5.0]), true));
}

#[test]
fn membership_examples() {
    let sets = [
        ConstraintSet::full(2),
        ConstraintSet::ball(2, 1.0).unwrap(),
        ConstraintSet::orthant(2),
        ConstraintSet::finite(vec![v(&[1.0, 1.0])]).unwrap(),
    ];
    for s in &sets {
        assert!(membership(s, &DVector::zeros(2), false));
    }
    let atom = natural_constraints(1, vec![(v(&[-1.0]), 1.0)]);
    assert!(!membership(&atom, &v(&[1.0]), true));
    assert!(membership(&atom, &v(&[1.0]), false));
    assert!(membership(&ConstraintSet::ball(2, 1.0).unwrap(), &v(&[0.6, 0.8]), false));
}

#[test]
fn projection_examples() {
    let p = ConstraintSet::ball(2, 1.0).unwrap().project(&v(&[2.0, 0.0]));
    assert_eq!(p, vec![v(&[1.0, 0.0])]);
    let p = ConstraintSet::orthant(2).project(&v(&[1.0, -2.0]));
    assert_eq!(p.len(), 1);
    assert_abs_diff_eq!((&p[0] - v(&[1.0, 0.0])).norm(), 0.0, epsilon = 1e-14);
    let fin = ConstraintSet::finite(vec![v(&[0.0]), v(&[1.0])]).unwrap();
    let p = fin.project(&v(&[0.5]));
    assert_eq!(p.len(), 2);
}

#[test]
fn distance_examples() {
    let k = ConstraintSet::orthant(2);
    assert_eq!(k.distance_sq(&v(&[0.3, 0.0])), 0.0);
    assert_abs_diff_eq!(k.distance_sq(&v(&[1.0, -2.0])), 4.0, epsilon = 1e-14);
    assert_abs_diff_eq!(ConstraintSet::interval(-1.0, 1.0).unwrap().distance_sq(&v(&[3.0])), 4.0);
}

#[test]
fn null_space_examples() {
    let id = JointCharacteristics::returns_only(v(&[0.1, 0.2]), DMatrix::identity(2, 2), vec![]).unwrap();
    assert!(null_space(&id).is_empty());
    let dup = JointCharacteristics::returns_only(
        v(&[0.1, 0.1]),
        DMatrix::from_row_slice(2, 2, &[0.04, 0.04, 0.04, 0.04]),
        vec![],
    )
    .unwrap();
    let n = null_space(&dup);
    assert_eq!(n.len(), 1);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert_abs_diff_eq!((&n[0] - v(&[h, -h])).norm(), 0.0, epsilon = 1e-12);
    let jump = JointCharacteristics::returns_only(DVector::zeros(2), DMatrix::zeros(2, 2), vec![(v(&[1.0, 0.0]), 1.0)])
        .unwrap();
    let n = null_space(&jump);
    assert_eq!(n.len(), 1);
    assert_abs_diff_eq!((&n[0] - v(&[0.0, 1.0])).norm(), 0.0, epsilon = 1e-12);
}

#[test]
fn null_directions_leave_lattice_wealth_unchanged() {
    use crate::model::{build_lattice, Scheme};
    let chars = JointCharacteristics::returns_only(
        v(&[0.1, 0.1]),
        DMatrix::from_row_slice(2, 2, &[0.04, 0.04, 0.04, 0.04]),
        vec![(v(&[-0.3, -0.3]), 0.5)],
    )
    .unwrap();
    let n = null_space(&chars);
    assert_eq!(n.len(), 1);
    let lat = build_lattice(&chars, 1.0, 50, Scheme::Multinomial).unwrap();
    for node in lat.slices().iter().flatten() {
        for b in &node.branches {
            assert!(n[0].dot(&b.increment).abs() <= 1e-15);
        }
    }
}

#[test]
fn sigma_image_examples() {
    let full = sigma_image(&DMatrix::identity(2, 2), &ConstraintSet::full(2)).unwrap();
    assert_eq!(full.explicit().unwrap(), ConstraintSet::full(2));
    let boxed = sigma_image(&DMatrix::from_element(1, 1, 2.0), &ConstraintSet::interval(-1.0, 1.0).unwrap()).unwrap();
    assert_eq!(boxed.explicit().unwrap(), ConstraintSet::interval(-2.0, 2.0).unwrap());
    assert_abs_diff_eq!(boxed.distance_sq(&v(&[3.0])), 1.0, epsilon = 1e-12);
    let fin = ConstraintSet::finite(vec![v(&[0.0]), v(&[1.0])]).unwrap();
    let img = sigma_image(&DMatrix::from_element(1, 1, 1.0), &fin).unwrap();
    assert_eq!(img.explicit().unwrap(), fin);
    let ball =
        sigma_image(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), &ConstraintSet::ball(2, 1.0).unwrap())
            .unwrap();
    assert!(matches!(ball.explicit(), Err(Error::NotRepresentable(_))));
}

#[test]
fn rectangular_image_keeps_orthogonal_part() {
    // sigma: 1 x 2, image is the line spanned by (1, 1)
    let sigma = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let img = sigma_image(&sigma, &ConstraintSet::full(1)).unwrap();
    assert_abs_diff_eq!(img.distance_sq(&v(&[1.0, -1.0])), 2.0, epsilon = 1e-12);
    let cone = sigma_image(&sigma, &ConstraintSet::orthant(1)).unwrap();
    assert_abs_diff_eq!(cone.distance_sq(&v(&[-1.0, -1.0])), 2.0, epsilon = 1e-12);
}

#[test]
fn representative_examples() {
    for d in 1..=3 {
        let nat = NaturalConstraints::unconstrained(d);
        for j in 0..d {
            let phi = representative_portfolio(j, &ConstraintSet::full(d), &nat).unwrap().unwrap();
            assert_abs_diff_eq!((phi - linalg::unit(d, j) * 0.5).norm(), 0.0, epsilon = 1e-15);
        }
    }
    let nat = NaturalConstraints::unconstrained(2);
    assert_eq!(representative_portfolio(0, &ConstraintSet::zero(2), &nat).unwrap(), None);
    let atom = natural_constraints(1, vec![(v(&[-1.0]), 1.0)]);
    let phi = representative_portfolio(0, &ConstraintSet::interval(0.0, 1.0).unwrap(), &atom).unwrap().unwrap();
    assert_abs_diff_eq!(phi[0], 0.5);
}

#[test]
fn representative_needs_feasible_exposure() {
    // asset 1 may only be held jointly with asset 0: y1 <= y0 and y0 <= 0 forces y1 <= 0 but y1 < 0 allowed
    let rows = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]);
    let c = ConstraintSet::polyhedron(rows, DVector::zeros(2)).unwrap();
    let nat = NaturalConstraints::unconstrained(2);
    let phi = representative_portfolio(1, &c, &nat).unwrap().unwrap();
    assert!(phi[1] != 0.0 && c.contains(&phi, false) && phi.norm() <= 1.0);
    // C = {y : y1 = 0}
    let flat = ConstraintSet::cone(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]));
    assert_eq!(representative_portfolio(1, &flat, &nat).unwrap(), None);
    assert!(representative_portfolio(0, &flat, &nat).unwrap().is_some());
}

#[test]
fn transform_examples() {
    let chars = JointCharacteristics::scalar(0.05, 0.04, &[(-1.0, 0.5)]).unwrap();
    let t = transform_model(&chars, &ConstraintSet::interval(0.0, 1.0).unwrap()).unwrap();
    assert_abs_diff_eq!(t.phi[(0, 0)], 0.5);
    assert_abs_diff_eq!(t.chars.atoms[0].x[0], -0.5);
    assert_eq!(t.constraint, ConstraintSet::interval(0.0, 2.0).unwrap());
    let e = v(&[1.0]);
    assert!(t.constraint.contains(&e, false));
    assert!(NaturalConstraints::from_chars(&t.chars).contains(&e, true));
    // the drift absorbs the truncation change: mean rates agree
    assert_abs_diff_eq!(t.chars.mean_rate()[0], 0.5 * chars.mean_rate()[0], epsilon = 1e-15);

    let free = JointCharacteristics::returns_only(v(&[0.1, 0.0]), DMatrix::identity(2, 2) * 0.04, vec![]).unwrap();
    let t = transform_model(&free, &ConstraintSet::full(2)).unwrap();
    assert_abs_diff_eq!((&t.phi - DMatrix::identity(2, 2) * 0.5).norm(), 0.0, epsilon = 1e-15);

    let t = transform_model(&free, &ConstraintSet::zero(2)).unwrap();
    assert_eq!(t.phi, DMatrix::zeros(2, 2));
    assert_eq!(t.represented, vec![false, false]);
}

#[test]
fn vertices_of_square() {
    let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
    let b = DVector::from_element(4, 1.0);
    assert_eq!(polytope_vertices(&a, &b).len(), 4);
}

fn convex_set(kind: u8, d: usize, seed: &[f64]) -> ConstraintSet {
    match kind % 5 {
        0 => ConstraintSet::boxed(
            DVector::from_fn(d, |i, _| -0.2 - seed[i].abs()),
            DVector::from_fn(d, |i, _| 0.1 + seed[i + 3].abs()),
        )
        .unwrap(),
        1 => ConstraintSet::ball(d, 0.3 + seed[0].abs()).unwrap(),
        2 => ConstraintSet::orthant(d),
        3 => {
            let rows = DMatrix::from_fn(3, d, |r, c| seed[(r * 3 + c) % seed.len()]);
            ConstraintSet::polyhedron(rows, DVector::from_vec(vec![0.5, 1.0, 0.2])).unwrap()
        }
        _ => ConstraintSet::cone(DMatrix::from_fn(2, d, |r, c| seed[(r * 2 + c + 1) % seed.len()])),
    }
}

fn sample_in(k: &ConstraintSet, raw: &DVector<f64>) -> Option<DVector<f64>> {
    let z = &k.project(raw)[0];
    k.contains(z, false).then(|| z.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_is_optimal(kind in 0u8..5, d in 1usize..4,
                             seed in proptest::collection::vec(-1.5..1.5f64, 9),
                             x in proptest::collection::vec(-3.0..3.0f64, 3),
                             zs in proptest::collection::vec(proptest::collection::vec(-3.0..3.0f64, 3), 8)) {
        let k = convex_set(kind, d, &seed);
        let x = DVector::from_fn(d, |i, _| x[i]);
        let proj = k.project(&x);
        prop_assert_eq!(proj.len(), 1);
        prop_assert!(k.contains(&proj[0], false));
        let best = (&x - &proj[0]).norm();
        for z in zs {
            if let Some(z) = sample_in(&k, &DVector::from_fn(d, |i, _| z[i])) {
                prop_assert!((&x - &z).norm() >= best - 1e-10);
            }
            // a point on the segment to the origin is also in K
            let mid = &proj[0] * 0.5;
            prop_assert!((&x - &mid).norm() >= best - 1e-10);
        }
    }

    #[test]
    fn cone_projection_identities(d in 1usize..4, seed in proptest::collection::vec(-1.5..1.5f64, 9),
                                  x in proptest::collection::vec(-3.0..3.0f64, 3), lam in 0.01..20.0f64,
                                  polyhedral in any::<bool>()) {
        let k = if polyhedral { convex_set(4, d, &seed) } else { ConstraintSet::orthant(d) };
        let x = DVector::from_fn(d, |i, _| x[i]);
        let px = &k.project(&x)[0];
        let plx = &k.project(&(&x * lam))[0];
        prop_assert!((plx - px * lam).norm() <= 1e-10 * (1.0 + lam));
        prop_assert!((&x - px).dot(px).abs() <= 1e-10);
    }

    #[test]
    fn scaling_enters_strict_natural_set(atoms in proptest::collection::vec(proptest::collection::vec(-2.0..2.0f64, 2), 1..5),
                                          y in proptest::collection::vec(-3.0..3.0f64, 2), eta in 0.0..0.999f64) {
        let nat = natural_constraints(2, atoms.iter().map(|a| (DVector::from_vec(a.clone()), 1.0)));
        let y = DVector::from_vec(y);
        let y = &y * nat.ray_limit(&y, 1.0);
        prop_assert!(nat.contains(&y, false));
        prop_assert!(nat.contains(&(y * eta), true));
    }
}

#[test]
fn closure_of_strict_set_on_vertices() {
    let nat = natural_constraints(2, vec![(v(&[-1.0, 0.0]), 1.0), (v(&[0.0, -1.0]), 1.0), (v(&[1.0, 1.0]), 1.0)]);
    let (a, b) = nat.polyhedral();
    let verts = polytope_vertices(&a, &b);
    assert_eq!(verts.len(), 3);
    for vert in verts {
        assert!(nat.contains(&vert, false) && !nat.contains(&vert, true));
        for n in [10.0, 100.0, 1e6] {
            assert!(nat.contains(&(&vert * (1.0 - 1.0 / n)), true));
        }
    }
}
