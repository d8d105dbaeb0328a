use super::*;
use crate::fixtures;
use crate::verify::TOL_MART;
use approx::assert_abs_diff_eq;

const MERTON: &str = r#"{"schema":"bp-model/1","p":0.5,"D":1,"mode":"terminal","T":1,"d":1,
    "b":[0.04],"c":[[0.04]],"steps":100}"#;

fn merton() -> ModelFile {
    ModelFile::parse(MERTON).unwrap()
}

#[test]
fn parse_list_accepts_empty_and_signs() {
    assert!(parse_list("").unwrap().is_empty());
    assert_eq!(parse_list("-1, 0.5,2e-1").unwrap(), vec![-1.0, 0.5, 0.2]);
    assert!(parse_list("1,,2").is_err());
}

#[test]
fn sweep_axis_names() {
    let a = SweepAxis::parse("radius=0.5,1").unwrap();
    assert_eq!(a.param, SweepParam::Radius);
    assert_eq!(a.values, vec![0.5, 1.0]);
    assert!(SweepAxis::parse("steps=").unwrap().values.is_empty());
    assert!(SweepAxis::parse("sigma=1").is_err());
    assert!(SweepAxis::parse("p").is_err());
}

#[test]
fn tolerance_overrides() {
    let cli = Cli::try_parse_from(["bp", "solve", "--tol", "mart=1e-6", "--tol", "opt=0"]).unwrap();
    let tol = cli.common.tolerances().unwrap();
    assert_eq!((tol.mart, tol.opt), (1e-6, 0.0));
    let cli = Cli::try_parse_from(["bp", "solve", "--tol", "speed=1"]).unwrap();
    assert!(cli.common.tolerances().is_err());
    let cli = Cli::try_parse_from(["bp", "solve", "--tol", "mart=-1"]).unwrap();
    assert!(cli.common.tolerances().is_err());
}

#[test]
fn model_schema_is_enforced() {
    assert!(ModelFile::parse(&MERTON.replace("bp-model/1", "bp-model/2")).is_err());
    assert!(ModelFile::parse(&MERTON.replace("\"steps\"", "\"stepz\"")).is_err());
    assert!(ModelFile::parse("{").is_err());
}

#[test]
fn model_json_round_trip() {
    let f = merton();
    let again = ModelFile::parse(&f.to_json()).unwrap();
    assert_eq!(f, again);
}

#[test]
fn constraint_specs_round_trip_through_sets() {
    let specs = [
        ConstraintSpec::Full,
        ConstraintSpec::Box { lo: vec![Some(0.0), None], hi: vec![Some(1.0), Some(2.0)] },
        ConstraintSpec::Ball { radius: 0.5 },
        ConstraintSpec::Cone { rows: vec![vec![-1.0, 0.0]] },
        ConstraintSpec::Polyhedron { rows: vec![vec![1.0, 1.0]], bounds: vec![1.0] },
        ConstraintSpec::Finite { points: vec![vec![0.0, 0.0], vec![1.0, 0.0]] },
        ConstraintSpec::ScaledStar { points: vec![vec![1.0, 1.0]] },
    ];
    for s in specs {
        let set = s.build(2).unwrap();
        assert_eq!(ConstraintSpec::from_set(&set), s);
    }
    assert!(ConstraintSpec::Ball { radius: 1.0 }.build(2).is_ok());
    assert!(ConstraintSpec::Cone { rows: vec![vec![1.0]] }.build(2).is_err());
}

#[test]
fn solve_matches_merton_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_solve(&merton(), dir.path()).unwrap();
    let exact = fixtures::merton_l0(0.5, 0.04, 1.0);
    assert!((s.l0 / exact - 1.0).abs() < 1e-3, "{} vs {exact}", s.l0);
    assert_abs_diff_eq!(s.value0, 2.0 * s.l0, epsilon = 1e-12);
    for name in ["opportunity.csv", "summary.json", "drift_residual.csv", "candidate.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn solve_csv_has_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_solve(&merton(), dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("opportunity.csv")).unwrap();
    assert_eq!(text.lines().count(), s.nodes + 1);
    assert!(!text.contains('\r'));
    let text = std::fs::read_to_string(dir.path().join("drift_residual.csv")).unwrap();
    assert_eq!(text.lines().count(), s.steps + 1);
}

#[test]
fn verify_round_trip_passes_and_scaled_fails() {
    let dir = tempfile::tempdir().unwrap();
    let f = merton();
    run_solve(&f, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("candidate.json")).unwrap();
    let cand = CandidateFile::parse(&text).unwrap();
    let report = run_verify(&f, &cand, &Tolerances::default(), dir.path()).unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.z_candidate_residual <= TOL_MART);

    let mut bad = cand.clone();
    bad.pi.iter_mut().flatten().flatten().for_each(|v| *v *= 1.1);
    let report = run_verify(&f, &bad, &Tolerances::default(), dir.path()).unwrap();
    assert!(!report.passed());
    assert!(report.counterexample.is_some());
}

#[test]
fn candidate_shape_mismatch_is_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let f = merton();
    run_solve(&f, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("candidate.json")).unwrap();
    let mut cand = CandidateFile::parse(&text).unwrap();
    cand.kappa.pop();
    let err = run_verify(&f, &cand, &Tolerances::default(), dir.path()).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
    assert!(err.to_string().contains("kappa has 100 slices, lattice has 101"), "{err}");
}

#[test]
fn transform_scalar_box() {
    let dir = tempfile::tempdir().unwrap();
    let f = ModelFile::parse(
        r#"{"schema":"bp-model/1","p":0.5,"T":1,"d":1,"b":[0.05],"c":[[0.04]],
        "atoms":[{"x":[-1],"w":0.1}],"steps":10,"constraint":{"type":"box","lo":[0],"hi":[1]}}"#,
    )
    .unwrap();
    let tm = run_transform(&f, dir.path()).unwrap();
    assert_abs_diff_eq!(tm.phi[(0, 0)], 0.5, epsilon = 1e-12);
    let text = std::fs::read_to_string(dir.path().join("transformed_model.json")).unwrap();
    let g = ModelFile::parse(&text).unwrap();
    assert_eq!(g.constraint, ConstraintSpec::Box { lo: vec![Some(0.0)], hi: vec![Some(2.0)] });
    assert_abs_diff_eq!(g.atoms[0].x[0], -0.5, epsilon = 1e-12);
    let a = run_solve(&f, dir.path()).unwrap();
    let b = run_solve(&g, dir.path()).unwrap();
    assert_abs_diff_eq!(a.value0, b.value0, epsilon = 1e-9);
}

#[test]
fn transform_needs_characteristics() {
    let f = ModelFile::parse(
        r#"{"schema":"bp-model/1","p":0.5,"T":1,"d":1,
        "lattice":{"times":[0,1],"branches":[{"x":[0.1],"prob":0.5},{"x":[-0.1],"prob":0.5}]}}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(run_transform(&f, dir.path()), Err(Error::Unsupported(_))));
}

#[test]
fn g_eval_reports_maximizer() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_g_eval(&merton(), &[0.0], 1.0, 7, dir.path()).unwrap();
    assert_eq!(r.g, Some(0.0));
    // g(y) = y b - (1-p) c y^2 / 2, maximized at b / ((1-p) c) = 2
    let m = r.maximizer.unwrap()[0];
    assert_abs_diff_eq!(m, 2.0, epsilon = 1e-6);
    assert_abs_diff_eq!(r.max_value.unwrap(), 0.04, epsilon = 1e-9);
    assert!(run_g_eval(&merton(), &[0.0, 1.0], 1.0, 7, dir.path()).is_err());
}

#[test]
fn sweep_records_failures_and_keeps_order() {
    let dir = tempfile::tempdir().unwrap();
    let axis = SweepAxis::parse("steps=20,0,40").unwrap();
    let seq = run_sweep(&merton(), &axis, false, dir.path()).unwrap();
    let seq_text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(seq[0].is_ok() && seq[1].is_err() && seq[2].is_ok());
    run_sweep(&merton(), &axis, true, dir.path()).unwrap();
    let par_text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(seq_text, par_text);
    assert_eq!(seq_text.lines().count(), 4);
}

#[test]
fn sweep_theta_and_radius() {
    let dir = tempfile::tempdir().unwrap();
    let axis = SweepAxis::parse("theta=0.1,0.3").unwrap();
    let cells = run_sweep(&merton(), &axis, false, dir.path()).unwrap();
    for (cell, theta) in cells.iter().zip([0.1, 0.3]) {
        let l0 = cell.as_ref().unwrap().l0();
        assert!((l0 / fixtures::merton_l0(0.5, theta * theta, 1.0) - 1.0).abs() < 1e-3);
    }
    let axis = SweepAxis::parse("radius=0").unwrap();
    let cells = run_sweep(&merton(), &axis, false, dir.path()).unwrap();
    assert_abs_diff_eq!(cells[0].as_ref().unwrap().l0(), 1.0, epsilon = 1e-12);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(&model, MERTON).unwrap();
    let out = dir.path().join("out");
    let args = |extra: &[&str]| {
        let mut v: Vec<String> = vec!["bp".into()];
        v.extend(extra.iter().map(|s| s.to_string()));
        v.extend(["--model".into(), model.display().to_string(), "--out".into(), out.display().to_string()]);
        v
    };
    assert_eq!(main_with_args(args(&["solve"])), EXIT_OK);
    let cand = out.join("candidate.json").display().to_string();
    assert_eq!(main_with_args(args(&["verify", "--candidate", &cand])), EXIT_OK);
    assert_eq!(main_with_args(args(&["verify", "--candidate", "/nonexistent.json"])), EXIT_USAGE);
    assert_eq!(main_with_args(args(&["oracle"])), EXIT_USAGE);
    assert_eq!(main_with_args(args(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(main_with_args(["bp", "solve"]), EXIT_USAGE);
}
