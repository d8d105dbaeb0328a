use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::files::{AtomSpec, CandidateFile, ConstraintSpec, ModelFile};
use super::parse_list;
use crate::bellman::{
    brute_force_oracle, drift_identity_residual, solve_tree_dp, solve_tree_dp_grid, CharMode, OpportunityLattice,
};
use crate::constraints::{transform_model, TransformedModel};
use crate::error::{Error, Result};
use crate::gfun::{eval_g, maximize_g_with, GContext, MaxOptions};
use crate::linalg;
use crate::model::CutOff;
use crate::verify::{verify_all, Tolerances, VerificationReport, VerifyOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootStrategy {
    pub pi: Vec<f64>,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub schema: &'static str,
    pub value0: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub strategy_at_root: RootStrategy,
    pub steps: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub schema: &'static str,
    pub value0: f64,
    pub grid_dp_value0: f64,
    pub abs_diff: f64,
    pub strategy_at_root: RootStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GEval {
    pub schema: &'static str,
    pub ell: f64,
    pub y: Vec<f64>,
    /// null when g is -inf at y
    pub g: Option<f64>,
    pub gradient: Option<Vec<f64>>,
    pub maximizer: Option<Vec<f64>>,
    pub max_value: Option<f64>,
    pub unbounded: bool,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))
}

/// Shortest round-trip text, switching to exponent form for very small or large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("csv output: {e}"))
}

fn root(opp: &OpportunityLattice) -> RootStrategy {
    RootStrategy { pi: opp.pi(0, 0).iter().copied().collect(), kappa: opp.kappa(0, 0) }
}

/// Solves the model and writes opportunity.csv, summary.json, drift_residual.csv and candidate.json.
pub fn run_solve(file: &ModelFile, out: &Path) -> Result<SolveSummary> {
    let model = file.build()?;
    let (lat, spec) = (&model.lattice, &model.spec);
    let opp = solve_tree_dp(lat, spec, &model.constraint)?;
    let d = lat.dim();

    let mut w = csv_writer(&out.join("opportunity.csv"))?;
    let mut header = vec!["node_id".to_string(), "slice".into(), "time".into(), "node".into(), "L".into()];
    header.extend((0..d).map(|j| format!("pi_{j}")));
    header.push("kappa".into());
    w.write_record(&header).map_err(csv_err)?;
    let mut id = 0usize;
    for k in 0..=lat.steps() {
        for i in 0..lat.slice(k).len() {
            let mut row = vec![id.to_string(), k.to_string(), num(lat.time(k)), i.to_string(), num(opp.ell[k][i])];
            row.extend(opp.pi(k, i).iter().map(|&v| num(v)));
            row.push(num(opp.kappa(k, i)));
            w.write_record(&row).map_err(csv_err)?;
            id += 1;
        }
    }
    w.flush().map_err(csv_err)?;

    let discrete = drift_identity_residual(&opp, lat, spec, &model.constraint, CharMode::Discrete)?;
    let moments = drift_identity_residual(&opp, lat, spec, &model.constraint, CharMode::Moments)?;
    let mut w = csv_writer(&out.join("drift_residual.csv"))?;
    w.write_record(["slice", "time", "node", "residual_discrete", "residual_moments"]).map_err(csv_err)?;
    for k in 0..lat.steps() {
        for i in 0..lat.slice(k).len() {
            w.write_record([k.to_string(), num(lat.time(k)), i.to_string(), num(discrete[k][i]), num(moments[k][i])])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)?;

    write_text(&out.join("candidate.json"), &CandidateFile::from_opportunity(&opp).to_json())?;
    let summary = SolveSummary {
        schema: "bp-summary/1",
        value0: opp.value0,
        l0: opp.l0(),
        strategy_at_root: root(&opp),
        steps: lat.steps(),
        nodes: lat.num_nodes(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Brute force over the model's grid next to the grid-restricted backward induction: oracle.json.
pub fn run_oracle(file: &ModelFile, out: &Path) -> Result<OracleSummary> {
    let model = file.build()?;
    let grid = model.grid.as_ref().ok_or_else(|| Error::Invalid("oracle needs a \"grid\" in the model".into()))?;
    let (value, strategy) = brute_force_oracle(&model.lattice, &model.spec, &model.constraint, grid)?;
    let dp = solve_tree_dp_grid(&model.lattice, &model.spec, &model.constraint, grid)?;
    let summary = OracleSummary {
        schema: "bp-oracle/1",
        value0: value,
        grid_dp_value0: dp.value0,
        abs_diff: (value - dp.value0).abs(),
        strategy_at_root: RootStrategy { pi: strategy.pi[0][0].iter().copied().collect(), kappa: strategy.kappa[0][0] },
    };
    write_json(&out.join("oracle.json"), &summary)?;
    Ok(summary)
}

/// Certificates for a candidate; the model's own solution serves as the minimality reference.
pub fn run_verify(file: &ModelFile, cand: &CandidateFile, tol: &Tolerances, out: &Path) -> Result<VerificationReport> {
    let model = file.build()?;
    let triple = cand.triple(&model.lattice, &model.spec)?;
    let reference = solve_tree_dp(&model.lattice, &model.spec, &model.constraint).ok();
    let opts = VerifyOptions { tolerances: tol.clone(), ..VerifyOptions::default() };
    let mut report = verify_all(&triple, &model.lattice, &model.spec, &model.constraint, &opts, reference.as_ref())?;
    if reference.is_none() {
        report.notes.push("minimality not checked: the model could not be solved".into());
    }
    write_json(&out.join("verify.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PhiFile {
    schema: &'static str,
    /// rows of the matrix whose columns are the new assets' portfolios
    phi: Vec<Vec<f64>>,
    represented: Vec<bool>,
}

/// Writes the transformed model (same file schema) and the portfolio matrix.
pub fn run_transform(file: &ModelFile, out: &Path) -> Result<TransformedModel> {
    let model = file.build()?;
    let chars = model
        .chars
        .as_ref()
        .ok_or_else(|| Error::Unsupported("the transform needs a characteristics model (b, c, atoms)".into()))?;
    let tm = transform_model(chars, &model.constraint)?;
    let ch = if tm.chars.cutoff == CutOff::Truncation { tm.chars.clone() } else { tm.chars.recut(CutOff::Truncation) };
    let d = ch.dim();
    let mut next = file.clone();
    next.b = Some(ch.b_r.iter().copied().collect());
    next.c = Some((0..d).map(|r| ch.c_r.row(r).iter().copied().collect()).collect());
    next.atoms =
        ch.active_atoms().map(|a| AtomSpec { x: a.x.iter().copied().collect(), xp: 0.0, w: a.weight }).collect();
    next.constraint = ConstraintSpec::from_set(&tm.constraint);
    next.grid = None;
    write_text(&out.join("transformed_model.json"), &next.to_json())?;
    let phi = PhiFile {
        schema: "bp-transform/1",
        phi: (0..tm.phi.nrows()).map(|r| tm.phi.row(r).iter().copied().collect()).collect(),
        represented: tm.represented.clone(),
    };
    write_json(&out.join("phi.json"), &phi)?;
    Ok(tm)
}

/// g at a portfolio for L = ell, with the maximizer over C: g_eval.json.
pub fn run_g_eval(file: &ModelFile, y: &[f64], ell: f64, seed: u64, out: &Path) -> Result<GEval> {
    let model = file.build()?;
    let chars = model
        .chars
        .clone()
        .ok_or_else(|| Error::Unsupported("g-eval needs a characteristics model (b, c, atoms)".into()))?;
    if y.len() != chars.dim() {
        return Err(Error::Shape(format!("--y has {} entries but d = {}", y.len(), chars.dim())));
    }
    let ctx = GContext::new(ell, chars, model.spec.p(), model.constraint.clone())?;
    let yv = DVector::from_column_slice(y);
    let g = eval_g(&ctx, &yv)?;
    let (maximizer, max_value, unbounded) = match maximize_g_with(&ctx, &MaxOptions { extra_starts: 4, seed }) {
        Ok((m, v)) => (Some(m.iter().copied().collect()), Some(v), false),
        Err(Error::Unbounded) => (None, None, true),
        Err(e) => return Err(e),
    };
    let result = GEval {
        schema: "bp-geval/1",
        ell,
        y: y.to_vec(),
        g: g.is_finite().then_some(g),
        gradient: ctx.gradient(&yv).map(|v| v.iter().copied().collect()),
        maximizer,
        max_value,
        unbounded,
    };
    write_json(&out.join("g_eval.json"), &result)?;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    P,
    Steps,
    Theta,
    Radius,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// NAME=v1,v2,...; an empty value list is allowed.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, values) =
            text.split_once('=').ok_or_else(|| Error::Invalid(format!("sweep \"{text}\" is not NAME=v1,v2,...")))?;
        let param = match name.trim() {
            "p" => SweepParam::P,
            "steps" => SweepParam::Steps,
            "theta" => SweepParam::Theta,
            "radius" => SweepParam::Radius,
            other => {
                return Err(Error::Invalid(format!(
                    "unknown sweep axis \"{other}\" (expected p, steps, theta, radius)"
                )))
            }
        };
        Ok(Self { param, values: parse_list(values)? })
    }

    fn name(&self) -> &'static str {
        match self.param {
            SweepParam::P => "p",
            SweepParam::Steps => "steps",
            SweepParam::Theta => "theta",
            SweepParam::Radius => "radius",
        }
    }
}

fn sweep_cell(file: &ModelFile, param: SweepParam, v: f64) -> Result<OpportunityLattice> {
    let mut f = file.clone();
    match param {
        SweepParam::P => f.p = v,
        SweepParam::Steps => {
            if !(v >= 1.0 && v.fract() == 0.0) {
                return Err(Error::Invalid(format!("steps must be a positive integer, got {v}")));
            }
            f.steps = Some(v as usize);
        }
        SweepParam::Theta => {
            let chars =
                f.characteristics()?.ok_or_else(|| Error::Invalid("theta sweeps need characteristics".into()))?;
            let sigma = linalg::psd_sqrt(&chars.c_r)?;
            let b = sigma * DVector::from_element(f.d, v);
            f.b = Some(b.iter().copied().collect());
        }
        SweepParam::Radius => f.constraint = ConstraintSpec::Ball { radius: v },
    }
    let model = f.build()?;
    solve_tree_dp(&model.lattice, &model.spec, &model.constraint)
}

/// One row per axis value (axis, value, L0, value0, root strategy, error); failing cells keep
/// their error message and the sweep goes on.
pub fn run_sweep(
    file: &ModelFile,
    axis: &SweepAxis,
    parallel: bool,
    out: &Path,
) -> Result<Vec<Result<OpportunityLattice>>> {
    let cells: Vec<Result<OpportunityLattice>> = if parallel {
        axis.values.par_iter().map(|&v| sweep_cell(file, axis.param, v)).collect()
    } else {
        axis.values.iter().map(|&v| sweep_cell(file, axis.param, v)).collect()
    };
    let d = file.d;
    let mut w = csv_writer(&out.join("sweep.csv"))?;
    let mut header = vec!["axis".to_string(), "value".into(), "L0".into(), "value0".into()];
    header.extend((0..d).map(|j| format!("pi_{j}")));
    header.extend(["kappa".to_string(), "error".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for (v, cell) in axis.values.iter().zip(&cells) {
        let mut row = vec![axis.name().to_string(), num(*v)];
        match cell {
            Ok(opp) => {
                row.push(num(opp.l0()));
                row.push(num(opp.value0));
                row.extend(opp.pi(0, 0).iter().map(|&x| num(x)));
                row.push(num(opp.kappa(0, 0)));
                row.push(String::new());
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), d + 3));
                row.push(e.to_string());
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    Ok(cells)
}
