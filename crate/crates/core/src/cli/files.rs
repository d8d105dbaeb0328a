//! JSON model and candidate files.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bellman::{OpportunityLattice, SolutionTriple, StrategyGrid};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::model::{
    build_lattice, BranchKind, ConsumptionMode, JointCharacteristics, MarketLattice, PowerUtilitySpec, Scheme,
    WeightPath,
};

pub const MODEL_SCHEMA: &str = "bp-model/1";
pub const CANDIDATE_SCHEMA: &str = "bp-candidate/1";

/// Largest tree produced by `"tree": true`.
const MAX_TREE_NODES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Terminal,
    Intermediate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Constant(f64),
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Constant(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub x: Vec<f64>,
    /// companion jump, ignored for the return characteristics
    #[serde(default)]
    pub xp: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BranchKindSpec {
    #[default]
    Diffusion,
    Jump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub x: Vec<f64>,
    pub prob: f64,
    #[serde(default)]
    pub kind: BranchKindSpec,
}

/// Explicit lattice with the same branch table at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub times: Vec<f64>,
    pub branches: Vec<BranchSpec>,
    #[serde(default)]
    pub tree: bool,
}

/// Constraint fragment; `null` box bounds are infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum ConstraintSpec {
    Box {
        lo: Vec<Option<f64>>,
        hi: Vec<Option<f64>>,
    },
    Ball {
        radius: f64,
    },
    Polyhedron {
        rows: Vec<Vec<f64>>,
        bounds: Vec<f64>,
    },
    Cone {
        rows: Vec<Vec<f64>>,
    },
    Finite {
        points: Vec<Vec<f64>>,
    },
    ScaledStar {
        points: Vec<Vec<f64>>,
    },
    #[default]
    Full,
}

fn matrix(rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(format!("constraint rows must have length {d}")));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
}

fn vector(v: &[f64], d: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != d {
        return Err(Error::Shape(format!("{what} has length {} but d = {d}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

impl ConstraintSpec {
    pub fn build(&self, d: usize) -> Result<ConstraintSet> {
        match self {
            ConstraintSpec::Full => Ok(ConstraintSet::full(d)),
            ConstraintSpec::Box { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return Err(Error::Shape(format!("box bounds must have length {d}")));
                }
                let lo = DVector::from_iterator(d, lo.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)));
                let hi = DVector::from_iterator(d, hi.iter().map(|v| v.unwrap_or(f64::INFINITY)));
                ConstraintSet::boxed(lo, hi)
            }
            ConstraintSpec::Ball { radius } => ConstraintSet::ball(d, *radius),
            ConstraintSpec::Polyhedron { rows, bounds } => {
                ConstraintSet::polyhedron(matrix(rows, d)?, vector(bounds, rows.len(), "bounds")?)
            }
            ConstraintSpec::Cone { rows } => Ok(ConstraintSet::cone(matrix(rows, d)?)),
            ConstraintSpec::Finite { points } => {
                ConstraintSet::finite(points.iter().map(|p| vector(p, d, "point")).collect::<Result<_>>()?)
            }
            ConstraintSpec::ScaledStar { points } => {
                ConstraintSet::scaled_star(points.iter().map(|p| vector(p, d, "point")).collect::<Result<_>>()?)
            }
        }
    }

    pub fn from_set(c: &ConstraintSet) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        let points = |ps: &[DVector<f64>]| ps.iter().map(|p| p.iter().copied().collect()).collect();
        let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
        match c {
            ConstraintSet::Full { .. } => ConstraintSpec::Full,
            ConstraintSet::Box { lo, hi } => ConstraintSpec::Box {
                lo: lo.iter().map(|v| finite(*v)).collect(),
                hi: hi.iter().map(|v| finite(*v)).collect(),
            },
            ConstraintSet::Ball { radius, .. } => ConstraintSpec::Ball { radius: *radius },
            ConstraintSet::Polyhedron { rows: a, bounds } => {
                ConstraintSpec::Polyhedron { rows: rows(a), bounds: bounds.iter().copied().collect() }
            }
            ConstraintSet::Cone { rows: a } => ConstraintSpec::Cone { rows: rows(a) },
            ConstraintSet::Finite { points: ps } => ConstraintSpec::Finite { points: points(ps) },
            ConstraintSet::ScaledStar { points: ps } => ConstraintSpec::ScaledStar { points: points(ps) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub pi: Vec<Vec<f64>>,
    #[serde(default = "zero_kappa")]
    pub kappa: Vec<f64>,
}

fn zero_kappa() -> Vec<f64> {
    vec![0.0]
}

fn one() -> f64 {
    1.0
}

/// Model file. Markets come either from characteristics (`b`, `c`, `atoms`, `steps`) or from
/// an explicit `lattice`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub p: f64,
    #[serde(rename = "D", default)]
    pub weight: WeightSpec,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default = "one")]
    pub x0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<AtomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// unfold the characteristics lattice into a tree
    #[serde(default, skip_serializing_if = "is_false")]
    pub tree: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
    #[serde(default)]
    pub constraint: ConstraintSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Everything a command needs, built from a model file.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: PowerUtilitySpec,
    pub lattice: MarketLattice,
    pub constraint: ConstraintSet,
    pub chars: Option<JointCharacteristics>,
    pub grid: Option<StrategyGrid>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("model file: {e}")))?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::Invalid(format!("model schema must be \"{MODEL_SCHEMA}\", got \"{}\"", file.schema)));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files serialize") + "\n"
    }

    pub fn spec(&self) -> Result<PowerUtilitySpec> {
        let weight = match &self.weight {
            WeightSpec::Constant(d) => WeightPath::Constant(*d),
            WeightSpec::Tabulated { times, values } => {
                WeightPath::Tabulated { times: times.clone(), values: values.clone() }
            }
        };
        let mode = match self.mode {
            ModeSpec::Terminal => ConsumptionMode::TerminalOnly,
            ModeSpec::Intermediate => ConsumptionMode::Intermediate,
        };
        PowerUtilitySpec::new(self.p, weight, mode, self.x0, self.horizon)
    }

    /// Return characteristics, when the model gives them.
    pub fn characteristics(&self) -> Result<Option<JointCharacteristics>> {
        let (Some(b), Some(c)) = (&self.b, &self.c) else {
            if self.b.is_some() || self.c.is_some() || !self.atoms.is_empty() {
                return Err(Error::Invalid("characteristics need both b and c".into()));
            }
            return Ok(None);
        };
        let d = self.d;
        let b = vector(b, d, "b")?;
        if c.len() != d {
            return Err(Error::Shape(format!("c must be {d} x {d}")));
        }
        let c = matrix(c, d)?;
        let atoms = self.atoms.iter().map(|a| Ok((vector(&a.x, d, "atom")?, a.w))).collect::<Result<Vec<_>>>()?;
        JointCharacteristics::returns_only(b, c, atoms).map(Some)
    }

    pub fn build(&self) -> Result<Model> {
        let spec = self.spec()?;
        let chars = self.characteristics()?;
        let lattice = match (&self.lattice, &chars) {
            (Some(_), Some(_)) => {
                return Err(Error::Invalid("give either characteristics or a lattice, not both".into()))
            }
            (None, None) => return Err(Error::Invalid("model needs characteristics (b, c) or a lattice".into())),
            (Some(l), None) => {
                if (l.times.last().copied().unwrap_or(0.0) - self.horizon).abs() > 1e-12 * self.horizon {
                    return Err(Error::Invalid("lattice times must end at T".into()));
                }
                let branches = l
                    .branches
                    .iter()
                    .map(|b| {
                        let kind = match b.kind {
                            BranchKindSpec::Diffusion => BranchKind::Diffusion,
                            BranchKindSpec::Jump => BranchKind::Jump,
                        };
                        Ok((vector(&b.x, self.d, "branch")?, b.prob, kind))
                    })
                    .collect::<Result<Vec<_>>>()?;
                MarketLattice::iid(self.d, l.times.clone(), &branches, l.tree)?
            }
            (None, Some(ch)) => {
                let steps = self.steps.ok_or_else(|| Error::Invalid("characteristics need \"steps\"".into()))?;
                let scheme = self.scheme.unwrap_or(if self.d == 1 { Scheme::Binomial } else { Scheme::Multinomial });
                let lattice = build_lattice(ch, self.horizon, steps, scheme)?;
                if self.tree {
                    lattice.expand_tree(MAX_TREE_NODES)?
                } else {
                    lattice
                }
            }
        };
        let constraint = self.constraint.build(self.d)?;
        let grid = match &self.grid {
            Some(g) => Some(StrategyGrid::new(
                g.pi.iter().map(|p| vector(p, self.d, "grid point")).collect::<Result<_>>()?,
                g.kappa.clone(),
            )?),
            None => None,
        };
        Ok(Model { spec, lattice, constraint, chars, grid })
    }
}

/// Candidate file: values, portfolios and propensities per slice and node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFile {
    pub schema: String,
    pub ell: Vec<Vec<f64>>,
    pub pi: Vec<Vec<Vec<f64>>>,
    pub kappa: Vec<Vec<f64>>,
}

impl CandidateFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: CandidateFile =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("candidate file: {e}")))?;
        if file.schema != CANDIDATE_SCHEMA {
            return Err(Error::Invalid(format!(
                "candidate schema must be \"{CANDIDATE_SCHEMA}\", got \"{}\"",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn from_opportunity(opp: &OpportunityLattice) -> Self {
        Self {
            schema: CANDIDATE_SCHEMA.into(),
            ell: opp.ell.clone(),
            pi: opp.strategy.pi.iter().map(|row| row.iter().map(|v| v.iter().copied().collect()).collect()).collect(),
            kappa: opp.strategy.kappa.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("candidate files serialize") + "\n"
    }

    /// Shape check with a per-slice summary of any mismatch, then the triple.
    pub fn triple(&self, lattice: &MarketLattice, spec: &PowerUtilitySpec) -> Result<SolutionTriple> {
        let want: Vec<usize> = lattice.slices().iter().map(|s| s.len()).collect();
        let have_ell: Vec<usize> = self.ell.iter().map(|r| r.len()).collect();
        let have_pi: Vec<usize> = self.pi.iter().map(|r| r.len()).collect();
        let have_kappa: Vec<usize> = self.kappa.iter().map(|r| r.len()).collect();
        let mut diffs = Vec::new();
        for (name, have) in [("ell", &have_ell), ("pi", &have_pi), ("kappa", &have_kappa)] {
            if have.len() != want.len() {
                diffs.push(format!("{name} has {} slices, lattice has {}", have.len(), want.len()));
            } else if let Some(k) = (0..want.len()).find(|&k| have[k] != want[k]) {
                diffs.push(format!("{name} has {} nodes at slice {k}, lattice has {}", have[k], want[k]));
            }
        }
        if let Some((k, i)) = self
            .pi
            .iter()
            .enumerate()
            .flat_map(|(k, r)| r.iter().enumerate().map(move |(i, v)| (k, i, v.len())))
            .find(|(_, _, n)| *n != lattice.dim())
            .map(|(k, i, _)| (k, i))
        {
            diffs.push(format!("pi at slice {k}, node {i} does not have length {}", lattice.dim()));
        }
        if !diffs.is_empty() {
            return Err(Error::Shape(format!("candidate does not match the lattice: {}", diffs.join("; "))));
        }
        let pi = self.pi.iter().map(|r| r.iter().map(|v| DVector::from_column_slice(v)).collect()).collect();
        SolutionTriple::new(lattice, spec, self.ell.clone(), pi, self.kappa.clone())
    }
}
