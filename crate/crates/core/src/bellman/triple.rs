use nalgebra::DVector;
use serde::Serialize;

use super::{NodeProblem, OpportunityLattice};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::model::{MarketLattice, PowerUtilitySpec, Strategy};

const TERMINAL_TOL: f64 = 1e-12;
const MINIMALITY_TOL: f64 = 1e-9;

/// Candidate opportunity process with its associated strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTriple {
    pub ell: Vec<Vec<f64>>,
    pub pi_check: Vec<Vec<DVector<f64>>>,
    pub kappa_check: Vec<Vec<f64>>,
}

impl SolutionTriple {
    pub fn new(
        lattice: &MarketLattice,
        spec: &PowerUtilitySpec,
        ell: Vec<Vec<f64>>,
        pi_check: Vec<Vec<DVector<f64>>>,
        kappa_check: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let triple = Self { ell, pi_check, kappa_check };
        triple.strategy().check_shape(lattice)?;
        if triple.ell.len() != lattice.slices().len()
            || triple.ell.iter().zip(lattice.slices()).any(|(row, s)| row.len() != s.len())
        {
            return Err(Error::Shape("candidate table does not match the lattice".into()));
        }
        if triple.ell.iter().flatten().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Domain("candidate must be positive and finite".into()));
        }
        let d_t = spec.terminal_weight();
        let n = lattice.steps();
        if triple.ell[n].iter().any(|l| (l - d_t).abs() > TERMINAL_TOL * d_t) {
            return Err(Error::Invalid(format!("candidate violates the terminal condition L_T = {d_t}")));
        }
        if triple.kappa_check[n].iter().any(|k| *k != 1.0) {
            return Err(Error::Invalid("terminal propensity to consume must be 1".into()));
        }
        Ok(triple)
    }

    /// Strategy associated with a candidate: kappa = (D/ell)^beta and the one-step optimal portfolio.
    pub fn from_ell(
        lattice: &MarketLattice,
        spec: &PowerUtilitySpec,
        c: &ConstraintSet,
        ell: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = lattice.steps();
        let mut pi: Vec<Vec<DVector<f64>>> = Vec::with_capacity(n + 1);
        let mut kappa: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        for k in 0..n {
            let t = lattice.time(k);
            let mut prow = Vec::new();
            let mut krow = Vec::new();
            for (i, node) in lattice.slice(k).iter().enumerate() {
                let l = ell[k][i];
                if !(l > 0.0) {
                    return Err(Error::Domain(format!("candidate value {l} at slice {k}, node {i}")));
                }
                let kc = (spec.weight_at(t) / l).powf(spec.beta());
                let problem = NodeProblem::new(node, &ell[k + 1], spec.weight_at(t), lattice.dmu(spec, k), spec.p())?;
                prow.push(problem.portfolio_step(c, kc)?);
                krow.push(kc);
            }
            pi.push(prow);
            kappa.push(krow);
        }
        pi.push(vec![DVector::zeros(lattice.dim()); lattice.slice(n).len()]);
        kappa.push(vec![1.0; lattice.slice(n).len()]);
        Self::new(lattice, spec, ell, pi, kappa)
    }

    /// The DP solution with kappa recomputed from the node values.
    pub fn from_opportunity(
        opp: &OpportunityLattice,
        lattice: &MarketLattice,
        spec: &PowerUtilitySpec,
    ) -> Result<Self> {
        let n = lattice.steps();
        let kappa = opp
            .ell
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .map(|l| if k == n { 1.0 } else { (spec.weight_at(lattice.time(k)) / l).powf(spec.beta()) })
                    .collect()
            })
            .collect();
        Self::new(lattice, spec, opp.ell.clone(), opp.strategy.pi.clone(), kappa)
    }

    /// Candidate with every non-terminal value multiplied by `factor` and the strategy recomputed.
    pub fn scaled(
        &self,
        lattice: &MarketLattice,
        spec: &PowerUtilitySpec,
        c: &ConstraintSet,
        factor: f64,
    ) -> Result<Self> {
        let n = lattice.steps();
        let ell = self
            .ell
            .iter()
            .enumerate()
            .map(|(k, row)| row.iter().map(|l| if k == n { *l } else { l * factor }).collect())
            .collect();
        Self::from_ell(lattice, spec, c, ell)
    }

    pub fn strategy(&self) -> Strategy {
        Strategy { pi: self.pi_check.clone(), kappa: self.kappa_check.clone() }
    }
}

/// Minimality check of a candidate against the computed opportunity process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityReport {
    /// max over nodes of L - ell (positive means the candidate lies below L somewhere)
    pub max_violation: f64,
    pub max_abs_diff: f64,
    /// ell >= L - 1e-9 everywhere
    pub holds: bool,
    /// ell equals L within 1e-9
    pub identical: bool,
}

pub fn compare_solution_to_oracle(cand: &SolutionTriple, opp: &OpportunityLattice) -> Result<MinimalityReport> {
    if cand.ell.len() != opp.ell.len() || cand.ell.iter().zip(&opp.ell).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::Shape("candidate and opportunity process live on different lattices".into()));
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_abs_diff: f64 = 0.0;
    for (a, b) in cand.ell.iter().flatten().zip(opp.ell.iter().flatten()) {
        max_violation = max_violation.max(b - a);
        max_abs_diff = max_abs_diff.max((a - b).abs());
    }
    Ok(MinimalityReport {
        max_violation,
        max_abs_diff,
        holds: max_violation <= MINIMALITY_TOL,
        identical: max_abs_diff <= MINIMALITY_TOL,
    })
}
