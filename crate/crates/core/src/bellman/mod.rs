//! Opportunity process on a lattice: backward induction, the brute-force oracle,
//! drift-identity residuals, martingale decomposition and the deterministic ODE reductions.

mod drift;
mod node;
mod ode;
mod oracle;
mod triple;

pub use drift::{
    decompose_martingale_part, drift_identity_residual, empirical_characteristics, CharMode, NodeDecomposition,
};
pub use node::{NodeProblem, StrategyGrid};
pub use ode::{solve_deterministic_ito, solve_levy_ode, OdePath, ODE_STEPS};
pub use oracle::{brute_force_oracle, ORACLE_BUDGET};
pub use triple::{compare_solution_to_oracle, MinimalityReport, SolutionTriple};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::model::{MarketLattice, PowerUtilitySpec, Strategy};

/// L at every node, the optimal strategy, and the value u(x0) = L0 x0^p / p.
#[derive(Debug, Clone, PartialEq)]
pub struct OpportunityLattice {
    pub ell: Vec<Vec<f64>>,
    pub strategy: Strategy,
    pub value0: f64,
}

impl OpportunityLattice {
    pub fn l0(&self) -> f64 {
        self.ell[0][0]
    }

    pub fn pi(&self, k: usize, i: usize) -> &DVector<f64> {
        &self.strategy.pi[k][i]
    }

    pub fn kappa(&self, k: usize, i: usize) -> f64 {
        self.strategy.kappa[k][i]
    }
}

/// Backward induction with continuous portfolio choice over C.
pub fn solve_tree_dp(
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
) -> Result<OpportunityLattice> {
    backward(lattice, spec, c, None)
}

/// Backward induction restricted to a finite strategy grid (portfolios filtered by C).
pub fn solve_tree_dp_grid(
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    grid: &StrategyGrid,
) -> Result<OpportunityLattice> {
    backward(lattice, spec, c, Some(&grid.restrict(c)?))
}

fn backward(
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    grid: Option<&StrategyGrid>,
) -> Result<OpportunityLattice> {
    if c.dim() != lattice.dim() {
        return Err(Error::Shape(format!("constraint dimension {} vs lattice dimension {}", c.dim(), lattice.dim())));
    }
    let n = lattice.steps();
    let d = lattice.dim();
    let mut ell: Vec<Vec<f64>> = lattice.slices().iter().map(|s| vec![0.0; s.len()]).collect();
    let mut pi: Vec<Vec<DVector<f64>>> = lattice.slices().iter().map(|s| vec![DVector::zeros(d); s.len()]).collect();
    let mut kappa: Vec<Vec<f64>> = lattice.slices().iter().map(|s| vec![0.0; s.len()]).collect();
    let terminal = spec.terminal_weight();
    ell[n].iter_mut().for_each(|l| *l = terminal);
    kappa[n].iter_mut().for_each(|k| *k = 1.0);
    for k in (0..n).rev() {
        let next = &ell[k + 1];
        let results: Vec<Result<(DVector<f64>, f64, f64)>> = lattice
            .slice(k)
            .par_iter()
            .enumerate()
            .map(|(i, node)| {
                let problem =
                    NodeProblem::new(node, next, spec.weight_at(lattice.time(k)), lattice.dmu(spec, k), spec.p())?;
                let out = match grid {
                    Some(g) => problem.solve_grid(g),
                    None => problem.solve(c),
                };
                out.map_err(|e| match e {
                    Error::Unbounded => {
                        Error::InfiniteValue { slice: k, node: i, reason: "node objective is unbounded".into() }
                    }
                    Error::InfiniteValue { reason, .. } => Error::InfiniteValue { slice: k, node: i, reason },
                    other => other,
                })
            })
            .collect();
        for (i, r) in results.into_iter().enumerate() {
            let (p_i, k_i, l_i) = r?;
            pi[k][i] = p_i;
            kappa[k][i] = k_i;
            ell[k][i] = l_i;
        }
    }
    let value0 = ell[0][0] * spec.x0().powf(spec.p()) / spec.p();
    Ok(OpportunityLattice { ell, strategy: Strategy { pi, kappa }, value0 })
}
