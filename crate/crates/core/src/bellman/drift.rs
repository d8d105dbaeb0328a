use nalgebra::{DMatrix, DVector};

use super::OpportunityLattice;
use crate::constraints::ConstraintSet;
use crate::error::Result;
use crate::gfun::{maximize_g, GContext};
use crate::linalg;
use crate::model::{
    eval_conjugate, BranchKind, CutOff, JointCharacteristics, JumpAtom, MarketLattice, PowerUtilitySpec,
};

/// How a node's branch distribution is turned into differential characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CharMode {
    /// every branch is a jump atom; exact for the one-step problem
    #[default]
    Discrete,
    /// diffusion branches give drift and covariance, jump branches stay atoms
    Moments,
}

/// Characteristics of (dR, dL) per unit time at node (k, i); `ell_next` is the next slice of L.
pub fn empirical_characteristics(
    lattice: &MarketLattice,
    k: usize,
    i: usize,
    ell_node: f64,
    ell_next: &[f64],
    mode: CharMode,
) -> Result<JointCharacteristics> {
    let d = lattice.dim();
    let dt = lattice.dt(k);
    let node = lattice.node(k, i);
    let h = CutOff::Truncation;
    let mut atoms = Vec::new();
    let mut b = DVector::zeros(d);
    let mut c_r = DMatrix::zeros(d, d);
    let mut c_rl = DVector::zeros(d);
    let mut c_l = 0.0;
    let mut a_l = 0.0;
    let diffusive: Vec<usize> = match mode {
        CharMode::Discrete => Vec::new(),
        CharMode::Moments => {
            (0..node.branches.len()).filter(|&j| node.branches[j].kind == BranchKind::Diffusion).collect()
        }
    };
    for (j, br) in node.branches.iter().enumerate() {
        let dl = ell_next[br.child] - ell_node;
        a_l += br.prob * dl / dt;
        if diffusive.contains(&j) || br.prob == 0.0 {
            continue;
        }
        let w = br.prob / dt;
        b += h.apply(&br.increment) * w;
        a_l -= w * dl;
        if br.increment.iter().any(|v| *v != 0.0) || dl != 0.0 {
            atoms.push(JumpAtom { x: br.increment.clone(), x_l: dl, weight: w });
        }
    }
    let mass: f64 = diffusive.iter().map(|&j| node.branches[j].prob).sum();
    if mass > 0.0 {
        let mut mean_r = DVector::zeros(d);
        let mut mean_l = 0.0;
        for &j in &diffusive {
            let br = &node.branches[j];
            mean_r += &br.increment * (br.prob / mass);
            mean_l += (ell_next[br.child] - ell_node) * br.prob / mass;
        }
        b += &mean_r * (mass / dt);
        for &j in &diffusive {
            let br = &node.branches[j];
            let dr = &br.increment - &mean_r;
            let dl = ell_next[br.child] - ell_node - mean_l;
            let w = br.prob / dt;
            c_r += &dr * dr.transpose() * w;
            c_rl += &dr * (dl * w);
            c_l += dl * dl * w;
        }
    }
    let chars = JointCharacteristics {
        b_r: b,
        a_l,
        c_r: linalg::symmetrize(&c_r),
        c_rl,
        c_l: Some(c_l),
        atoms,
        d_a: 1.0,
        cutoff: h,
    };
    chars.validate()?;
    Ok(chars)
}

/// E[dL]/dt + p (U*(L) dmu/dt + max g) at every non-terminal node.
pub fn drift_identity_residual(
    opp: &OpportunityLattice,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    mode: CharMode,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(lattice.steps());
    for k in 0..lattice.steps() {
        let t = lattice.time(k);
        let dt = lattice.dt(k);
        let mut row = Vec::with_capacity(lattice.slice(k).len());
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let ell = opp.ell[k][i];
            let chars = empirical_characteristics(lattice, k, i, ell, &opp.ell[k + 1], mode)?;
            let (_, g_max) = maximize_g(&GContext::new(ell, chars, spec.p(), c.clone())?)?;
            let mean_dl: f64 = node.branches.iter().map(|b| b.prob * (opp.ell[k + 1][b.child] - ell)).sum();
            let consume = if spec.consumes() { eval_conjugate(spec, t, ell)? } else { 0.0 };
            row.push(mean_dl / dt + spec.p() * (consume + g_max));
        }
        out.push(row);
    }
    Ok(out)
}

/// Decomposition of dL at one node into drift, a part spanned by dR and an orthogonal remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecomposition {
    /// E[dL] / dt
    pub a_l: f64,
    /// regression coefficients of the centered dL on the centered dR
    pub phi: DVector<f64>,
    /// (branch index, centered dL) on jump branches
    pub jumps: Vec<(usize, f64)>,
    /// orthogonal remainder dN per branch
    pub residual: Vec<f64>,
    /// the centered increments do not span R^d, so phi is the minimum-norm solution
    pub rank_deficient: bool,
}

pub fn decompose_martingale_part(opp: &OpportunityLattice, lattice: &MarketLattice) -> Vec<Vec<NodeDecomposition>> {
    let d = lattice.dim();
    (0..lattice.steps())
        .map(|k| {
            let dt = lattice.dt(k);
            lattice
                .slice(k)
                .iter()
                .enumerate()
                .map(|(i, node)| {
                    let ell = opp.ell[k][i];
                    let dl: Vec<f64> = node.branches.iter().map(|b| opp.ell[k + 1][b.child] - ell).collect();
                    let mean_l: f64 = node.branches.iter().zip(&dl).map(|(b, l)| b.prob * l).sum();
                    let mean_r = node.mean_increment();
                    let mut gram = DMatrix::zeros(d, d);
                    let mut rhs = DVector::zeros(d);
                    for (b, l) in node.branches.iter().zip(&dl) {
                        let r = &b.increment - &mean_r;
                        gram += &r * r.transpose() * b.prob;
                        rhs += &r * ((l - mean_l) * b.prob);
                    }
                    let rank_deficient = !linalg::kernel_basis(&gram, d).is_empty();
                    let (phi, _) = linalg::min_norm_solve(&gram, &rhs);
                    let residual = node
                        .branches
                        .iter()
                        .zip(&dl)
                        .map(|(b, l)| l - mean_l - phi.dot(&(&b.increment - &mean_r)))
                        .collect();
                    let jumps = node
                        .branches
                        .iter()
                        .zip(&dl)
                        .enumerate()
                        .filter(|(_, (b, _))| b.kind == BranchKind::Jump)
                        .map(|(j, (_, l))| (j, l - mean_l))
                        .collect();
                    NodeDecomposition { a_l: mean_l / dt, phi, jumps, residual, rank_deficient }
                })
                .collect()
        })
        .collect()
}
