use nalgebra::{DMatrix, DVector};

use crate::bellman::{empirical_characteristics, CharMode, NodeProblem, SolutionTriple};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::gfun::{directional_g, GContext};
use crate::model::{wealth_path, CutOff, JointCharacteristics, JumpAtom, MarketLattice, PowerUtilitySpec, Strategy};

const ZERO_FACTOR: f64 = 1e-13;

pub(crate) fn node_problem(
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    ell: &[Vec<f64>],
    k: usize,
    i: usize,
) -> Result<NodeProblem> {
    NodeProblem::new(lattice.node(k, i), &ell[k + 1], spec.weight_at(lattice.time(k)), lattice.dmu(spec, k), spec.p())
}

/// One-step drift of Z per unit of X^p; `None` when the strategy is not admissible at the node.
pub(crate) fn z_drift(problem: &NodeProblem, ell: f64, pi: &DVector<f64>, kappa: f64) -> Option<f64> {
    problem.objective(pi, kappa).map(|v| v - ell / problem.p)
}

/// One-step drift of Gamma per unit of the candidate's X^(p-1) X.
pub(crate) fn gamma_drift(
    problem: &NodeProblem,
    ell: f64,
    pi_check: &DVector<f64>,
    kappa_check: f64,
    pi: &DVector<f64>,
    kappa: f64,
) -> Option<f64> {
    let p = problem.p;
    let mut total = kappa * ell * problem.dmu - ell;
    for (j, x) in problem.increments.iter().enumerate() {
        let a = 1.0 + pi.dot(x) - kappa * problem.dmu;
        let a_check = 1.0 + pi_check.dot(x) - kappa_check * problem.dmu;
        if a < -ZERO_FACTOR {
            return None;
        }
        if problem.probs[j] == 0.0 {
            continue;
        }
        if !(a_check > 0.0) {
            return None;
        }
        total += problem.probs[j] * problem.ell_next[j] * a_check.powf(p - 1.0) * a.max(0.0);
    }
    Some(total)
}

/// Z = ell X^p / p plus the utility consumed at earlier nodes, along every path of a tree.
pub fn z_path(
    ell: &[Vec<f64>],
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    strategy: &Strategy,
) -> Result<Vec<Vec<f64>>> {
    check_table(ell, lattice)?;
    let x = wealth_path(lattice, spec, strategy)?;
    let p = spec.p();
    let mut consumed: Vec<Vec<f64>> = lattice.slices().iter().map(|s| vec![0.0; s.len()]).collect();
    for k in 0..lattice.steps() {
        let dmu = lattice.dmu(spec, k);
        let t = lattice.time(k);
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let u = if dmu > 0.0 { spec.utility_at(t, strategy.kappa[k][i] * x[k][i]) * dmu } else { 0.0 };
            for b in &node.branches {
                consumed[k + 1][b.child] = consumed[k][i] + u;
            }
        }
    }
    Ok(ell
        .iter()
        .zip(&x)
        .zip(&consumed)
        .map(|((lr, xr), cr)| lr.iter().zip(xr).zip(cr).map(|((l, x), c)| l * x.powf(p) / p + c).collect())
        .collect())
}

/// Gamma = X Y + sum kappa X Y dmu with Y = ell X_check^(p-1), along every path of a tree.
pub fn gamma_path(
    ell: &[Vec<f64>],
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    check: &Strategy,
    strategy: &Strategy,
) -> Result<Vec<Vec<f64>>> {
    check_table(ell, lattice)?;
    let x_check = wealth_path(lattice, spec, check)?;
    let x = wealth_path(lattice, spec, strategy)?;
    let p = spec.p();
    let deflator = |k: usize, i: usize| ell[k][i] * x_check[k][i].powf(p - 1.0);
    let mut acc: Vec<Vec<f64>> = lattice.slices().iter().map(|s| vec![0.0; s.len()]).collect();
    for k in 0..lattice.steps() {
        let dmu = lattice.dmu(spec, k);
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let add = strategy.kappa[k][i] * x[k][i] * deflator(k, i) * dmu;
            for b in &node.branches {
                acc[k + 1][b.child] = acc[k][i] + add;
            }
        }
    }
    Ok((0..ell.len()).map(|k| (0..ell[k].len()).map(|i| x[k][i] * deflator(k, i) + acc[k][i]).collect()).collect())
}

/// Max over path steps of |direct increment of xi - sum of its decomposition terms|,
/// xi = ell X_check^(p-1) X.
pub fn xi_decomposition_check(
    ell: &[Vec<f64>],
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    check: &Strategy,
    competitor: &Strategy,
) -> Result<f64> {
    check_table(ell, lattice)?;
    let x_check = wealth_path(lattice, spec, check)?;
    let x = wealth_path(lattice, spec, competitor)?;
    let p = spec.p();
    let xi = |k: usize, i: usize| ell[k][i] * x_check[k][i].powf(p - 1.0) * x[k][i];
    let mut worst: f64 = 0.0;
    for k in 0..lattice.steps() {
        let dmu = lattice.dmu(spec, k);
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let (pc, kc) = (&check.pi[k][i], check.kappa[k][i]);
            let (pi, kappa) = (&competitor.pi[k][i], competitor.kappa[k][i]);
            let pi_bar = pc * (p - 1.0) + pi;
            let kappa_bar = (p - 1.0) * kc + kappa;
            let scale = x_check[k][i].powf(p - 1.0) * x[k][i];
            let l = ell[k][i];
            for b in &node.branches {
                let l_next = ell[k + 1][b.child];
                let dl = l_next - l;
                let linear = pi_bar.dot(&b.increment) - kappa_bar * dmu;
                let a_check = 1.0 + pc.dot(&b.increment) - kc * dmu;
                let a = 1.0 + pi.dot(&b.increment) - kappa * dmu;
                let terms = [
                    dl,
                    l * pi_bar.dot(&b.increment),
                    -l * kappa_bar * dmu,
                    dl * linear,
                    l_next * (a_check.powf(p - 1.0) * a - 1.0 - linear),
                ];
                let direct = xi(k + 1, b.child) - xi(k, i);
                let summed: f64 = scale * terms.iter().sum::<f64>();
                worst = worst.max((direct - summed).abs());
            }
        }
    }
    Ok(worst)
}

/// Outcome of the exponential representation check.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiCheck {
    /// max relative gap between ell X^p / p and Z0 E(Psi) prod(1 - kappa dmu)
    pub max_residual: f64,
    /// max |E[dPsi | node]|
    pub martingale_residual: f64,
    pub min_exponential: f64,
    /// smallest prod(1 - kappa dmu) factor; at most 1
    pub min_discount: f64,
    /// E(Psi) > 0 at every node
    pub positive: bool,
    /// dPsi per slice, node and branch
    pub increments: Vec<Vec<Vec<f64>>>,
}

/// ell X^p / p = Z0 E(Psi) prod(1 - kappa dmu) with dPsi = (ell_+/ell) a^p / (1 - kappa dmu) - 1.
pub fn psi_exponential_check(
    cand: &SolutionTriple,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
) -> Result<PsiCheck> {
    let strategy = cand.strategy();
    let x = wealth_path(lattice, spec, &strategy)?;
    let p = spec.p();
    let z0 = cand.ell[0][0] * spec.x0().powf(p) / p;
    let mut expo: Vec<Vec<f64>> = lattice.slices().iter().map(|s| vec![1.0; s.len()]).collect();
    let mut disc = expo.clone();
    let mut increments = Vec::with_capacity(lattice.steps());
    let mut martingale_residual: f64 = 0.0;
    for k in 0..lattice.steps() {
        let dmu = lattice.dmu(spec, k);
        let mut row = Vec::with_capacity(lattice.slice(k).len());
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let (pi, kappa) = (&cand.pi_check[k][i], cand.kappa_check[k][i]);
            let keep = 1.0 - kappa * dmu;
            let l = cand.ell[k][i];
            let mut drift = 0.0;
            let mut inc = Vec::with_capacity(node.branches.len());
            for b in &node.branches {
                let a = 1.0 + pi.dot(&b.increment) - kappa * dmu;
                let d_psi = cand.ell[k + 1][b.child] / l * a.powf(p) / keep - 1.0;
                drift += b.prob * d_psi;
                expo[k + 1][b.child] = expo[k][i] * (1.0 + d_psi);
                disc[k + 1][b.child] = disc[k][i] * keep;
                inc.push(d_psi);
            }
            martingale_residual = martingale_residual.max(drift.abs());
            row.push(inc);
        }
        increments.push(row);
    }
    let mut max_residual: f64 = 0.0;
    for k in 0..=lattice.steps() {
        for i in 0..lattice.slice(k).len() {
            let lhs = cand.ell[k][i] * x[k][i].powf(p) / p;
            let rhs = z0 * expo[k][i] * disc[k][i];
            max_residual = max_residual.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
    }
    let min_exponential = expo.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    Ok(PsiCheck {
        max_residual,
        martingale_residual,
        min_exponential,
        min_discount: disc.iter().flatten().copied().fold(1.0, f64::min),
        positive: min_exponential > 0.0,
        increments,
    })
}

/// One-step g at node (k, i) in portfolio units: atoms dR / a0 with weights prob a0^p / dt,
/// where a0 = 1 - kappa dmu is the wealth kept after consumption.
pub fn one_step_context(
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    ell: &[Vec<f64>],
    k: usize,
    i: usize,
    kappa: f64,
    c: &ConstraintSet,
) -> Result<GContext> {
    let d = lattice.dim();
    let dt = lattice.dt(k);
    let a0 = 1.0 - kappa * lattice.dmu(spec, k);
    if !(a0 > 0.0) {
        return Err(Error::Domain(format!("consumption exhausts wealth at slice {k}, node {i}")));
    }
    let p = spec.p();
    let atoms = lattice
        .node(k, i)
        .branches
        .iter()
        .filter(|b| b.prob > 0.0)
        .map(|b| JumpAtom {
            x: &b.increment / a0,
            x_l: ell[k + 1][b.child] - ell[k][i],
            weight: b.prob * a0.powf(p) / dt,
        })
        .collect();
    let chars = JointCharacteristics {
        b_r: DVector::zeros(d),
        a_l: 0.0,
        c_r: DMatrix::zeros(d, d),
        c_rl: DVector::zeros(d),
        c_l: None,
        atoms,
        d_a: 1.0,
        cutoff: CutOff::Zero,
    };
    GContext::new(ell[k][i], chars, p, c.clone())
}

/// Per node: (E[dGamma]/dt, G(pi, pi_check)) with G built from the moment characteristics of (dR, dL).
pub fn gamma_drift_vs_g(
    cand: &SolutionTriple,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    competitor: &Strategy,
) -> Result<Vec<Vec<(f64, f64)>>> {
    competitor.check_shape(lattice)?;
    let mut out = Vec::with_capacity(lattice.steps());
    for k in 0..lattice.steps() {
        let dt = lattice.dt(k);
        let mut row = Vec::with_capacity(lattice.slice(k).len());
        for i in 0..lattice.slice(k).len() {
            let problem = node_problem(lattice, spec, &cand.ell, k, i)?;
            let ell = cand.ell[k][i];
            let (pc, kc) = (&cand.pi_check[k][i], cand.kappa_check[k][i]);
            let (pi, kappa) = (&competitor.pi[k][i], competitor.kappa[k][i]);
            let empirical = gamma_drift(&problem, ell, pc, kc, pi, kappa).ok_or_else(|| {
                Error::Domain(format!("competitor or candidate wealth vanishes at slice {k}, node {i}"))
            })? / dt;
            let chars = empirical_characteristics(lattice, k, i, ell, &cand.ell[k + 1], CharMode::Moments)?;
            let ctx = GContext::new(ell, chars, spec.p(), c.clone())?;
            row.push((empirical, directional_g(&ctx, pi, pc)?));
        }
        out.push(row);
    }
    Ok(out)
}

fn check_table(ell: &[Vec<f64>], lattice: &MarketLattice) -> Result<()> {
    if ell.len() != lattice.slices().len() || ell.iter().zip(lattice.slices()).any(|(r, s)| r.len() != s.len()) {
        return Err(Error::Shape("value table does not match the lattice".into()));
    }
    if let Some(l) = ell.iter().flatten().find(|l| !(**l > 0.0)) {
        return Err(Error::Domain(format!("candidate value {l} is not positive")));
    }
    Ok(())
}
