//! Optimality certificates for candidate solutions on lattices: supermartingale checks of
//! the value and deflator processes against competitor grids, the gradient criterion, the
//! xi decomposition and the exponential representation.
//!
//! Drifts are one-step conditional expectations per unit of the relevant wealth power, so
//! the node-local checks also run on recombining lattices; path values need trees.

mod paths;

pub use paths::{
    gamma_drift_vs_g, gamma_path, one_step_context, psi_exponential_check, xi_decomposition_check, z_path, PsiCheck,
};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::{compare_solution_to_oracle, NodeProblem, OpportunityLattice, SolutionTriple, StrategyGrid};
use crate::constraints::{ConstraintSet, Membership, NaturalConstraints};
use crate::error::{Error, Result};
use crate::gfun::{directional_g, GContext};
use crate::model::{MarketLattice, PowerUtilitySpec, Strategy};
use paths::{gamma_drift, node_problem, z_drift};

pub const TOL_MART: f64 = 1e-9;
pub const TOL_OPT: f64 = 1e-8;
pub const REPORT_SCHEMA: &str = "bp-verify/1";

const CLASS_D_NOTE: &str =
    "finite lattice: every adapted process takes finitely many values, so the class (D) conditions hold trivially";

/// Deterministic competitor set built per node.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetitorGrid {
    /// grid points per portfolio coordinate
    pub per_coord: usize,
    /// consumption propensities from 0 to twice the candidate's
    pub kappa_values: usize,
    /// cap on portfolio grid points per node
    pub max_points: usize,
    /// half-width used where neither C nor the natural constraints bound a coordinate
    pub span: f64,
    /// add small moves of the candidate's own choice
    pub perturb: bool,
    pub extra: Option<StrategyGrid>,
}

impl Default for CompetitorGrid {
    fn default() -> Self {
        Self { per_coord: 11, kappa_values: 5, max_points: 2000, span: 10.0, perturb: true, extra: None }
    }
}

impl CompetitorGrid {
    /// Only the strategies of an explicit grid.
    pub fn from_grid(grid: StrategyGrid) -> Self {
        Self { per_coord: 0, kappa_values: 0, perturb: false, extra: Some(grid), ..Self::default() }
    }

    fn portfolios(&self, c: &ConstraintSet, natural: &NaturalConstraints) -> Vec<DVector<f64>> {
        if self.per_coord == 0 {
            return Vec::new();
        }
        let d = c.dim();
        let n = self.per_coord.max(2);
        match c {
            ConstraintSet::Finite { points } => return points.clone(),
            ConstraintSet::ScaledStar { points } => {
                return points.iter().flat_map(|v| (0..n).map(move |s| v * (s as f64 / (n - 1) as f64))).collect();
            }
            _ => {}
        }
        let (mut lo, mut hi) = (vec![-self.span; d], vec![self.span; d]);
        match c {
            ConstraintSet::Box { lo: l, hi: h } => {
                for j in 0..d {
                    lo[j] = lo[j].max(l[j]);
                    hi[j] = hi[j].min(h[j]);
                }
            }
            ConstraintSet::Ball { radius, .. } => {
                lo.iter_mut().for_each(|v| *v = v.max(-radius));
                hi.iter_mut().for_each(|v| *v = v.min(*radius));
            }
            _ => {}
        }
        for j in 0..d {
            let e = DVector::from_fn(d, |r, _| if r == j { 1.0 } else { 0.0 });
            hi[j] = hi[j].min(natural.ray_limit(&e, self.span));
            lo[j] = lo[j].max(-natural.ray_limit(&-e, self.span));
        }
        let mut per = n;
        while per > 2 && (per as f64).powi(d as i32) > self.max_points as f64 {
            per -= 1;
        }
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                if lo[j] > hi[j] {
                    Vec::new()
                } else {
                    (0..per).map(|s| lo[j] + (hi[j] - lo[j]) * s as f64 / (per - 1) as f64).collect()
                }
            })
            .collect();
        product(&axes).into_iter().filter(|y| c.contains(y, false)).collect()
    }

    fn kappas(&self, kappa_check: f64, consumes: bool) -> Vec<f64> {
        if !consumes {
            return vec![kappa_check];
        }
        let n = self.kappa_values.max(2);
        (0..n).map(|s| 2.0 * kappa_check * s as f64 / (n - 1) as f64).collect()
    }

    /// Node-local competitor choices (pi, kappa).
    fn at_node(
        &self,
        c: &ConstraintSet,
        natural: &NaturalConstraints,
        pi_check: &DVector<f64>,
        kappa_check: f64,
        consumes: bool,
    ) -> Vec<(DVector<f64>, f64)> {
        let kappas = self.kappas(kappa_check, consumes);
        let mut out: Vec<(DVector<f64>, f64)> = Vec::new();
        for pi in self.portfolios(c, natural) {
            for &k in &kappas {
                out.push((pi.clone(), k));
            }
        }
        if self.perturb {
            let finite = matches!(c, ConstraintSet::Finite { .. });
            for eps in [1e-4, 1e-2] {
                if !finite {
                    for j in 0..pi_check.len() {
                        for sign in [-1.0, 1.0] {
                            let mut pi = pi_check.clone();
                            pi[j] += sign * eps;
                            if c.contains(&pi, false) {
                                out.push((pi, kappa_check));
                            }
                        }
                    }
                }
                if consumes {
                    out.push((pi_check.clone(), kappa_check * (1.0 - eps)));
                    out.push((pi_check.clone(), kappa_check * (1.0 + eps)));
                }
            }
        }
        if let Some(grid) = &self.extra {
            for pi in grid.pi.iter().filter(|y| c.contains(y, false)) {
                if consumes {
                    out.extend(grid.kappa.iter().map(|&k| (pi.clone(), k)));
                } else {
                    out.push((pi.clone(), kappa_check));
                }
            }
        }
        out
    }
}

fn product(axes: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let d = axes.len();
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(d)];
    for axis in axes {
        out = out
            .iter()
            .flat_map(|v| {
                axis.iter().map(move |&a| {
                    let mut w = v.clone();
                    w.push(a);
                    w
                })
            })
            .collect();
    }
    out.into_iter().map(DVector::from_vec).collect()
}

/// A node-local deviation with positive one-step drift; the candidate is used everywhere else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    /// "Z" or "Gamma"
    pub process: String,
    pub slice: usize,
    pub node: usize,
    pub pi: Vec<f64>,
    pub kappa: f64,
    pub drift: f64,
}

/// Residual of the candidate and the worst competitor for one process.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCheck {
    pub candidate_residual: f64,
    /// max(0, largest competitor drift)
    pub competitor_max_drift: f64,
    pub counterexample: Option<Counterexample>,
    pub competitors_checked: usize,
}

impl DriftCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.candidate_residual <= tol && self.competitor_max_drift <= tol
    }
}

#[allow(clippy::too_many_arguments)]
fn drift_check<F>(
    cand: &SolutionTriple,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    grid: &CompetitorGrid,
    process: &str,
    tol: f64,
    drift: F,
) -> Result<DriftCheck>
where
    F: Fn(&NodeProblem, f64, &DVector<f64>, f64, &DVector<f64>, f64) -> Option<f64>,
{
    check_candidate(cand, lattice)?;
    let mut out =
        DriftCheck { candidate_residual: 0.0, competitor_max_drift: 0.0, counterexample: None, competitors_checked: 0 };
    for k in 0..lattice.steps() {
        let consumes = lattice.dmu(spec, k) > 0.0;
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let problem = node_problem(lattice, spec, &cand.ell, k, i)?;
            let ell = cand.ell[k][i];
            let (pc, kc) = (&cand.pi_check[k][i], cand.kappa_check[k][i]);
            let own = drift(&problem, ell, pc, kc, pc, kc)
                .ok_or_else(|| Error::Domain(format!("candidate strategy is not admissible at slice {k}, node {i}")))?;
            out.candidate_residual = out.candidate_residual.max(own.abs());
            let natural = NaturalConstraints::from_node(lattice.dim(), node);
            for (pi, kappa) in grid.at_node(c, &natural, pc, kc, consumes) {
                let Some(v) = drift(&problem, ell, pc, kc, &pi, kappa) else { continue };
                if v == f64::NEG_INFINITY {
                    continue;
                }
                out.competitors_checked += 1;
                if v > out.competitor_max_drift {
                    out.competitor_max_drift = v;
                }
                if v > tol && out.counterexample.is_none() {
                    out.counterexample = Some(Counterexample {
                        process: process.to_string(),
                        slice: k,
                        node: i,
                        pi: pi.iter().copied().collect(),
                        kappa,
                        drift: v,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Z(pi_check, kappa_check) is a martingale and Z(pi, kappa) a supermartingale for every competitor.
pub fn check_z(
    cand: &SolutionTriple,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    grid: &CompetitorGrid,
) -> Result<DriftCheck> {
    drift_check(cand, lattice, spec, c, grid, "Z", TOL_MART, |pr, l, _, _, pi, k| z_drift(pr, l, pi, k))
}

/// Gamma(pi_check, kappa_check) is a martingale and Gamma(pi, kappa) a supermartingale for every competitor.
pub fn check_gamma(
    cand: &SolutionTriple,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    grid: &CompetitorGrid,
) -> Result<DriftCheck> {
    drift_check(cand, lattice, spec, c, grid, "Gamma", TOL_MART, gamma_drift)
}

/// One-step drift of Gamma for a single competitor strategy, per unit of X_check^(p-1) X.
pub fn gamma_drifts(
    cand: &SolutionTriple,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    competitor: &Strategy,
) -> Result<Vec<Vec<f64>>> {
    check_candidate(cand, lattice)?;
    competitor.check_shape(lattice)?;
    (0..lattice.steps())
        .map(|k| {
            (0..lattice.slice(k).len())
                .map(|i| {
                    let problem = node_problem(lattice, spec, &cand.ell, k, i)?;
                    gamma_drift(
                        &problem,
                        cand.ell[k][i],
                        &cand.pi_check[k][i],
                        cand.kappa_check[k][i],
                        &competitor.pi[k][i],
                        competitor.kappa[k][i],
                    )
                    .ok_or_else(|| Error::Domain(format!("wealth vanishes at slice {k}, node {i}")))
                })
                .collect()
        })
        .collect()
}

/// y'grad g(y) at y, the drift coefficient of the optimal deflator.
pub fn qopt_drift_at(ctx: &GContext, y: &DVector<f64>) -> Result<f64> {
    Ok(-directional_g(ctx, &DVector::zeros(ctx.dim()), y)?)
}

/// pi'grad g(pi) at the optimal portfolio of every node.
pub fn deflator_qopt_drift(
    opp: &OpportunityLattice,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
) -> Result<Vec<Vec<f64>>> {
    if !c.is_convex() {
        return Err(Error::Unsupported("the deflator drift criterion needs a convex constraint set".into()));
    }
    (0..lattice.steps())
        .map(|k| {
            (0..lattice.slice(k).len())
                .map(|i| {
                    let ctx = one_step_context(lattice, spec, &opp.ell, k, i, opp.kappa(k, i), c)?;
                    qopt_drift_at(&ctx, opp.pi(k, i))
                })
                .collect()
        })
        .collect()
}

/// max of G(y, pi_check) over the audit grid at every node; `None` at nodes where the
/// candidate sits on the boundary of the natural constraints.
fn g_audit(
    cand: &SolutionTriple,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    grid: &CompetitorGrid,
) -> Result<Option<f64>> {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..lattice.steps() {
        for i in 0..lattice.slice(k).len() {
            let (pc, kc) = (&cand.pi_check[k][i], cand.kappa_check[k][i]);
            let ctx = one_step_context(lattice, spec, &cand.ell, k, i, kc, c)?;
            if !ctx.natural().contains(pc, true) {
                return Ok(None);
            }
            for (y, _) in grid.at_node(c, ctx.natural(), pc, kc, false) {
                if let Ok(v) = directional_g(&ctx, &y, pc) {
                    worst = worst.max(v);
                }
            }
        }
    }
    Ok(Some(worst.max(0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub mart: f64,
    pub opt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { mart: TOL_MART, opt: TOL_OPT }
    }
}

/// Pass/fail per certificate; `None` where a certificate does not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremFlags {
    /// Z martingale at the candidate, supermartingale for competitors
    pub z_supermartingale: bool,
    /// G(y, pi_check) <= 0 on the audit grid
    pub gradient_criterion: Option<bool>,
    /// Gamma martingale at the candidate, supermartingale for competitors (convex C)
    pub gamma_supermartingale: Option<bool>,
    /// candidate >= the computed opportunity process
    pub minimality: Option<bool>,
    pub class_d: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: String,
    pub z_candidate_residual: f64,
    pub z_competitor_max_drift: f64,
    pub gamma_residual: Option<f64>,
    pub gamma_competitor_max_drift: Option<f64>,
    /// max |Gamma - p Z| at the candidate strategy (trees only)
    pub gamma_pz_identity: Option<f64>,
    #[serde(rename = "G_max")]
    pub g_max: Option<f64>,
    pub theorem_flags: TheoremFlags,
    pub counterexample: Option<Counterexample>,
    pub competitors_checked: usize,
    /// sup of candidate / computed opportunity process (p < 0 with an oracle)
    pub ell_over_l_sup: Option<f64>,
    pub class_d_note: String,
    pub tolerances: Tolerances,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        let f = &self.theorem_flags;
        f.z_supermartingale
            && f.gradient_criterion != Some(false)
            && f.gamma_supermartingale != Some(false)
            && f.minimality != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyOptions {
    pub tolerances: Tolerances,
    pub competitors: CompetitorGrid,
}

/// Runs every applicable certificate. `oracle` is the computed opportunity process, if any.
pub fn verify_all(
    cand: &SolutionTriple,
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    opts: &VerifyOptions,
    oracle: Option<&OpportunityLattice>,
) -> Result<VerificationReport> {
    let tol = &opts.tolerances;
    let mut notes = Vec::new();
    let z = drift_check(cand, lattice, spec, c, &opts.competitors, "Z", tol.mart, |pr, l, _, _, pi, k| {
        z_drift(pr, l, pi, k)
    })?;
    let mut counterexample = z.counterexample.clone();
    let mut competitors_checked = z.competitors_checked;

    let (mut gamma, mut g_max) = (None, None);
    if c.is_convex() {
        match drift_check(cand, lattice, spec, c, &opts.competitors, "Gamma", tol.mart, gamma_drift) {
            Ok(check) => {
                competitors_checked += check.competitors_checked;
                if counterexample.is_none() {
                    counterexample = check.counterexample.clone();
                }
                gamma = Some(check);
            }
            Err(e) => notes.push(format!("Gamma checks skipped: {e}")),
        }
        g_max = g_audit(cand, lattice, spec, c, &opts.competitors)?;
        if g_max.is_none() {
            notes.push("gradient criterion skipped: the candidate portfolio exhausts wealth on some branch".into());
        }
    } else {
        notes.push("constraint set is not convex: Gamma and gradient certificates do not apply".into());
    }

    let mut gamma_pz_identity = None;
    if lattice.is_tree() {
        let strategy = cand.strategy();
        match (z_path(&cand.ell, lattice, spec, &strategy), gamma_path(&cand.ell, lattice, spec, &strategy, &strategy))
        {
            (Ok(zp), Ok(gp)) => {
                let p = spec.p();
                let gap = zp
                    .iter()
                    .flatten()
                    .zip(gp.iter().flatten())
                    .map(|(z, g)| (g - p * z).abs() / (1.0 + g.abs()))
                    .fold(0.0, f64::max);
                gamma_pz_identity = Some(gap);
            }
            (Err(e), _) | (_, Err(e)) => notes.push(format!("path identity skipped: {e}")),
        }
    } else {
        notes.push("recombining lattice: node-local checks only".into());
    }

    let (mut minimality, mut ell_over_l_sup) = (None, None);
    if let Some(opp) = oracle {
        minimality = Some(compare_solution_to_oracle(cand, opp)?.holds);
        if spec.p() < 0.0 {
            ell_over_l_sup = Some(
                cand.ell.iter().flatten().zip(opp.ell.iter().flatten()).map(|(l, big)| l / big).fold(0.0, f64::max),
            );
        }
    }

    let theorem_flags = TheoremFlags {
        z_supermartingale: z.passes(tol.mart),
        gradient_criterion: g_max.map(|g| g <= tol.opt),
        gamma_supermartingale: gamma.as_ref().map(|g| g.passes(tol.mart)),
        minimality,
        class_d: true,
    };
    Ok(VerificationReport {
        schema: REPORT_SCHEMA.into(),
        z_candidate_residual: z.candidate_residual,
        z_competitor_max_drift: z.competitor_max_drift,
        gamma_residual: gamma.as_ref().map(|g| g.candidate_residual),
        gamma_competitor_max_drift: gamma.as_ref().map(|g| g.competitor_max_drift),
        gamma_pz_identity,
        g_max,
        theorem_flags,
        counterexample,
        competitors_checked,
        ell_over_l_sup,
        class_d_note: CLASS_D_NOTE.into(),
        tolerances: tol.clone(),
        notes,
    })
}

/// Strategy with random portfolio directions scaled inside the natural constraints of each
/// node and random propensities that keep every wealth factor positive.
pub fn random_admissible_strategy<R: Rng>(lattice: &MarketLattice, spec: &PowerUtilitySpec, rng: &mut R) -> Strategy {
    let d = lattice.dim();
    let mut strategy = Strategy::zero(lattice);
    for k in 0..lattice.steps() {
        let dmu = lattice.dmu(spec, k);
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let natural = NaturalConstraints::from_node(d, node);
            let u = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let pi = &u * (rng.gen_range(0.0..0.9) * natural.ray_limit(&u, 5.0));
            let margin = natural.margin(&pi).min(1.0 + 5.0);
            if dmu > 0.0 {
                strategy.kappa[k][i] = rng.gen_range(0.0..0.9) * (margin / dmu).min(3.0);
            }
            strategy.pi[k][i] = pi;
        }
    }
    strategy
}

/// Every candidate value and every continuation reached from it is positive.
fn check_candidate(cand: &SolutionTriple, lattice: &MarketLattice) -> Result<()> {
    cand.strategy().check_shape(lattice)?;
    if cand.ell.len() != lattice.slices().len()
        || cand.ell.iter().zip(lattice.slices()).any(|(r, s)| r.len() != s.len())
    {
        return Err(Error::Shape("candidate table does not match the lattice".into()));
    }
    if let Some(l) = cand.ell.iter().flatten().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Domain(format!("candidate value {l} is not positive and finite")));
    }
    Ok(())
}
