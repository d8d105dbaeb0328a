//! Small reference markets shared by the tests, the examples and the CLI.

use nalgebra::{DMatrix, DVector};

use crate::bellman::StrategyGrid;
use crate::constraints::ConstraintSet;
use crate::error::Result;
use crate::model::{
    build_lattice, BranchKind, ConsumptionMode, JointCharacteristics, MarketLattice, PowerUtilitySpec, Scheme,
};

/// A lattice market with its preferences, constraint set and (optionally) a strategy grid.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub lattice: MarketLattice,
    pub spec: PowerUtilitySpec,
    pub constraint: ConstraintSet,
    pub grid: Option<StrategyGrid>,
}

fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

/// Scalar drift 0.1 and variance 0.04 (market price of risk 0.5).
pub fn merton_chars() -> JointCharacteristics {
    JointCharacteristics::scalar(0.1, 0.04, &[]).expect("valid characteristics")
}

/// Merton characteristics plus a downward jump of -30% at rate 0.5.
pub fn levy_chars() -> JointCharacteristics {
    JointCharacteristics::scalar(0.05, 0.04, &[(-0.3, 0.5)]).expect("valid characteristics")
}

/// Closed-form opportunity value exp(p/(2(1-p)) theta^2 T) without consumption or constraints.
pub fn merton_l0(p: f64, theta_sq: f64, horizon: f64) -> f64 {
    (p / (2.0 * (1.0 - p)) * theta_sq * horizon).exp()
}

pub fn merton_lattice(steps: usize) -> MarketLattice {
    build_lattice(&merton_chars(), 1.0, steps, Scheme::Binomial).expect("valid lattice")
}

pub fn levy_lattice(steps: usize) -> MarketLattice {
    build_lattice(&levy_chars(), 1.0, steps, Scheme::Binomial).expect("valid lattice")
}

fn spec(p: f64, mode: ConsumptionMode) -> PowerUtilitySpec {
    PowerUtilitySpec::simple(p, 1.0, mode, 1.0).expect("valid preferences")
}

/// Unconstrained Merton market without consumption.
pub fn merton(steps: usize, p: f64) -> Fixture {
    Fixture {
        name: "merton",
        lattice: merton_lattice(steps),
        spec: spec(p, ConsumptionMode::TerminalOnly),
        constraint: ConstraintSet::full(1),
        grid: None,
    }
}

/// Merton market with intermediate consumption and no-short-sale cone.
pub fn merton_consumption(steps: usize) -> Fixture {
    Fixture {
        name: "merton_consumption",
        lattice: merton_lattice(steps),
        spec: spec(0.5, ConsumptionMode::Intermediate),
        constraint: ConstraintSet::orthant(1),
        grid: None,
    }
}

/// One period, dR in {-1, K} with probability 1/2 each, portfolio in {0, 1}.
pub fn vanishing_wealth(p: f64, k: f64) -> Fixture {
    let lattice = MarketLattice::iid(
        1,
        vec![0.0, 1.0],
        &[(v1(-1.0), 0.5, BranchKind::Jump), (v1(k), 0.5, BranchKind::Jump)],
        true,
    )
    .expect("valid lattice");
    let c = ConstraintSet::finite(vec![v1(0.0), v1(1.0)]).expect("valid set");
    Fixture {
        name: "vanishing_wealth",
        lattice,
        spec: spec(p, ConsumptionMode::TerminalOnly),
        constraint: c,
        grid: Some(StrategyGrid::new(vec![v1(0.0), v1(1.0)], vec![0.0]).expect("valid grid")),
    }
}

fn times(n: usize) -> Vec<f64> {
    MarketLattice::uniform_times(1.0, n)
}

/// Bundled trees of at most three periods and three branches per node.
pub fn oracle_fixtures() -> Result<Vec<Fixture>> {
    let mut out = Vec::new();

    let binomial = MarketLattice::iid(
        1,
        times(2),
        &[(v1(-0.2), 0.5, BranchKind::Diffusion), (v1(0.3), 0.5, BranchKind::Diffusion)],
        true,
    )?;
    out.push(Fixture {
        name: "binomial_box",
        lattice: binomial,
        spec: spec(0.5, ConsumptionMode::TerminalOnly),
        constraint: ConstraintSet::interval(0.0, 1.0)?,
        grid: Some(StrategyGrid::uniform(-1.0, 3.0, 21, vec![0.0])?),
    });

    let trinomial = MarketLattice::iid(
        1,
        times(2),
        &[
            (v1(-0.3), 0.3, BranchKind::Jump),
            (v1(0.05), 0.4, BranchKind::Diffusion),
            (v1(0.4), 0.3, BranchKind::Diffusion),
        ],
        true,
    )?;
    out.push(Fixture {
        name: "trinomial_cone",
        lattice: trinomial,
        spec: spec(-1.0, ConsumptionMode::TerminalOnly),
        constraint: ConstraintSet::orthant(1),
        grid: Some(StrategyGrid::uniform(-1.0, 3.0, 21, vec![0.0])?),
    });

    let consume = MarketLattice::iid(
        1,
        times(3),
        &[(v1(-0.25), 0.4, BranchKind::Diffusion), (v1(0.3), 0.6, BranchKind::Diffusion)],
        true,
    )?;
    out.push(Fixture {
        name: "binomial_finite_consumption",
        lattice: consume,
        spec: spec(0.5, ConsumptionMode::Intermediate),
        constraint: ConstraintSet::finite(vec![v1(0.5), v1(1.0)])?,
        grid: Some(StrategyGrid::new(vec![v1(0.0), v1(0.5), v1(1.0)], vec![0.2, 0.5])?),
    });

    let two_assets = MarketLattice::iid(
        2,
        times(2),
        &[
            (v2(0.2, -0.1), 0.4, BranchKind::Diffusion),
            (v2(-0.15, 0.25), 0.35, BranchKind::Diffusion),
            (v2(-0.3, -0.2), 0.25, BranchKind::Jump),
        ],
        true,
    )?;
    let box_grid = [0.0, 0.5, 1.0].iter().flat_map(|&a| [0.0, 0.5, 1.0].iter().map(move |&b| v2(a, b))).collect();
    out.push(Fixture {
        name: "two_asset_box",
        lattice: two_assets,
        spec: spec(0.3, ConsumptionMode::TerminalOnly),
        constraint: ConstraintSet::boxed(DVector::zeros(2), DVector::from_element(2, 1.0))?,
        grid: Some(StrategyGrid::new(box_grid, vec![0.0])?),
    });

    // increments depend on the node: volatility rises after a down move
    let state = MarketLattice::tree(1, times(3), |k, i| {
        let scale = if k > 0 && i % 2 == 0 { 1.5 } else { 1.0 };
        vec![(v1(-0.1 * scale), 0.5, BranchKind::Diffusion), (v1(0.15 * scale), 0.5, BranchKind::Diffusion)]
    })?;
    out.push(Fixture {
        name: "state_dependent_ball",
        lattice: state,
        spec: spec(-0.5, ConsumptionMode::TerminalOnly),
        constraint: ConstraintSet::ball(1, 1.0)?,
        grid: Some(StrategyGrid::uniform(-1.0, 1.0, 5, vec![0.0])?),
    });

    let mut wealth = vanishing_wealth(0.5, 8.0);
    wealth.name = "vanishing_wealth";
    out.push(wealth);
    Ok(out)
}

/// Trees on which candidate solutions are verified; consumption fixtures use cones.
pub fn verification_fixtures() -> Result<Vec<Fixture>> {
    let mut out = Vec::new();
    let jumpy = MarketLattice::iid(
        1,
        times(3),
        &[
            (v1(-0.3), 0.2, BranchKind::Jump),
            (v1(0.02), 0.5, BranchKind::Diffusion),
            (v1(0.2), 0.3, BranchKind::Diffusion),
        ],
        true,
    )?;
    out.push(Fixture {
        name: "trinomial_box",
        lattice: jumpy.clone(),
        spec: spec(0.5, ConsumptionMode::TerminalOnly),
        constraint: ConstraintSet::interval(-0.5, 1.5)?,
        grid: None,
    });
    out.push(Fixture {
        name: "trinomial_consumption_cone",
        lattice: jumpy,
        spec: spec(-1.0, ConsumptionMode::Intermediate),
        constraint: ConstraintSet::orthant(1),
        grid: None,
    });
    let two = MarketLattice::iid(
        2,
        times(2),
        &[
            (v2(0.2, -0.1), 0.4, BranchKind::Diffusion),
            (v2(-0.15, 0.25), 0.35, BranchKind::Diffusion),
            (v2(-0.3, -0.2), 0.25, BranchKind::Jump),
        ],
        true,
    )?;
    out.push(Fixture {
        name: "two_asset_ball",
        lattice: two,
        spec: spec(0.3, ConsumptionMode::TerminalOnly),
        constraint: ConstraintSet::ball(2, 1.0)?,
        grid: None,
    });
    let state = MarketLattice::tree(1, times(3), |k, i| {
        let scale = if k > 0 && i % 2 == 0 { 1.5 } else { 1.0 };
        vec![(v1(-0.1 * scale), 0.5, BranchKind::Diffusion), (v1(0.15 * scale), 0.5, BranchKind::Diffusion)]
    })?;
    out.push(Fixture {
        name: "state_dependent_full",
        lattice: state,
        spec: spec(-0.5, ConsumptionMode::Intermediate),
        constraint: ConstraintSet::full(1),
        grid: None,
    });
    Ok(out)
}

/// Scalar market with C = [0, 1] and a total-loss jump: the transform rescales the asset by 1/2.
pub fn transform_scalar() -> Result<(JointCharacteristics, ConstraintSet)> {
    Ok((JointCharacteristics::scalar(0.05, 0.04, &[(-1.0, 0.5)])?, ConstraintSet::interval(0.0, 1.0)?))
}

/// Two assets where the second can only be held alongside the first.
pub fn transform_two_asset() -> Result<(JointCharacteristics, ConstraintSet)> {
    let chars = JointCharacteristics::returns_only(
        v2(0.06, 0.04),
        DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]),
        vec![(v2(-0.5, -0.8), 0.3)],
    )?;
    let rows = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, -1.0, 1.0]);
    let c = ConstraintSet::polyhedron(rows, DVector::from_vec(vec![0.0, 0.0, 0.5]))?;
    Ok((chars, c))
}
