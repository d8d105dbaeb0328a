// Intermediate consumption: the optimal propensity to consume is (D/L)^(1/(1-p)) node by node,
// and in a market with i.i.d. returns L is deterministic and solves an ODE.

use bellman_power::bellman::{solve_levy_ode, solve_tree_dp};
use bellman_power::constraints::ConstraintSet;
use bellman_power::error::Result;
use bellman_power::fixtures;
use bellman_power::gfun::kappa_star;
use bellman_power::model::{ConsumptionMode, PowerUtilitySpec};

pub fn run_example() -> Result<()> {
    let f = fixtures::merton_consumption(200);
    let opp = solve_tree_dp(&f.lattice, &f.spec, &f.constraint)?;
    let worst = (0..f.lattice.steps())
        .map(|k| (opp.kappa(k, 0) - kappa_star(&f.spec, f.lattice.time(k), opp.ell[k][0]).unwrap()).abs())
        .fold(0.0, f64::max);
    println!("kappa at t=0: {:.6}, max |kappa - (D/L)^beta| = {worst:.2e}", opp.kappa(0, 0));

    let ode = solve_levy_ode(&f.spec, &fixtures::merton_chars(), &f.constraint)?;
    println!("L0 lattice {:.6}  ODE {:.6}", opp.l0(), ode.initial());

    let spec = PowerUtilitySpec::simple(0.5, 1.0, ConsumptionMode::Intermediate, 1.0)?;
    let jumps = solve_levy_ode(&spec, &fixtures::levy_chars(), &ConstraintSet::interval(0.0, 1.5)?)?;
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("with jumps: L({t:.2}) = {:.6}", jumps.at(t));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
