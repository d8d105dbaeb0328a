// Unconstrained Merton market: lattice backward induction against the closed form
// and against the log-value ODE.

use bellman_power::bellman::{solve_deterministic_ito, solve_tree_dp};
use bellman_power::constraints::ConstraintSet;
use bellman_power::error::Result;
use bellman_power::fixtures;
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<()> {
    let p = 0.5;
    // drift 0.1, variance 0.04: theta = 0.5
    let exact = fixtures::merton_l0(p, 0.25, 1.0);
    println!("closed form L0 = {exact:.8}");
    for steps in [25, 50, 100, 200] {
        let f = fixtures::merton(steps, p);
        let opp = solve_tree_dp(&f.lattice, &f.spec, &f.constraint)?;
        println!(
            "N = {steps:>3}: L0 = {:.8}  rel. error {:.2e}  pi(0) = {:.4}",
            opp.l0(),
            (opp.l0() / exact - 1.0).abs(),
            opp.pi(0, 0)[0]
        );
    }
    // Merton fraction b / ((1 - p) c) = 5
    let f = fixtures::merton(10, p);
    let ode = solve_deterministic_ito(
        &f.spec,
        |_| DVector::from_element(1, 0.5),
        &DMatrix::from_element(1, 1, 0.2),
        &ConstraintSet::full(1),
    )?;
    println!("ODE: L0 = {:.10}", ode.initial().exp());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
