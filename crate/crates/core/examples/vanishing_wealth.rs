// One period, return -100% or +K with equal odds, portfolio restricted to {0, 1}.
// For p > 0 the optimizer accepts losing everything half of the time; for p < 0 it never does.

use bellman_power::bellman::{brute_force_oracle, solve_tree_dp};
use bellman_power::error::Result;
use bellman_power::fixtures;

pub fn run_example() -> Result<()> {
    for p in [0.5, -1.0] {
        let f = fixtures::vanishing_wealth(p, 8.0);
        let opp = solve_tree_dp(&f.lattice, &f.spec, &f.constraint)?;
        let grid = f.grid.as_ref().expect("fixture grid");
        let (oracle, _) = brute_force_oracle(&f.lattice, &f.spec, &f.constraint, grid)?;
        println!(
            "p = {p:>4}: pi = {}  value = {:.6}  (oracle {:.6}, no trading {:.6})",
            opp.pi(0, 0)[0],
            opp.value0,
            oracle,
            f.spec.utility_at(1.0, 1.0)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
