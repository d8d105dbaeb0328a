// Grid-restricted backward induction against exhaustive enumeration of adapted strategies.

use bellman_power::bellman::{brute_force_oracle, solve_tree_dp, solve_tree_dp_grid};
use bellman_power::error::Result;
use bellman_power::fixtures;
use std::time::Instant;

pub fn run_example() -> Result<()> {
    let start = Instant::now();
    for f in fixtures::oracle_fixtures()? {
        let grid = f.grid.as_ref().expect("oracle fixtures carry a grid");
        let (oracle, _) = brute_force_oracle(&f.lattice, &f.spec, &f.constraint, grid)?;
        let dp = solve_tree_dp_grid(&f.lattice, &f.spec, &f.constraint, grid)?;
        let cont = solve_tree_dp(&f.lattice, &f.spec, &f.constraint)?;
        println!(
            "{:<24} oracle {:>12.8}  grid DP {:>12.8}  |diff| {:.1e}  continuous DP {:>12.8}",
            f.name,
            oracle,
            dp.value0,
            (oracle - dp.value0).abs(),
            cont.value0
        );
    }
    println!("elapsed {:.2?}", start.elapsed());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
