// Rewriting a model in representative-portfolio coordinates: every unit vector becomes
// feasible and the optimal value is unchanged.

use bellman_power::bellman::solve_tree_dp;
use bellman_power::constraints::{transform_model, Membership, NaturalConstraints};
use bellman_power::error::Result;
use bellman_power::fixtures;
use bellman_power::linalg::unit;
use bellman_power::model::{build_lattice, ConsumptionMode, PowerUtilitySpec, Scheme};

pub fn run_example() -> Result<()> {
    let spec = PowerUtilitySpec::simple(0.5, 1.0, ConsumptionMode::TerminalOnly, 1.0)?;
    for (name, (chars, c)) in
        [("scalar [0, 1]", fixtures::transform_scalar()?), ("two assets", fixtures::transform_two_asset()?)]
    {
        let tm = transform_model(&chars, &c)?;
        println!("{name}: phi = {}", tm.phi);
        let natural = NaturalConstraints::from_chars(&tm.chars);
        for j in 0..chars.dim() {
            let e = unit(chars.dim(), j);
            println!(
                "  e_{j} in new C: {}  strictly solvent: {}",
                tm.constraint.contains(&e, false),
                natural.contains(&e, true)
            );
        }
        let steps = if chars.dim() == 1 { 3 } else { 2 };
        let lattice = build_lattice(&chars, 1.0, steps, Scheme::Multinomial)?.expand_tree(1_000_000)?;
        let before = solve_tree_dp(&lattice, &spec, &c)?;
        let after = solve_tree_dp(&lattice.map_increments(&tm.phi.transpose())?, &spec, &tm.constraint)?;
        println!("  value {:.12} vs {:.12}", before.value0, after.value0);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
