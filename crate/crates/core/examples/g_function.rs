// The random function g for a jump-diffusion: values, gradient, constrained maximizers
// and the directional derivative used by the first-order condition.

use bellman_power::constraints::{ConstraintSet, Membership};
use bellman_power::error::Result;
use bellman_power::fixtures;
use bellman_power::gfun::{directional_g, eval_g, maximize_g, GContext};
use nalgebra::DVector;

pub fn run_example() -> Result<()> {
    let chars = fixtures::levy_chars();
    for (name, c) in [
        ("full", ConstraintSet::full(1)),
        ("[0, 1]", ConstraintSet::interval(0.0, 1.0)?),
        (
            "{0, 0.5, 2}",
            ConstraintSet::finite(vec![0.0, 0.5, 2.0].into_iter().map(|x| DVector::from_element(1, x)).collect())?,
        ),
    ] {
        for p in [0.5, -2.0] {
            let ctx = GContext::new(1.0, chars.clone(), p, c.clone())?;
            let (y, g) = maximize_g(&ctx)?;
            println!("C = {name:<12} p = {p:>4}: argmax {:.6}  max g {:.6}", y[0], g);
            if c.is_convex() {
                let worst = (0..=20)
                    .map(|i| DVector::from_element(1, -1.0 + 0.15 * i as f64))
                    .filter(|z| c.contains(z, false) && ctx.natural().contains(z, true))
                    .map(|z| directional_g(&ctx, &z, &y).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                println!("    max directional derivative toward C: {worst:.2e}");
            }
        }
    }
    // -30% jumps: wealth stays positive only below 1/0.3
    let ctx = GContext::new(1.0, chars, -2.0, ConstraintSet::full(1))?;
    for y in [0.0, 2.0, 3.3, 10.0 / 3.0] {
        println!("g({y:.4}) = {}", eval_g(&ctx, &DVector::from_element(1, y))?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
