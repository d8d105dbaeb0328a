// Optimality certificates: the computed solution passes every check, a candidate
// inflated by 10% is caught with a counterexample.

use bellman_power::bellman::{solve_tree_dp, SolutionTriple};
use bellman_power::error::Result;
use bellman_power::fixtures;
use bellman_power::verify::{psi_exponential_check, verify_all, VerifyOptions};

pub fn run_example() -> Result<()> {
    let opts = VerifyOptions::default();
    for f in fixtures::verification_fixtures()? {
        let opp = solve_tree_dp(&f.lattice, &f.spec, &f.constraint)?;
        let cand = SolutionTriple::from_opportunity(&opp, &f.lattice, &f.spec)?;
        let report = verify_all(&cand, &f.lattice, &f.spec, &f.constraint, &opts, Some(&opp))?;
        let psi = psi_exponential_check(&cand, &f.lattice, &f.spec)?;
        println!(
            "{:<28} passed {}  Z residual {:.1e}  competitor drift {:.1e}  psi martingale {:.1e}",
            f.name,
            report.passed(),
            report.z_candidate_residual,
            report.z_competitor_max_drift,
            psi.martingale_residual
        );
        let bad = cand.scaled(&f.lattice, &f.spec, &f.constraint, 1.1)?;
        let report = verify_all(&bad, &f.lattice, &f.spec, &f.constraint, &opts, Some(&opp))?;
        match &report.counterexample {
            Some(ce) => println!(
                "{:<28} x1.1: passed {}  {} drift {:.3e} at slice {} node {} pi {:?}",
                "",
                report.passed(),
                ce.process,
                ce.drift,
                ce.slice,
                ce.node,
                ce.pi
            ),
            None => {
                println!("{:<28} x1.1: passed {}  Z residual {:.3e}", "", report.passed(), report.z_candidate_residual)
            }
        }
    }
    let f = fixtures::verification_fixtures()?.remove(0);
    let opp = solve_tree_dp(&f.lattice, &f.spec, &f.constraint)?;
    let cand = SolutionTriple::from_opportunity(&opp, &f.lattice, &f.spec)?;
    let report = verify_all(&cand, &f.lattice, &f.spec, &f.constraint, &opts, Some(&opp))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
