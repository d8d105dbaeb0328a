// Driving the batch front-end from a model file: solve, verify the written candidate and
// sweep the risk aversion.

use bellman_power::cli::{run_solve, run_sweep, run_verify, CandidateFile, ModelFile, SweepAxis};
use bellman_power::error::Result;
use bellman_power::verify::Tolerances;

const MODEL: &str = r#"{
  "schema": "bp-model/1",
  "p": 0.5,
  "D": 1,
  "mode": "terminal",
  "T": 1,
  "d": 1,
  "b": [0.04],
  "c": [[0.04]],
  "steps": 100,
  "constraint": {"type": "box", "lo": [0], "hi": [1.5]}
}"#;

pub fn run_example() -> Result<()> {
    let out = std::env::temp_dir().join(format!("bp-model-files-{}", std::process::id()));
    std::fs::create_dir_all(&out).expect("temp dir");
    let file = ModelFile::parse(MODEL)?;

    let summary = run_solve(&file, &out)?;
    println!("L0 = {:.8}, root portfolio {:?}", summary.l0, summary.strategy_at_root.pi);

    let cand = CandidateFile::parse(&std::fs::read_to_string(out.join("candidate.json")).expect("candidate written"))?;
    let report = run_verify(&file, &cand, &Tolerances::default(), &out)?;
    println!("candidate verified: {}", report.passed());

    run_sweep(&file, &SweepAxis::parse("p=-2,-0.5,0.2,0.5,0.8")?, true, &out)?;
    print!("{}", std::fs::read_to_string(out.join("sweep.csv")).expect("sweep written"));
    std::fs::remove_dir_all(&out).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
