use nalgebra::DVector;

use super::StrategyGrid;
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::model::{MarketLattice, PowerUtilitySpec, Strategy};

/// Largest number of strategy combinations the oracle will enumerate.
pub const ORACLE_BUDGET: u64 = 1_000_000;

struct Choice {
    pi: DVector<f64>,
    kappa: f64,
    /// a^p per branch
    growth: Vec<f64>,
    /// utility of consumption per unit X^p
    consume: f64,
}

/// Best expected utility over all adapted strategies taking values in the grid,
/// found by enumerating every combination of per-node choices on a tree.
pub fn brute_force_oracle(
    lattice: &MarketLattice,
    spec: &PowerUtilitySpec,
    c: &ConstraintSet,
    grid: &StrategyGrid,
) -> Result<(f64, Strategy)> {
    lattice.parents()?;
    let grid = grid.restrict(c)?;
    let p = spec.p();
    let n = lattice.steps();
    let kappas: Vec<f64> = if spec.consumes() { grid.kappa.clone() } else { vec![0.0] };

    // flat node numbering, slice by slice
    let offsets: Vec<usize> = lattice
        .slices()
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    let mut prob = vec![0.0; lattice.num_nodes()];
    prob[0] = 1.0;
    let mut choices: Vec<Vec<Choice>> = Vec::new();
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut combos: u64 = 1;
    for k in 0..n {
        let dmu = lattice.dmu(spec, k);
        let weight = spec.weight_at(lattice.time(k));
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let me = offsets[k] + i;
            for b in &node.branches {
                prob[offsets[k + 1] + b.child] = prob[me] * b.prob;
            }
            children.push(node.branches.iter().map(|b| offsets[k + 1] + b.child).collect());
            let mut menu = Vec::new();
            for pi in &grid.pi {
                for &kappa in &kappas {
                    let factors: Vec<f64> =
                        node.branches.iter().map(|b| 1.0 + pi.dot(&b.increment) - kappa * dmu).collect();
                    let admissible = factors.iter().all(|&a| if p > 0.0 { a >= 0.0 } else { a > 0.0 });
                    if !admissible {
                        continue;
                    }
                    let consume = if dmu == 0.0 {
                        0.0
                    } else if kappa == 0.0 {
                        if p > 0.0 {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        weight * kappa.powf(p) * dmu / p
                    };
                    let growth = factors.iter().map(|&a| if a == 0.0 { 0.0 } else { a.powf(p) }).collect();
                    menu.push(Choice { pi: pi.clone(), kappa, growth, consume });
                }
            }
            if menu.is_empty() {
                return Err(Error::InfiniteValue { slice: k, node: i, reason: "no admissible grid strategy".into() });
            }
            combos = combos.saturating_mul(menu.len() as u64);
            if combos > ORACLE_BUDGET {
                return Err(Error::Budget(format!("more than {ORACLE_BUDGET} strategy combinations")));
            }
            choices.push(menu);
        }
    }
    let decisions = choices.len();
    let terminal_weight = spec.terminal_weight();
    let xp0 = spec.x0().powf(p);
    let mut xp = vec![0.0; lattice.num_nodes()];
    let mut pick = vec![0usize; decisions];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        xp[0] = xp0;
        let mut value = 0.0;
        for (node, &j) in pick.iter().enumerate() {
            let ch = &choices[node][j];
            if xp[node] != 0.0 {
                value += prob[node] * xp[node] * ch.consume;
            }
            for (b, &child) in children[node].iter().enumerate() {
                xp[child] = xp[node] * ch.growth[b];
            }
        }
        for node in decisions..lattice.num_nodes() {
            value += prob[node] * xp[node] * terminal_weight / p;
        }
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, pick.clone()));
        }
        // odometer
        let mut pos = 0;
        loop {
            if pos == decisions {
                let (v, winner) = best.expect("at least one combination");
                return Ok((v, table(lattice, &offsets, &choices, &winner)));
            }
            pick[pos] += 1;
            if pick[pos] < choices[pos].len() {
                break;
            }
            pick[pos] = 0;
            pos += 1;
        }
    }
}

fn table(lattice: &MarketLattice, offsets: &[usize], choices: &[Vec<Choice>], pick: &[usize]) -> Strategy {
    let mut strategy = Strategy::zero(lattice);
    for k in 0..lattice.steps() {
        for i in 0..lattice.slice(k).len() {
            let ch = &choices[offsets[k] + i][pick[offsets[k] + i]];
            strategy.pi[k][i] = ch.pi.clone();
            strategy.kappa[k][i] = ch.kappa;
        }
    }
    strategy
}
