use nalgebra::{DMatrix, DVector};

use crate::constraints::{ConstraintSet, Membership};
use crate::error::{Error, Result};
use crate::gfun::{maximize_g, GContext};
use crate::model::{CutOff, JointCharacteristics, JumpAtom, LatticeNode};

const ALTERNATIONS: usize = 50;
const ZERO_FACTOR: f64 = 1e-13;

/// Finite menu of portfolios and propensities to consume.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyGrid {
    pub pi: Vec<DVector<f64>>,
    pub kappa: Vec<f64>,
}

impl StrategyGrid {
    pub fn new(pi: Vec<DVector<f64>>, kappa: Vec<f64>) -> Result<Self> {
        let d =
            pi.first().map(|p| p.len()).ok_or_else(|| Error::Invalid("grid needs at least one portfolio".into()))?;
        if pi.iter().any(|p| p.len() != d) {
            return Err(Error::Invalid("grid portfolios differ in dimension".into()));
        }
        if kappa.is_empty() || kappa.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::Invalid("grid needs finite nonnegative consumption rates".into()));
        }
        Ok(Self { pi, kappa })
    }

    /// n equally spaced scalar portfolios on [lo, hi].
    pub fn uniform(lo: f64, hi: f64, n: usize, kappa: Vec<f64>) -> Result<Self> {
        let pts = (0..n)
            .map(|i| DVector::from_element(1, if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }))
            .collect();
        Self::new(pts, kappa)
    }

    pub fn dim(&self) -> usize {
        self.pi[0].len()
    }

    pub fn restrict(&self, c: &ConstraintSet) -> Result<Self> {
        if c.dim() != self.dim() {
            return Err(Error::Shape("grid and constraint dimensions differ".into()));
        }
        let pi: Vec<_> = self.pi.iter().filter(|p| c.contains(p, false)).cloned().collect();
        if pi.is_empty() {
            return Err(Error::Invalid("no grid portfolio lies in the constraint set".into()));
        }
        Ok(Self { pi, kappa: self.kappa.clone() })
    }
}

/// One-step problem at a node: max over (pi, kappa) of D kappa^p dmu / p + E[L' a^p] / p.
#[derive(Debug, Clone)]
pub struct NodeProblem {
    pub increments: Vec<DVector<f64>>,
    pub probs: Vec<f64>,
    pub ell_next: Vec<f64>,
    pub weight: f64,
    pub dmu: f64,
    pub p: f64,
}

impl NodeProblem {
    pub fn new(node: &LatticeNode, next: &[f64], weight: f64, dmu: f64, p: f64) -> Result<Self> {
        let ell_next: Vec<f64> = node.branches.iter().map(|b| next[b.child]).collect();
        if ell_next.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Numerical("continuation value is negative or not finite".into()));
        }
        Ok(Self {
            increments: node.branches.iter().map(|b| b.increment.clone()).collect(),
            probs: node.branches.iter().map(|b| b.prob).collect(),
            ell_next,
            weight,
            dmu,
            p,
        })
    }

    pub fn dim(&self) -> usize {
        self.increments[0].len()
    }

    fn factor(&self, i: usize, pi: &DVector<f64>, kappa: f64) -> f64 {
        1.0 + pi.dot(&self.increments[i]) - kappa * self.dmu
    }

    /// Objective value; None when some branch has a negative wealth factor.
    pub fn objective(&self, pi: &DVector<f64>, kappa: f64) -> Option<f64> {
        let p = self.p;
        let mut total = if self.dmu > 0.0 {
            if kappa == 0.0 {
                if p > 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                self.weight * kappa.powf(p) * self.dmu / p
            }
        } else {
            0.0
        };
        for i in 0..self.probs.len() {
            let a = self.factor(i, pi, kappa);
            if a < -ZERO_FACTOR {
                return None;
            }
            if self.probs[i] == 0.0 {
                continue;
            }
            if a <= 0.0 {
                if p < 0.0 && self.ell_next[i] > 0.0 {
                    total = f64::NEG_INFINITY;
                }
                continue;
            }
            total += self.probs[i] * self.ell_next[i] * a.powf(p) / p;
        }
        Some(total)
    }

    /// Portfolio maximizing the continuation term when a fraction kappa dmu is consumed.
    pub fn portfolio_step(&self, c: &ConstraintSet, kappa: f64) -> Result<DVector<f64>> {
        let d = self.dim();
        let a0 = 1.0 - kappa * self.dmu;
        if !(a0 > 0.0) {
            return Err(Error::Numerical("consumption exhausts wealth".into()));
        }
        let mass: f64 = self.probs.iter().sum();
        let ell_ref = self.probs.iter().zip(&self.ell_next).map(|(p, l)| p * l).sum::<f64>() / mass;
        let scale = a0.powf(self.p);
        let atoms: Vec<JumpAtom> = self
            .increments
            .iter()
            .zip(&self.probs)
            .zip(&self.ell_next)
            .filter(|((x, p), _)| **p > 0.0 && x.iter().any(|v| *v != 0.0))
            .map(|((x, p), l)| JumpAtom { x: x.clone(), x_l: l - ell_ref, weight: p * scale })
            .collect();
        if atoms.is_empty() {
            return Ok(DVector::zeros(d));
        }
        let b = atoms.iter().fold(DVector::zeros(d), |acc, a| acc + CutOff::Truncation.apply(&a.x) * a.weight);
        let chars = JointCharacteristics {
            b_r: b,
            a_l: 0.0,
            c_r: DMatrix::zeros(d, d),
            c_rl: DVector::zeros(d),
            c_l: None,
            atoms,
            d_a: 1.0,
            cutoff: CutOff::Truncation,
        };
        let ctx = GContext::new(ell_ref, chars, self.p, c.scaled(1.0 / a0))?;
        let (y, _) = maximize_g(&ctx)?;
        Ok(y * a0)
    }

    /// Optimal propensity to consume for a fixed portfolio (bisection on the first-order condition).
    pub fn kappa_step(&self, pi: &DVector<f64>) -> f64 {
        if self.dmu == 0.0 {
            return 0.0;
        }
        let p = self.p;
        let live: Vec<usize> = (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect();
        let limit = live.iter().map(|&i| self.factor(i, pi, 0.0) / self.dmu).fold(f64::INFINITY, f64::min);
        if !(limit > 0.0) {
            return 0.0;
        }
        let slope = |k: f64| {
            let cont: f64 =
                live.iter().map(|&i| self.probs[i] * self.ell_next[i] * self.factor(i, pi, k).powf(p - 1.0)).sum();
            self.weight * k.powf(p - 1.0) - cont
        };
        let (mut lo, mut hi) = (0.0, if limit.is_finite() { limit } else { 1.0 });
        if !limit.is_finite() {
            while slope(hi) > 0.0 {
                hi *= 2.0;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// (pi, kappa, L) over the full constraint set.
    pub fn solve(&self, c: &ConstraintSet) -> Result<(DVector<f64>, f64, f64)> {
        let (pi, kappa) = if self.dmu == 0.0 {
            (self.portfolio_step(c, 0.0)?, 0.0)
        } else if c.is_cone() {
            // the portfolio direction does not depend on consumption; kappa then solves
            // D k^(p-1) = M (1 - k dmu)^(p-1) with M = E[L' (1 + y'dR)^p]
            let y = self.portfolio_step(c, 0.0)?;
            let m: f64 = (0..self.probs.len())
                .map(|i| self.probs[i] * self.ell_next[i] * self.factor(i, &y, 0.0).max(0.0).powf(self.p))
                .sum();
            let r = (self.weight / m).powf(1.0 / (1.0 - self.p));
            let kappa = r / (1.0 + r * self.dmu);
            (y * (1.0 - kappa * self.dmu), kappa)
        } else if let ConstraintSet::Finite { points } = c {
            let mut best: Option<(DVector<f64>, f64, f64)> = None;
            for pt in points {
                let kappa = self.kappa_step(pt);
                if let Some(j) = self.objective(pt, kappa) {
                    if best.as_ref().is_none_or(|b| j > b.2) {
                        best = Some((pt.clone(), kappa, j));
                    }
                }
            }
            let (pi, kappa, _) = best.ok_or_else(|| Error::InfiniteValue {
                slice: 0,
                node: 0,
                reason: "no admissible portfolio".into(),
            })?;
            (pi, kappa)
        } else {
            let mut pi = self.portfolio_step(c, 0.0)?;
            let mut kappa = self.kappa_step(&pi);
            for _ in 0..ALTERNATIONS {
                let next_pi = self.portfolio_step(c, kappa)?;
                let next_kappa = self.kappa_step(&next_pi);
                let done = (&next_pi - &pi).amax() <= 1e-13 && (next_kappa - kappa).abs() <= 1e-14;
                pi = next_pi;
                kappa = next_kappa;
                if done {
                    break;
                }
            }
            (pi, kappa)
        };
        let j =
            self.objective(&pi, kappa).ok_or_else(|| Error::Numerical("optimizer left the admissible set".into()))?;
        let ell = self.p * j;
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::InfiniteValue { slice: 0, node: 0, reason: format!("opportunity value {ell}") });
        }
        Ok((pi, kappa, ell))
    }

    /// (pi, kappa, L) over a strategy grid; ties keep the first grid entry.
    pub fn solve_grid(&self, grid: &StrategyGrid) -> Result<(DVector<f64>, f64, f64)> {
        let kappas: &[f64] = if self.dmu > 0.0 { &grid.kappa } else { &[0.0] };
        let mut best: Option<(DVector<f64>, f64, f64)> = None;
        for pi in &grid.pi {
            for &kappa in kappas {
                if let Some(j) = self.objective(pi, kappa) {
                    if j > f64::NEG_INFINITY && best.as_ref().is_none_or(|b| j > b.2) {
                        best = Some((pi.clone(), kappa, j));
                    }
                }
            }
        }
        let (pi, kappa, j) = best.ok_or_else(|| Error::InfiniteValue {
            slice: 0,
            node: 0,
            reason: "no admissible grid strategy".into(),
        })?;
        Ok((pi, kappa, self.p * j))
    }
}
