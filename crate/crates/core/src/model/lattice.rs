use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{JointCharacteristics, PowerUtilitySpec};
use crate::error::{Error, Result};
use crate::linalg;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Diffusion,
    Jump,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub increment: DVector<f64>,
    pub prob: f64,
    /// index into the next time slice
    pub child: usize,
    pub kind: BranchKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatticeNode {
    pub branches: Vec<Branch>,
}

impl LatticeNode {
    pub fn mean_increment(&self) -> DVector<f64> {
        let d = self.branches.first().map_or(0, |b| b.increment.len());
        self.branches.iter().fold(DVector::zeros(d), |acc, b| acc + &b.increment * b.prob)
    }
}

/// (node index, branch index) in the previous slice.
pub type Parent = Option<(usize, usize)>;

/// Return increments on a finite time grid. Slices may share children (a Markov lattice)
/// or form a tree; path-wise quantities need the tree form.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketLattice {
    dim: usize,
    times: Vec<f64>,
    slices: Vec<Vec<LatticeNode>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Binomial,
    Multinomial,
}

impl MarketLattice {
    pub fn new(dim: usize, times: Vec<f64>, slices: Vec<Vec<LatticeNode>>) -> Result<Self> {
        if times.len() < 2 || slices.len() != times.len() {
            return Err(Error::Invalid("lattice needs at least one step and one slice per time".into()));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("time grid must start at 0 and increase strictly".into()));
        }
        if slices[0].len() != 1 {
            return Err(Error::Invalid("lattice must start from a single root".into()));
        }
        let last = slices.len() - 1;
        for (k, slice) in slices.iter().enumerate() {
            if slice.is_empty() {
                return Err(Error::Invalid(format!("slice {k} is empty")));
            }
            let mut reached = vec![false; if k < last { slices[k + 1].len() } else { 0 }];
            for (i, node) in slice.iter().enumerate() {
                if k == last {
                    if !node.branches.is_empty() {
                        return Err(Error::Invalid(format!("terminal node {i} has branches")));
                    }
                    continue;
                }
                if node.branches.is_empty() {
                    return Err(Error::Invalid(format!("node ({k},{i}) has no branches")));
                }
                let mut total = 0.0;
                for b in &node.branches {
                    if !(b.prob > 0.0) || b.increment.len() != dim || b.child >= reached.len() {
                        return Err(Error::Invalid(format!("node ({k},{i}) has an invalid branch")));
                    }
                    if !b.increment.iter().all(|v| v.is_finite()) {
                        return Err(Error::Invalid(format!("node ({k},{i}) has a non-finite increment")));
                    }
                    reached[b.child] = true;
                    total += b.prob;
                }
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::Invalid(format!("node ({k},{i}) probabilities sum to {total}")));
                }
            }
            if reached.iter().any(|r| !r) {
                return Err(Error::Invalid(format!("slice {} has unreachable nodes", k + 1)));
            }
        }
        Ok(Self { dim, times, slices })
    }

    /// Same branch table at every node, either sharing one node per slice or as a full tree.
    pub fn iid(dim: usize, times: Vec<f64>, branches: &[(DVector<f64>, f64, BranchKind)], tree: bool) -> Result<Self> {
        if tree {
            return Self::tree(dim, times, |_, _| branches.iter().map(|(x, p, k)| (x.clone(), *p, *k)).collect());
        }
        let n = times.len();
        let mut slices = Vec::with_capacity(n);
        for k in 0..n {
            let node = if k + 1 < n {
                LatticeNode {
                    branches: branches
                        .iter()
                        .map(|(x, p, kind)| Branch { increment: x.clone(), prob: *p, child: 0, kind: *kind })
                        .collect(),
                }
            } else {
                LatticeNode::default()
            };
            slices.push(vec![node]);
        }
        Self::new(dim, times, slices)
    }

    /// Full tree; `branches(k, i)` lists (increment, prob, kind) at node i of slice k.
    pub fn tree<F>(dim: usize, times: Vec<f64>, mut branches: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Vec<(DVector<f64>, f64, BranchKind)>,
    {
        let n = times.len();
        let mut slices: Vec<Vec<LatticeNode>> = vec![vec![LatticeNode::default()]];
        for k in 0..n.saturating_sub(1) {
            let mut next = 0usize;
            for i in 0..slices[k].len() {
                let list = branches(k, i);
                slices[k][i].branches = list
                    .into_iter()
                    .map(|(x, p, kind)| {
                        next += 1;
                        Branch { increment: x, prob: p, child: next - 1, kind }
                    })
                    .collect();
            }
            slices.push(vec![LatticeNode::default(); next]);
        }
        Self::new(dim, times, slices)
    }

    /// Equally spaced grid on [0, horizon].
    pub fn uniform_times(horizon: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn slices(&self) -> &[Vec<LatticeNode>] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &[LatticeNode] {
        &self.slices[k]
    }

    pub fn node(&self, k: usize, i: usize) -> &LatticeNode {
        &self.slices[k][i]
    }

    pub fn num_nodes(&self) -> usize {
        self.slices.iter().map(Vec::len).sum()
    }

    /// Consumption clock increment of step k.
    pub fn dmu(&self, spec: &PowerUtilitySpec, k: usize) -> f64 {
        if spec.consumes() {
            self.dt(k)
        } else {
            0.0
        }
    }

    pub fn is_tree(&self) -> bool {
        self.slices.windows(2).all(|w| {
            let mut count = vec![0usize; w[1].len()];
            for node in &w[0] {
                for b in &node.branches {
                    count[b.child] += 1;
                }
            }
            count.iter().all(|&c| c == 1)
        })
    }

    /// Parent (node index, branch index) of every node; None at the root. Trees only.
    pub fn parents(&self) -> Result<Vec<Vec<Parent>>> {
        if !self.is_tree() {
            return Err(Error::Unsupported("path-wise quantities need a tree lattice".into()));
        }
        let mut out: Vec<Vec<Option<(usize, usize)>>> = self.slices.iter().map(|s| vec![None; s.len()]).collect();
        for k in 0..self.steps() {
            for (i, node) in self.slices[k].iter().enumerate() {
                for (j, b) in node.branches.iter().enumerate() {
                    out[k + 1][b.child] = Some((i, j));
                }
            }
        }
        Ok(out)
    }

    /// Unfold shared children into a tree, refusing more than `max_nodes` nodes.
    pub fn expand_tree(&self, max_nodes: usize) -> Result<MarketLattice> {
        let mut origin: Vec<Vec<usize>> = vec![vec![0]];
        let mut slices: Vec<Vec<LatticeNode>> = vec![vec![LatticeNode::default()]];
        let mut total = 1usize;
        for k in 0..self.steps() {
            let mut next_origin = Vec::new();
            for (i, &src) in origin[k].iter().enumerate() {
                let node = &self.slices[k][src];
                slices[k][i].branches = node
                    .branches
                    .iter()
                    .map(|b| {
                        next_origin.push(b.child);
                        Branch { child: next_origin.len() - 1, ..b.clone() }
                    })
                    .collect();
            }
            total += next_origin.len();
            if total > max_nodes {
                return Err(Error::Budget(format!("tree would exceed {max_nodes} nodes")));
            }
            slices.push(vec![LatticeNode::default(); next_origin.len()]);
            origin.push(next_origin);
        }
        Self::new(self.dim, self.times.clone(), slices)
    }

    /// Apply a linear map to every increment (portfolio change of coordinates).
    pub fn map_increments(&self, m: &DMatrix<f64>) -> Result<MarketLattice> {
        let slices = self
            .slices
            .iter()
            .map(|s| {
                s.iter()
                    .map(|n| LatticeNode {
                        branches: n
                            .branches
                            .iter()
                            .map(|b| Branch { increment: m * &b.increment, ..b.clone() })
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        Self::new(m.nrows(), self.times.clone(), slices)
    }
}

/// Per-node portfolio and propensity to consume.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub pi: Vec<Vec<DVector<f64>>>,
    pub kappa: Vec<Vec<f64>>,
}

impl Strategy {
    pub fn constant(lattice: &MarketLattice, pi: &DVector<f64>, kappa: f64) -> Self {
        let last = lattice.steps();
        Self {
            pi: lattice.slices().iter().map(|s| vec![pi.clone(); s.len()]).collect(),
            kappa: lattice
                .slices()
                .iter()
                .enumerate()
                .map(|(k, s)| vec![if k == last { 1.0 } else { kappa }; s.len()])
                .collect(),
        }
    }

    pub fn zero(lattice: &MarketLattice) -> Self {
        Self::constant(lattice, &DVector::zeros(lattice.dim()), 0.0)
    }

    pub fn check_shape(&self, lattice: &MarketLattice) -> Result<()> {
        let ok = self.pi.len() == lattice.slices().len()
            && self.kappa.len() == lattice.slices().len()
            && lattice.slices().iter().enumerate().all(|(k, s)| {
                self.pi[k].len() == s.len()
                    && self.kappa[k].len() == s.len()
                    && self.pi[k].iter().all(|v| v.len() == lattice.dim())
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("strategy table does not match the lattice".into()))
        }
    }
}

/// X at every node of a tree: X_child = X (1 + pi'dR - kappa dmu).
pub fn wealth_path(lattice: &MarketLattice, spec: &PowerUtilitySpec, strategy: &Strategy) -> Result<Vec<Vec<f64>>> {
    strategy.check_shape(lattice)?;
    lattice.parents()?;
    let mut x: Vec<Vec<f64>> = lattice.slices().iter().map(|s| vec![0.0; s.len()]).collect();
    x[0][0] = spec.x0();
    for k in 0..lattice.steps() {
        let dmu = lattice.dmu(spec, k);
        for (i, node) in lattice.slice(k).iter().enumerate() {
            let (pi, kappa) = (&strategy.pi[k][i], strategy.kappa[k][i]);
            for (j, b) in node.branches.iter().enumerate() {
                let factor = 1.0 + pi.dot(&b.increment) - kappa * dmu;
                if !(factor > 0.0) {
                    return Err(Error::Admissibility { slice: k, node: i, branch: j, factor });
                }
                x[k + 1][b.child] = x[k][i] * factor;
            }
        }
    }
    Ok(x)
}

/// Moment-matching lattice with one node per slice (increments are i.i.d.).
///
/// Jump branches carry the atom itself with probability weight*dt; the diffusion branches
/// carry the remaining mass with mean making E[dR] = (b + sum w (x - h(x))) dt and
/// covariance contribution c dt.
pub fn build_lattice(
    chars: &JointCharacteristics,
    horizon: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<MarketLattice> {
    chars.validate()?;
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::Invalid("lattice needs at least one step and a positive horizon".into()));
    }
    let d = chars.dim();
    if scheme == Scheme::Binomial && d != 1 {
        return Err(Error::Invalid("binomial scheme needs one asset".into()));
    }
    let dt = horizon / steps as f64;
    let rate: f64 = chars.active_atoms().map(|a| a.weight).sum();
    let jump_mass = rate * dt;
    if jump_mass >= 1.0 {
        return Err(Error::StepSize { mass: jump_mass, max_dt: 1.0 / rate });
    }
    let diff_mass = 1.0 - jump_mass;
    let mut jump_mean = DVector::zeros(d);
    let mut branches: Vec<(DVector<f64>, f64, BranchKind)> = Vec::new();
    for a in chars.active_atoms() {
        jump_mean += &a.x * (a.weight * dt);
        branches.push((a.x.clone(), a.weight * dt, BranchKind::Jump));
    }
    let mean = (chars.mean_rate() * dt - jump_mean) / diff_mass;
    let cov = &chars.c_r * (dt / diff_mass);
    let mut diffusion: Vec<(DVector<f64>, f64)> = Vec::new();
    match scheme {
        Scheme::Binomial => {
            let s = cov[(0, 0)].max(0.0).sqrt();
            diffusion.push((DVector::from_element(1, mean[0] + s), 0.5 * diff_mass));
            diffusion.push((DVector::from_element(1, mean[0] - s), 0.5 * diff_mass));
        }
        Scheme::Multinomial => {
            let root = linalg::psd_sqrt(&cov)?;
            let scale = (d as f64).sqrt();
            let p = diff_mass / (2 * d) as f64;
            for j in 0..d {
                let col: DVector<f64> = root.column(j).into_owned() * scale;
                diffusion.push((&mean + &col, p));
                diffusion.push((&mean - &col, p));
            }
        }
    }
    // merge coincident diffusion points (degenerate covariance)
    let mut merged: Vec<(DVector<f64>, f64)> = Vec::new();
    for (x, p) in diffusion {
        match merged.iter_mut().find(|(y, _)| (y - &x).amax() == 0.0) {
            Some(slot) => slot.1 += p,
            None => merged.push((x, p)),
        }
    }
    let mut all: Vec<(DVector<f64>, f64, BranchKind)> =
        merged.into_iter().map(|(x, p)| (x, p, BranchKind::Diffusion)).collect();
    all.extend(branches);
    MarketLattice::iid(d, MarketLattice::uniform_times(horizon, steps), &all, false)
}
