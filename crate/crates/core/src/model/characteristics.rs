use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Truncation function for small jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutOff {
    /// h(x) = x 1_{|x| <= 1}
    #[default]
    Truncation,
    /// h = 0, only valid for finite jump lists
    Zero,
}

impl CutOff {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            CutOff::Truncation if x.norm() <= 1.0 => x.clone(),
            _ => DVector::zeros(x.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpAtom {
    pub x: DVector<f64>,
    /// jump of the companion process
    pub x_l: f64,
    /// intensity per unit clock
    pub weight: f64,
}

impl JumpAtom {
    pub fn returns(x: DVector<f64>, weight: f64) -> Self {
        Self { x, x_l: 0.0, weight }
    }
}

/// Differential characteristics of (R, L) per unit of the clock.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCharacteristics {
    pub b_r: DVector<f64>,
    pub a_l: f64,
    pub c_r: DMatrix<f64>,
    pub c_rl: DVector<f64>,
    pub c_l: Option<f64>,
    pub atoms: Vec<JumpAtom>,
    pub d_a: f64,
    pub cutoff: CutOff,
}

impl JointCharacteristics {
    /// Characteristics of R alone (companion process constant).
    pub fn returns_only(b: DVector<f64>, c: DMatrix<f64>, atoms: Vec<(DVector<f64>, f64)>) -> Result<Self> {
        let d = b.len();
        let chars = Self {
            b_r: b,
            a_l: 0.0,
            c_r: c,
            c_rl: DVector::zeros(d),
            c_l: None,
            atoms: atoms.into_iter().map(|(x, w)| JumpAtom::returns(x, w)).collect(),
            d_a: 1.0,
            cutoff: CutOff::Truncation,
        };
        chars.validate()?;
        Ok(chars)
    }

    pub fn scalar(b: f64, c: f64, atoms: &[(f64, f64)]) -> Result<Self> {
        Self::returns_only(
            DVector::from_element(1, b),
            DMatrix::from_element(1, 1, c),
            atoms.iter().map(|&(x, w)| (DVector::from_element(1, x), w)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.b_r.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.c_r.nrows() != d || self.c_r.ncols() != d || self.c_rl.len() != d {
            return Err(Error::Invalid(format!("characteristics dimensions disagree (d = {d})")));
        }
        if !(self.d_a > 0.0 && self.d_a.is_finite()) {
            return Err(Error::Invalid("clock increment must be positive".into()));
        }
        let finite = self.b_r.iter().chain(self.c_r.iter()).chain(self.c_rl.iter()).all(|v| v.is_finite())
            && self.a_l.is_finite();
        if !finite {
            return Err(Error::Invalid("characteristics must be finite".into()));
        }
        if (&self.c_r - self.c_r.transpose()).amax() > 1e-12 * (1.0 + self.c_r.amax()) {
            return Err(Error::Invalid("covariance must be symmetric".into()));
        }
        if !linalg::is_psd(&self.c_r, 1e-10) {
            return Err(Error::Invalid("covariance must be positive semidefinite".into()));
        }
        if let Some(cl) = self.c_l {
            let mut block = DMatrix::zeros(d + 1, d + 1);
            block.view_mut((0, 0), (d, d)).copy_from(&self.c_r);
            for i in 0..d {
                block[(i, d)] = self.c_rl[i];
                block[(d, i)] = self.c_rl[i];
            }
            block[(d, d)] = cl;
            if !linalg::is_psd(&block, 1e-10) {
                return Err(Error::Invalid("joint covariance block must be positive semidefinite".into()));
            }
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.x.len() != d {
                return Err(Error::Invalid(format!("atom {i} has wrong dimension")));
            }
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return Err(Error::Invalid(format!("atom {i} needs a finite nonnegative weight")));
            }
            if a.x.iter().all(|v| *v == 0.0) && a.x_l == 0.0 {
                return Err(Error::Invalid(format!("atom {i} is the zero jump")));
            }
            if !a.x.iter().all(|v| v.is_finite()) || !a.x_l.is_finite() {
                return Err(Error::Invalid(format!("atom {i} must be finite")));
            }
        }
        Ok(())
    }

    pub fn active_atoms(&self) -> impl Iterator<Item = &JumpAtom> {
        self.atoms.iter().filter(|a| a.weight > 0.0)
    }

    pub fn has_jumps(&self) -> bool {
        self.active_atoms().next().is_some()
    }

    /// Same characteristics expressed for another truncation function.
    pub fn recut(&self, cutoff: CutOff) -> Self {
        let mut b = self.b_r.clone();
        for a in self.active_atoms() {
            b += (cutoff.apply(&a.x) - self.cutoff.apply(&a.x)) * a.weight;
        }
        Self { b_r: b, cutoff, ..self.clone() }
    }

    /// Drift rate of R including large jumps: b + sum w (x - h(x)).
    pub fn mean_rate(&self) -> DVector<f64> {
        let mut m = self.b_r.clone();
        for a in self.active_atoms() {
            m += (&a.x - self.cutoff.apply(&a.x)) * a.weight;
        }
        m
    }
}

/// sum over atoms with |x| > 1 of w (1 + |x'|)(1 + |x|)^p.
pub fn p_suitable_check(chars: &JointCharacteristics, p: f64) -> f64 {
    chars
        .active_atoms()
        .filter(|a| a.x.norm() > 1.0)
        .map(|a| a.weight * (1.0 + a.x_l.abs()) * (1.0 + a.x.norm()).powf(p))
        .sum()
}

/// Minimum-norm lambda with c lambda = b.
pub fn check_structure_condition(b: &DVector<f64>, c: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (lambda, residual) = linalg::min_norm_solve(c, b);
    if residual > 1e-10 * (1.0 + b.norm()) {
        return Err(Error::StructureCondition { residual });
    }
    Ok(lambda)
}
