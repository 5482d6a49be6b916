//! Per-round surrogate losses fed to exponential weights.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, invalid, Result};

/// Tolerance on the smallest eigenvalue of a curvature matrix.
pub const PSD_TOL: f64 = 1e-10;

/// Curvature `M` of a quadratic surrogate, kept structured when possible.
#[derive(Debug, Clone, PartialEq)]
pub enum Curvature {
    Zero,
    /// `alpha * I`.
    Isotropic(f64),
    /// `scale * v v^T`.
    RankOne { scale: f64, direction: DVector<f64> },
    Dense(DMatrix<f64>),
}

impl Curvature {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Curvature::Zero => Ok(()),
            Curvature::Isotropic(a) if *a >= 0.0 && a.is_finite() => Ok(()),
            Curvature::Isotropic(a) => Err(invalid("curvature", format!("alpha = {a} must be nonnegative"))),
            Curvature::RankOne { scale, direction } => {
                check_dim(dim, direction.len())?;
                if *scale >= 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("curvature", format!("rank-one scale {scale} must be nonnegative")))
                }
            }
            Curvature::Dense(m) => {
                check_dim(dim, m.nrows())?;
                check_dim(dim, m.ncols())?;
                if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(invalid("curvature", "matrix is not symmetric"));
                }
                let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
                if min < -PSD_TOL {
                    return Err(invalid("curvature", format!("smallest eigenvalue {min:e} is negative")));
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Curvature::Zero => true,
            Curvature::Isotropic(a) => *a == 0.0,
            Curvature::RankOne { scale, direction } => *scale == 0.0 || direction.iter().all(|x| *x == 0.0),
            Curvature::Dense(m) => m.iter().all(|x| *x == 0.0),
        }
    }

    pub fn to_matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Curvature::Zero => DMatrix::zeros(dim, dim),
            Curvature::Isotropic(a) => DMatrix::identity(dim, dim) * *a,
            Curvature::RankOne { scale, direction } => direction * direction.transpose() * *scale,
            Curvature::Dense(m) => m.clone(),
        }
    }

    /// `M v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Curvature::Zero => DVector::zeros(v.len()),
            Curvature::Isotropic(a) => v * *a,
            Curvature::RankOne { scale, direction } => direction * (*scale * direction.dot(v)),
            Curvature::Dense(m) => m * v,
        }
    }
}

/// `<w - anchor, g> + (w - anchor)^T M (w - anchor) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurrogate {
    gradient: DVector<f64>,
    curvature: Curvature,
    anchor: DVector<f64>,
}

impl QuadraticSurrogate {
    pub fn new(gradient: DVector<f64>, curvature: Curvature, anchor: DVector<f64>) -> Result<Self> {
        let d = gradient.len();
        check_dim(d, anchor.len())?;
        finite("gradient", &gradient)?;
        finite("anchor", &anchor)?;
        curvature.validate(d)?;
        Ok(Self {
            gradient,
            curvature,
            anchor,
        })
    }

    pub fn gradient(&self) -> &DVector<f64> {
        &self.gradient
    }

    pub fn curvature(&self) -> &Curvature {
        &self.curvature
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        let diff = w - &self.anchor;
        diff.dot(&self.gradient) + 0.5 * diff.dot(&self.curvature.apply(&diff))
    }
}

/// A loss handed to the exponential-weights engine.
#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateLoss {
    /// `<w, g>`.
    Linear { gradient: DVector<f64> },
    Quadratic(QuadraticSurrogate),
    /// `-x ln u - (1 - x) ln(1 - u)` for a probability `u` and outcome
    /// `x in [0, 1]`.
    LogLoss { outcome: f64 },
}

impl SurrogateLoss {
    pub fn linear(gradient: DVector<f64>) -> Result<Self> {
        finite("gradient", &gradient)?;
        Ok(SurrogateLoss::Linear { gradient })
    }

    pub fn log_loss(outcome: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&outcome) {
            return Err(invalid("outcome", format!("{outcome} outside [0, 1]")));
        }
        Ok(SurrogateLoss::LogLoss { outcome })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SurrogateLoss::Linear { .. } => "linear",
            SurrogateLoss::Quadratic(_) => "quadratic",
            SurrogateLoss::LogLoss { .. } => "log",
        }
    }

    /// Loss at `w`. For the log loss `w[0]` is the probability `u`.
    pub fn value(&self, w: &DVector<f64>) -> f64 {
        match self {
            SurrogateLoss::Linear { gradient } => gradient.dot(w),
            SurrogateLoss::Quadratic(q) => q.value(w),
            SurrogateLoss::LogLoss { outcome } => log_loss(*outcome, w[0]),
        }
    }
}

/// `-x ln u - (1 - x) ln(1 - u)` with `0 ln 0 = 0`.
pub fn log_loss(outcome: f64, u: f64) -> f64 {
    let mut loss = 0.0;
    if outcome > 0.0 {
        loss -= outcome * u.ln();
    }
    if outcome < 1.0 {
        loss -= (1.0 - outcome) * (1.0 - u).ln();
    }
    loss
}

fn finite(name: &'static str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(name, "entries must be finite"))
    }
}
