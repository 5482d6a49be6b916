//! Classical online learners written out directly: gradient descent, EG±,
//! mirror descent / FTRL and the Gaussian quadratic-surrogate recursion
//! (which covers strongly convex GD and the Online Newton Step).
//!
//! Each one is an instance of exponential weights on a surrogate loss; the
//! integration tests check the trajectories against [`crate::ew`].

use nalgebra::{DMatrix, DVector};

use crate::bregman::BregmanPair;
use crate::domain::ConvexDomain;
use crate::error::{check_dim, invalid, EwError, Result};
use crate::ew::{Flavor, Schedule};
use crate::expfam::{spd_inverse, GaussianState};
use crate::loss::{Curvature, QuadraticSurrogate};

/// Rounds between full re-inversions of the precision in [`QuadEwState`].
pub const REINVERSION_PERIOD: usize = 256;

/// One gradient-descent step.
///
/// Greedy: `project(w - eta g)`. Lazy: `w` is the starting point `w_1`,
/// `previous_sum` is `g_1 + ... + g_{t-1}`, and the step returns
/// `project(w_1 - eta (previous_sum + g))`.
pub fn gd_step(
    w: &DVector<f64>,
    g: &DVector<f64>,
    eta: f64,
    domain: &ConvexDomain,
    flavor: Flavor,
    previous_sum: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(w.len(), g.len())?;
    check_dim(w.len(), previous_sum.len())?;
    let raw = match flavor {
        Flavor::Greedy => w - g * eta,
        Flavor::Lazy => w - (previous_sum + g) * eta,
    };
    domain.project_euclidean(&raw)
}

/// Projected gradient descent, lazy or greedy.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDescent {
    start: DVector<f64>,
    current: DVector<f64>,
    gradient_sum: DVector<f64>,
    schedule: Schedule,
    flavor: Flavor,
    round: usize,
}

impl GradientDescent {
    pub fn new(start: DVector<f64>, schedule: Schedule, flavor: Flavor, domain: &ConvexDomain) -> Result<Self> {
        let start = domain.project_euclidean(&start)?;
        Ok(Self {
            current: start.clone(),
            gradient_sum: DVector::zeros(start.len()),
            start,
            schedule,
            flavor,
            round: 0,
        })
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.current
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn step(&mut self, g: &DVector<f64>, domain: &ConvexDomain) -> Result<&DVector<f64>> {
        let eta = self.schedule.eta(self.round + 1)?;
        let anchor = match self.flavor {
            Flavor::Greedy => &self.current,
            Flavor::Lazy => &self.start,
        };
        let next = gd_step(anchor, g, eta, domain, self.flavor, &self.gradient_sum)?;
        self.gradient_sum += g;
        self.current = next;
        self.round += 1;
        Ok(&self.current)
    }
}

/// The EG± multiplicative update with joint normalization:
/// `w+_i <- w+_i exp(-eta g_i)`, `w-_i <- w-_i exp(eta g_i)`, then both are
/// divided by the common total.
pub fn egpm_step(
    wplus: &DVector<f64>,
    wminus: &DVector<f64>,
    g: &DVector<f64>,
    eta: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim(wplus.len(), wminus.len())?;
    check_dim(wplus.len(), g.len())?;
    if !(eta > 0.0) {
        return Err(invalid("eta", format!("{eta} must be positive")));
    }
    if wplus.iter().chain(wminus.iter()).any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(invalid("weights", "EG± weights must be nonnegative and finite"));
    }
    let plus = wplus.zip_map(g, |w, gi| w * (-eta * gi).exp());
    let minus = wminus.zip_map(g, |w, gi| w * (eta * gi).exp());
    let total = plus.sum() + minus.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(EwError::ZeroWeights);
    }
    Ok((plus / total, minus / total))
}

/// EG± over the L1 ball of radius `scale`, predicting `scale (w+ - w-)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentiatedGradientPm {
    plus: DVector<f64>,
    minus: DVector<f64>,
    scale: f64,
    schedule: Schedule,
    round: usize,
}

impl ExponentiatedGradientPm {
    /// Uniform start `1/(2d)` on all `2d` signed basis vectors.
    pub fn new(dim: usize, scale: f64, schedule: Schedule) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("scale", format!("{scale} must be positive")));
        }
        let w = DVector::from_element(dim, 0.5 / dim as f64);
        Ok(Self {
            plus: w.clone(),
            minus: w,
            scale,
            schedule,
            round: 0,
        })
    }

    /// `eta = sqrt(2 ln(2d) / (T M^2 G^2))`.
    pub fn tuned_eta(dim: usize, horizon: usize, scale: f64, gradient_bound: f64) -> f64 {
        (2.0 * (2.0 * dim as f64).ln() / (horizon as f64 * scale * scale * gradient_bound * gradient_bound)).sqrt()
    }

    pub fn weights(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.plus, &self.minus)
    }

    pub fn prediction(&self) -> DVector<f64> {
        (&self.plus - &self.minus) * self.scale
    }

    pub fn step(&mut self, g: &DVector<f64>) -> Result<DVector<f64>> {
        let eta = self.schedule.eta(self.round + 1)?;
        let (plus, minus) = egpm_step(&self.plus, &self.minus, &(g * self.scale), eta)?;
        self.plus = plus;
        self.minus = minus;
        self.round += 1;
        Ok(self.prediction())
    }
}

/// One mirror-descent step with regularizer `F*`.
///
/// Greedy: `theta = grad F*(w) - eta g`. Lazy (FTRL): `w` is `w_1`,
/// `previous_sum` is `g_1 + ... + g_{t-1}` and
/// `theta = grad F*(w_1) - eta (previous_sum + g)`. Then `w~ = grad F(theta)`
/// is Bregman-projected onto `domain`.
pub fn md_step<B: BregmanPair + ?Sized>(
    w: &DVector<f64>,
    g: &DVector<f64>,
    eta: f64,
    carrier: &B,
    domain: &ConvexDomain,
    flavor: Flavor,
    previous_sum: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(w.len(), g.len())?;
    check_dim(w.len(), previous_sum.len())?;
    let theta = carrier.natural_map(w)?;
    let theta = match flavor {
        Flavor::Greedy => theta - g * eta,
        Flavor::Lazy => theta - (previous_sum + g) * eta,
    };
    carrier.project(&carrier.mean_map(&theta), domain)
}

/// Mirror descent / FTRL with a fixed carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorDescent<B> {
    carrier: B,
    start: DVector<f64>,
    current: DVector<f64>,
    gradient_sum: DVector<f64>,
    schedule: Schedule,
    flavor: Flavor,
    round: usize,
}

impl<B: BregmanPair> MirrorDescent<B> {
    pub fn new(carrier: B, start: DVector<f64>, schedule: Schedule, flavor: Flavor, domain: &ConvexDomain) -> Result<Self> {
        carrier.natural_map(&start)?;
        let start = carrier.project(&start, domain)?;
        Ok(Self {
            carrier,
            current: start.clone(),
            gradient_sum: DVector::zeros(start.len()),
            start,
            schedule,
            flavor,
            round: 0,
        })
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.current
    }

    pub fn carrier(&self) -> &B {
        &self.carrier
    }

    pub fn step(&mut self, g: &DVector<f64>, domain: &ConvexDomain) -> Result<&DVector<f64>> {
        let eta = self.schedule.eta(self.round + 1)?;
        let anchor = match self.flavor {
            Flavor::Greedy => &self.current,
            Flavor::Lazy => &self.start,
        };
        let next = md_step(anchor, g, eta, &self.carrier, domain, self.flavor, &self.gradient_sum)?;
        self.gradient_sum += g;
        self.current = next;
        self.round += 1;
        Ok(&self.current)
    }
}

/// Mean and covariance recursion of exponential weights with a Gaussian
/// prior, constant learning rate and quadratic surrogate losses:
///
/// ```text
/// Sigma_{t+1}^{-1} = Sigma_t^{-1} + eta M_t
/// w~_{t+1} = w_t - eta Sigma_{t+1} g_t        (greedy)
/// w~_{t+1} = w~_t - eta Sigma_{t+1} g_t       (lazy)
/// w_{t+1} = Mahalanobis projection of w~_{t+1} under Sigma_{t+1}^{-1}
/// ```
///
/// Rank-one curvatures update the covariance by Sherman-Morrison; the
/// covariance is recomputed from the precision every
/// [`REINVERSION_PERIOD`] rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadEwState {
    mean: DVector<f64>,
    raw_mean: DVector<f64>,
    precision: DMatrix<f64>,
    covariance: DMatrix<f64>,
    eta: f64,
    flavor: Flavor,
    round: usize,
    incremental_updates: usize,
}

impl QuadEwState {
    pub fn new(prior: &GaussianState, eta: f64, flavor: Flavor, domain: &ConvexDomain) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("{eta} must be positive")));
        }
        let mean = domain.project_mahalanobis(prior.mean(), prior.precision())?;
        Ok(Self {
            raw_mean: mean.clone(),
            mean,
            precision: prior.precision().clone(),
            covariance: prior.covariance().clone(),
            eta,
            flavor,
            round: 0,
            incremental_updates: 0,
        })
    }

    /// Requires a constant schedule; the recursion is only exact for one.
    pub fn with_schedule(prior: &GaussianState, schedule: &Schedule, flavor: Flavor, domain: &ConvexDomain) -> Result<Self> {
        if !schedule.is_constant() {
            return Err(invalid("schedule", "quadratic-surrogate recursion needs a constant learning rate"));
        }
        Self::new(prior, schedule.eta(1)?, flavor, domain)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn raw_mean(&self) -> &DVector<f64> {
        &self.raw_mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn step(&mut self, loss: &QuadraticSurrogate, domain: &ConvexDomain) -> Result<&DVector<f64>> {
        let d = self.mean.len();
        check_dim(d, loss.dim())?;
        let eta = self.eta;
        match loss.curvature() {
            c if c.is_zero() => {}
            Curvature::RankOne { scale, direction } => {
                self.precision += direction * direction.transpose() * (eta * scale);
                let sv = &self.covariance * direction;
                let denom = 1.0 + eta * scale * direction.dot(&sv);
                if !(denom > 0.0) {
                    return Err(EwError::NotPositiveDefinite);
                }
                self.covariance -= &sv * sv.transpose() * (eta * scale / denom);
                self.incremental_updates += 1;
                if self.incremental_updates >= REINVERSION_PERIOD {
                    self.covariance = spd_inverse(&self.precision)?;
                    self.incremental_updates = 0;
                }
            }
            c => {
                self.precision += c.to_matrix(d) * eta;
                self.covariance = spd_inverse(&self.precision)?;
                self.incremental_updates = 0;
            }
        }
        let step = &self.covariance * loss.gradient() * eta;
        self.raw_mean = match self.flavor {
            Flavor::Greedy => &self.mean - step,
            Flavor::Lazy => &self.raw_mean - step,
        };
        self.mean = domain.project_mahalanobis(&self.raw_mean, &self.precision)?;
        self.round += 1;
        Ok(&self.mean)
    }
}

/// `beta = min(1 / (4 G B), alpha) / 2`.
pub fn ons_beta(alpha: f64, gradient_bound: f64, diameter: f64) -> Result<f64> {
    for (name, v) in [("alpha", alpha), ("G", gradient_bound), ("B", diameter)] {
        if !(v > 0.0) {
            return Err(invalid("ons constant", format!("{name} = {v} must be positive")));
        }
    }
    Ok(0.5 * (1.0 / (4.0 * gradient_bound * diameter)).min(alpha))
}

/// The exp-concave quadratic surrogate with curvature `beta g g^T` at `anchor`.
pub fn ons_surrogate(
    g: &DVector<f64>,
    anchor: &DVector<f64>,
    alpha: f64,
    gradient_bound: f64,
    diameter: f64,
) -> Result<QuadraticSurrogate> {
    let beta = ons_beta(alpha, gradient_bound, diameter)?;
    QuadraticSurrogate::new(
        g.clone(),
        Curvature::RankOne {
            scale: beta,
            direction: g.clone(),
        },
        anchor.clone(),
    )
}

/// The gradient-descent rate `1 / (1/(eta sigma^2) + alpha t)` induced by
/// greedy EW with curvature `alpha I`; `eta_sigma2 = inf` gives `1/(alpha t)`.
pub fn strongly_convex_rate(eta_sigma2: f64, alpha: f64, t: usize) -> f64 {
    1.0 / (1.0 / eta_sigma2 + alpha * t as f64)
}
