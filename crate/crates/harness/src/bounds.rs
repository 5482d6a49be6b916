//! Closed-form regret bounds, one evaluator per algorithm family.

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// `ln(2 sqrt T)` for the KT forecaster.
    Kt,
    /// `kl / eta + sum gaps`; with `eta_first` and `kl_max`, the greedy form
    /// `kl / eta_1 + (1/eta_T - 1/eta_1) kl_max + sum gaps`.
    Lemma1,
    /// `ln(2d)/eta + eta T M^2 G^2 / 2`, or `G M sqrt(2 T ln 2d)` without `eta`.
    EgPm,
    /// `dist_sq / (2 sigma^2 eta_T) + (sigma^2/2) sum eta_{t-1} |g_t|^2`.
    GdLazy,
    /// `dist_sq / (2 sigma^2 eta_T) + (sigma^2/2) sum eta_t |g_t|^2`, with
    /// `dist_sq` the largest `|u - w_t|^2`.
    GdGreedy,
    /// `prior_quad / (2 eta) + (eta/2) sum g^T Sigma_{t+1} g`.
    GaussQuadratic,
    /// Strongly convex losses with `x = eta sigma^2`:
    /// `(G^2/2a) ln((1/x + aT)/(1/x + a)) + G^2/(2/x + 2a) + D^2/(2x)`.
    StronglyConvex,
    /// Exp-concave losses: `(d/2b) ln(1 + x b G^2 T / d) + D^2/(2x)` with
    /// `b = min(1/(4GB), alpha)/2`.
    Ons,
    /// `2 eta* V + (2/eta*)(kl - ln gamma([eta*/2, eta*]))`.
    IProd,
    /// `sqrt(3T(kl + 3))`.
    CoinBetting,
    /// `2 sqrt(3 nu d T ln T) + 2`.
    Bandit,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Kt => "kt",
            BoundKind::Lemma1 => "lemma1",
            BoundKind::EgPm => "egpm",
            BoundKind::GdLazy => "gd-lazy",
            BoundKind::GdGreedy => "gd-greedy",
            BoundKind::GaussQuadratic => "gauss-quadratic",
            BoundKind::StronglyConvex => "strongly-convex",
            BoundKind::Ons => "ons",
            BoundKind::IProd => "iprod",
            BoundKind::CoinBetting => "coin-betting",
            BoundKind::Bandit => "bandit",
        }
    }
}

/// Inputs to [`evaluate_bound`]; each bound reads only what it needs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundInputs {
    pub horizon: Option<usize>,
    pub dim: Option<usize>,
    /// `G`.
    pub grad_bound: Option<f64>,
    /// `D`, the comparator norm bound.
    pub radius: Option<f64>,
    /// `M` for EG+-.
    pub scale: Option<f64>,
    pub alpha: Option<f64>,
    /// `B`.
    pub diameter: Option<f64>,
    /// The final (or only) learning rate.
    pub eta: Option<f64>,
    pub eta_first: Option<f64>,
    pub sigma2: Option<f64>,
    /// `eta sigma^2`; derived from `eta` and `sigma2` when absent.
    pub eta_sigma2: Option<f64>,
    pub kl: Option<f64>,
    pub kl_max: Option<f64>,
    /// Second-order statistic `V`.
    pub variance: Option<f64>,
    /// `gamma([eta*/2, eta*])`.
    pub gamma_mass: Option<f64>,
    pub nu: Option<f64>,
    pub dist_sq: Option<f64>,
    pub weighted_grad_sq: Option<f64>,
    pub quad_sum: Option<f64>,
    pub prior_quad: Option<f64>,
    pub gap_sum: Option<f64>,
}

fn req<T>(x: Option<T>, name: &'static str) -> Result<T> {
    x.ok_or(HarnessError::MissingConstant(name))
}

impl BoundInputs {
    fn eta_sigma2(&self) -> Result<f64> {
        match self.eta_sigma2 {
            Some(x) => Ok(x),
            None => Ok(req(self.eta, "eta")? * req(self.sigma2, "sigma2")?),
        }
    }
}

pub fn evaluate_bound(kind: BoundKind, p: &BoundInputs) -> Result<f64> {
    Ok(match kind {
        BoundKind::Kt => (2.0 * (req(p.horizon, "horizon")? as f64).sqrt()).ln(),
        BoundKind::Lemma1 => {
            let (kl, eta, gaps) = (req(p.kl, "kl")?, req(p.eta, "eta")?, req(p.gap_sum, "gap_sum")?);
            match p.eta_first {
                None => kl / eta + gaps,
                Some(eta1) => kl / eta1 + (1.0 / eta - 1.0 / eta1) * req(p.kl_max, "kl_max")? + gaps,
            }
        }
        BoundKind::EgPm => {
            let t = req(p.horizon, "horizon")? as f64;
            let ln2d = (2.0 * req(p.dim, "dim")? as f64).ln();
            let (m, g) = (req(p.scale, "scale")?, req(p.grad_bound, "grad_bound")?);
            match p.eta {
                Some(eta) => ln2d / eta + eta * t * m * m * g * g / 2.0,
                None => g * m * (2.0 * t * ln2d).sqrt(),
            }
        }
        BoundKind::GdLazy | BoundKind::GdGreedy => {
            let (s2, eta) = (req(p.sigma2, "sigma2")?, req(p.eta, "eta")?);
            req(p.dist_sq, "dist_sq")? / (2.0 * s2 * eta) + 0.5 * s2 * req(p.weighted_grad_sq, "weighted_grad_sq")?
        }
        BoundKind::GaussQuadratic => {
            let eta = req(p.eta, "eta")?;
            req(p.prior_quad, "prior_quad")? / (2.0 * eta) + 0.5 * eta * req(p.quad_sum, "quad_sum")?
        }
        BoundKind::StronglyConvex => {
            let x = p.eta_sigma2()?;
            let (g, a, d) = (req(p.grad_bound, "grad_bound")?, req(p.alpha, "alpha")?, req(p.radius, "radius")?);
            let t = req(p.horizon, "horizon")? as f64;
            g * g / (2.0 * a) * ((1.0 / x + a * t) / (1.0 / x + a)).ln() + g * g / (2.0 / x + 2.0 * a) + d * d / (2.0 * x)
        }
        BoundKind::Ons => {
            let x = p.eta_sigma2()?;
            let (g, b, a, d) = (
                req(p.grad_bound, "grad_bound")?,
                req(p.diameter, "diameter")?,
                req(p.alpha, "alpha")?,
                req(p.radius, "radius")?,
            );
            let beta = 0.5 * (1.0 / (4.0 * g * b)).min(a);
            let dim = req(p.dim, "dim")? as f64;
            let t = req(p.horizon, "horizon")? as f64;
            dim / (2.0 * beta) * (x * beta * g * g * t / dim).ln_1p() + d * d / (2.0 * x)
        }
        BoundKind::IProd => {
            let eta = req(p.eta, "eta")?;
            let mass = req(p.gamma_mass, "gamma_mass")?;
            2.0 * eta * req(p.variance, "variance")? + 2.0 / eta * (req(p.kl, "kl")? - mass.ln())
        }
        BoundKind::CoinBetting => (3.0 * req(p.horizon, "horizon")? as f64 * (req(p.kl, "kl")? + 3.0)).sqrt(),
        BoundKind::Bandit => {
            let t = req(p.horizon, "horizon")? as f64;
            let d = req(p.dim, "dim")? as f64;
            2.0 * (3.0 * req(p.nu, "nu")? * d * t * t.ln()).sqrt() + 2.0
        }
    })
}

/// Minimizes a positive function of `x > 0` over `[lo, hi]`: a log-spaced
/// scan followed by golden-section refinement in log space.
pub fn minimize_positive(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let n = 400;
    let at = |k: usize| llo + (lhi - llo) * k as f64 / n as f64;
    let best = (0..=n)
        .min_by(|&a, &b| f(at(a).exp()).total_cmp(&f(at(b).exp())))
        .unwrap_or(0);
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(n)));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if f(c.exp()) < f(d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    (0.5 * (a + b)).exp()
}
