//! Exponential weights with bandit feedback over a ball or a centered box.
//!
//! The posterior has density proportional to `exp(<w, theta>)` on the domain
//! and is sampled by hit-and-run. Actions are drawn from the mixture
//! `(1 - gamma) P_t + gamma R`, where the exploration distribution `R` has
//! second moment `H / d` for the John ellipsoid `H` of the domain, and the
//! loss vector is estimated by `<w, g> S^{-1} w` with `S` the mixture's second
//! moment.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::ConvexDomain;
use crate::error::{check_dim, invalid, EwError, Result};

/// Contact-point distribution used for exploration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplorationSpec {
    /// Uniform on the sphere of radius `radius`; `H = radius^2 I`.
    SphereUniform { dim: usize, radius: f64 },
    /// Uniform on the vertices of `[-half_width, half_width]^d`;
    /// `H = d half_width^2 I`.
    VertexUniform { dim: usize, half_width: f64 },
}

impl ExplorationSpec {
    pub fn for_domain(domain: &ConvexDomain, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        match domain {
            ConvexDomain::Ball { radius } => Ok(Self::SphereUniform { dim, radius: *radius }),
            ConvexDomain::Box { lower, upper } => {
                check_dim(dim, lower.len())?;
                let c = upper[0];
                let centered = lower.iter().zip(upper.iter()).all(|(l, u)| *u == c && *l == -c);
                if !centered {
                    return Err(EwError::UnsupportedProjection {
                        family: "bandit exploration",
                        domain: "non-centered box",
                    });
                }
                Ok(Self::VertexUniform { dim, half_width: c })
            }
            other => Err(EwError::UnsupportedProjection {
                family: "bandit exploration",
                domain: other.name(),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::SphereUniform { dim, .. } | Self::VertexUniform { dim, .. } => *dim,
        }
    }

    /// The John-ellipsoid matrix `H`.
    pub fn john_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::identity(d, d) * self.john_scale()
    }

    fn john_scale(&self) -> f64 {
        match self {
            Self::SphereUniform { radius, .. } => radius * radius,
            Self::VertexUniform { dim, half_width } => *dim as f64 * half_width * half_width,
        }
    }

    /// `lambda_min(H)`.
    pub fn john_min_eigenvalue(&self) -> f64 {
        self.john_scale()
    }

    /// `S_R = E_R[w w^T] = H / d`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        self.john_matrix() / self.dim() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            Self::SphereUniform { dim, radius } => {
                let u = unit_direction(*dim, rng);
                u * *radius
            }
            Self::VertexUniform { dim, half_width } => {
                DVector::from_fn(*dim, |_, _| if rng.random::<bool>() { *half_width } else { -*half_width })
            }
        }
    }
}

fn unit_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

/// Hit-and-run settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Steps per emitted action, per dimension.
    pub steps_per_dim: usize,
    /// Burn-in steps per dimension after a large change of `theta`.
    pub burn_in_per_dim: usize,
    /// Relative change of `|theta|` that triggers a burn-in.
    pub burn_in_trigger: f64,
    /// Posterior samples per second-moment estimate.
    pub moment_samples: usize,
    /// Hit-and-run steps between recorded samples.
    pub thinning: usize,
    /// Batches in the drift diagnostic.
    pub batches: usize,
    /// Drift threshold in standard errors.
    pub drift_threshold: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps_per_dim: 50,
            burn_in_per_dim: 200,
            burn_in_trigger: 0.1,
            moment_samples: 4096,
            thinning: 1,
            batches: 32,
            drift_threshold: 3.0,
        }
    }
}

/// Outcome of the half-versus-half drift check on one chain segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainDiagnostic {
    /// Largest componentwise `|mean(first half) - mean(second half)| / SE`.
    pub max_drift: f64,
    pub flagged: bool,
}

/// A draw from the action mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDraw {
    pub point: DVector<f64>,
    pub explored: bool,
}

/// The log-linear posterior `dP(w) proportional to exp(<w, theta>) dw` on a
/// ball or box, with a warm hit-and-run chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditPosterior {
    theta: DVector<f64>,
    domain: ConvexDomain,
    point: DVector<f64>,
    reference_theta: Option<DVector<f64>>,
    config: SamplerConfig,
}

impl BanditPosterior {
    pub fn new(dim: usize, domain: ConvexDomain, config: SamplerConfig) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        match &domain {
            ConvexDomain::Ball { .. } => {}
            ConvexDomain::Box { lower, .. } => check_dim(dim, lower.len())?,
            other => {
                return Err(EwError::UnsupportedProjection {
                    family: "bandit posterior",
                    domain: other.name(),
                })
            }
        }
        let point = match &domain {
            ConvexDomain::Box { lower, upper } => (lower + upper) * 0.5,
            _ => DVector::zeros(dim),
        };
        Ok(Self {
            theta: DVector::zeros(dim),
            domain,
            point,
            reference_theta: None,
            config,
        })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn set_theta(&mut self, theta: DVector<f64>) -> Result<()> {
        check_dim(self.dim(), theta.len())?;
        self.theta = theta;
        Ok(())
    }

    /// `theta <- theta - eta g~`.
    pub fn absorb_estimate(&mut self, estimate: &DVector<f64>, eta: f64) -> Result<()> {
        check_dim(self.dim(), estimate.len())?;
        self.theta -= estimate * eta;
        Ok(())
    }

    fn chord(&self, u: &DVector<f64>) -> (f64, f64) {
        let x = &self.point;
        let (lo, hi) = match &self.domain {
            ConvexDomain::Ball { radius } => {
                let b = x.dot(u);
                let c = x.norm_squared() - radius * radius;
                let disc = (b * b - c).max(0.0).sqrt();
                (-b - disc, -b + disc)
            }
            ConvexDomain::Box { lower, upper } => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..x.len() {
                    if u[i] != 0.0 {
                        let a = (lower[i] - x[i]) / u[i];
                        let b = (upper[i] - x[i]) / u[i];
                        lo = lo.max(a.min(b));
                        hi = hi.min(a.max(b));
                    }
                }
                (lo, hi)
            }
            _ => unreachable!("domain checked at construction"),
        };
        (lo.min(0.0), hi.max(0.0))
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let u = unit_direction(self.dim(), rng);
        let (lo, hi) = self.chord(&u);
        let kappa = self.theta.dot(&u);
        let s = truncated_exponential(kappa, lo, hi, rng);
        self.point.axpy(s, &u, 1.0);
    }

    fn run<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) {
        for _ in 0..steps {
            self.step(rng);
        }
    }

    fn maybe_burn_in<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let moved = match &self.reference_theta {
            None => true,
            Some(reference) => {
                let change = (&self.theta - reference).norm();
                change > self.config.burn_in_trigger * reference.norm()
            }
        };
        if moved {
            self.run(self.config.burn_in_per_dim * self.dim(), rng);
            self.reference_theta = Some(self.theta.clone());
        }
    }

    /// An approximate draw from `P_t`.
    pub fn sample_posterior<R: Rng + ?Sized>(&mut self, rng: &mut R) -> DVector<f64> {
        self.maybe_burn_in(rng);
        self.run(self.config.steps_per_dim * self.dim(), rng);
        self.point.clone()
    }

    /// A draw from `(1 - gamma) P_t + gamma R`.
    pub fn sample_action<R: Rng + ?Sized>(
        &mut self,
        exploration: &ExplorationSpec,
        gamma: f64,
        rng: &mut R,
    ) -> Result<ActionDraw> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(invalid("gamma", format!("{gamma} outside [0, 1]")));
        }
        if rng.random::<f64>() < gamma {
            Ok(ActionDraw {
                point: exploration.sample(rng),
                explored: true,
            })
        } else {
            Ok(ActionDraw {
                point: self.sample_posterior(rng),
                explored: false,
            })
        }
    }

    /// Monte-Carlo estimate of `E_{P_t}[w w^T]` from `n` chain samples,
    /// with the drift diagnostic of the segment.
    pub fn posterior_moment<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> (DMatrix<f64>, ChainDiagnostic) {
        self.maybe_burn_in(rng);
        let d = self.dim();
        let mut moment = DMatrix::zeros(d, d);
        let batches = self.config.batches.max(2);
        let batch_len = (n / batches).max(1);
        let mut batch_sums = vec![DVector::zeros(d); batches];
        for k in 0..n {
            self.run(self.config.thinning.max(1), rng);
            moment.syger(1.0, &self.point, &self.point, 1.0);
            let b = (k / batch_len).min(batches - 1);
            batch_sums[b] += &self.point;
        }
        moment /= n as f64;
        moment.fill_upper_triangle_with_lower_triangle();
        (moment, drift_diagnostic(&batch_sums, n, batch_len, self.config.drift_threshold))
    }

    /// `(1 - gamma) E_{P_t}[w w^T] + gamma S_R`, estimated from `n` samples.
    ///
    /// Fails with [`EwError::MomentUndersupplied`] when the smallest
    /// eigenvalue is below `0.5 (gamma / d) lambda_min(H)`.
    pub fn second_moment<R: Rng + ?Sized>(
        &mut self,
        exploration: &ExplorationSpec,
        gamma: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<(DMatrix<f64>, ChainDiagnostic)> {
        check_dim(self.dim(), exploration.dim())?;
        if n == 0 {
            return Err(invalid("samples", "need at least one posterior sample"));
        }
        let (posterior, diag) = self.posterior_moment(n, rng);
        let s = mixture_moment(&posterior, exploration, gamma)?;
        Ok((s, diag))
    }

    /// `E_{P_t}[w w^T]` by one-dimensional quadrature.
    pub fn exact_moment(&self) -> Result<DMatrix<f64>> {
        Ok(exact_moments(&self.theta, &self.domain)?.1)
    }

    pub fn exact_mean(&self) -> Result<DVector<f64>> {
        Ok(exact_moments(&self.theta, &self.domain)?.0)
    }
}

/// `(1 - gamma) posterior + gamma S_R`, checked against the exploration floor.
pub fn mixture_moment(posterior: &DMatrix<f64>, exploration: &ExplorationSpec, gamma: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid("gamma", format!("{gamma} outside [0, 1]")));
    }
    let s = posterior * (1.0 - gamma) + exploration.second_moment() * gamma;
    let s = (&s + s.transpose()) * 0.5;
    let required = 0.5 * gamma / exploration.dim() as f64 * exploration.john_min_eigenvalue();
    let got = SymmetricEigen::new(s.clone()).eigenvalues.min();
    if got < required {
        return Err(EwError::MomentUndersupplied { got, required });
    }
    Ok(s)
}

fn drift_diagnostic(batch_sums: &[DVector<f64>], n: usize, batch_len: usize, threshold: f64) -> ChainDiagnostic {
    let batches = batch_sums.len();
    if n < 2 * batches {
        return ChainDiagnostic {
            max_drift: 0.0,
            flagged: false,
        };
    }
    let d = batch_sums[0].len();
    // The last batch absorbs the remainder.
    let sizes: Vec<f64> = (0..batches)
        .map(|b| if b + 1 == batches { (n - batch_len * (batches - 1)) as f64 } else { batch_len as f64 })
        .collect();
    let half = batches / 2;
    let mut max_drift: f64 = 0.0;
    for i in 0..d {
        let means: Vec<f64> = batch_sums.iter().zip(&sizes).map(|(s, m)| s[i] / m).collect();
        let grand = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let first = means[..half].iter().sum::<f64>() / half as f64;
        let second = means[half..].iter().sum::<f64>() / (batches - half) as f64;
        let se = (var / half as f64 + var / (batches - half) as f64).sqrt();
        let z = if se > 0.0 { (first - second).abs() / se } else { 0.0 };
        max_drift = max_drift.max(z);
    }
    ChainDiagnostic {
        max_drift,
        flagged: max_drift > threshold,
    }
}

/// Inverse-CDF draw from the density proportional to `exp(kappa s)` on `[lo, hi]`.
pub fn truncated_exponential<R: Rng + ?Sized>(kappa: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let len = hi - lo;
    let u = 1.0 - rng.random::<f64>();
    if len <= 0.0 {
        return lo;
    }
    let kl = kappa * len;
    let s = if kl.abs() < 1e-12 {
        lo + u * len
    } else if kappa > 0.0 {
        hi + (u + (1.0 - u) * (-kl).exp()).ln() / kappa
    } else {
        lo + (u + (1.0 - u) * kl.exp()).ln() / kappa
    };
    s.clamp(lo, hi)
}

/// `g~ = observed S^{-1} w`.
pub fn estimate_loss_vector(w: &DVector<f64>, observed: f64, s: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_dim(w.len(), s.nrows())?;
    check_dim(w.len(), s.ncols())?;
    if !(observed.abs() <= 1.0) {
        return Err(EwError::LossOutOfRange(observed));
    }
    let chol = Cholesky::new(s.clone()).ok_or(EwError::NotPositiveDefinite)?;
    Ok(chol.solve(w) * observed)
}

/// `eta = sqrt(nu ln T / (3 d T))` and `gamma = eta d` (capped at 1/2);
/// `nu` defaults to `d`.
pub fn tuned_parameters(dim: usize, horizon: usize, nu: Option<f64>) -> Result<(f64, f64)> {
    if horizon < 2 {
        return Err(invalid("horizon", "tuning needs T >= 2"));
    }
    if dim == 0 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    let d = dim as f64;
    let nu = nu.unwrap_or(d);
    if !(nu > 0.0) {
        return Err(invalid("nu", format!("{nu} must be positive")));
    }
    let t = horizon as f64;
    let eta = (nu * t.ln() / (3.0 * d * t)).sqrt();
    let gamma = eta * d;
    if gamma >= 1.0 {
        return Err(invalid("gamma", format!("tuned gamma = {gamma} >= 1; horizon too short")));
    }
    Ok((eta, gamma.min(0.5)))
}

/// Mean and second moment of the density proportional to `exp(<w, theta>)`
/// on a ball or box, by one-dimensional quadrature.
pub fn exact_moments(theta: &DVector<f64>, domain: &ConvexDomain) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = theta.len();
    match domain {
        ConvexDomain::Box { lower, upper } => {
            check_dim(d, lower.len())?;
            let mut mean = DVector::zeros(d);
            let mut second = DVector::zeros(d);
            for i in 0..d {
                let m = tilted_moments(theta[i], lower[i], upper[i], |_| 0.0)?;
                mean[i] = m[1];
                second[i] = m[2];
            }
            let mut s = &mean * mean.transpose();
            for i in 0..d {
                s[(i, i)] = second[i];
            }
            Ok((mean, s))
        }
        ConvexDomain::Ball { radius } => {
            let r = *radius;
            let norm = theta.norm();
            let dir = if norm > 0.0 {
                theta / norm
            } else {
                let mut e = DVector::zeros(d);
                e[0] = 1.0;
                e
            };
            let half_power = (d as f64 - 1.0) / 2.0;
            let m = tilted_moments(norm, -r, r, |s| half_power * (r * r - s * s).max(0.0).ln())?;
            let along = m[2];
            let across = if d > 1 { (r * r - along) / (d as f64 + 1.0) } else { 0.0 };
            let proj = &dir * dir.transpose();
            let s = &proj * along + (DMatrix::identity(d, d) - &proj) * across;
            Ok((dir * m[1], s))
        }
        other => Err(EwError::UnsupportedProjection {
            family: "log-linear",
            domain: other.name(),
        }),
    }
}

/// `[1, E s, E s^2]` under the density proportional to
/// `exp(kappa s + log_weight(s))` on `[lo, hi]`.
fn tilted_moments(kappa: f64, lo: f64, hi: f64, log_weight: impl Fn(f64) -> f64) -> Result<[f64; 3]> {
    let peak = if kappa >= 0.0 { kappa * hi } else { kappa * lo };
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let integrand = |s: f64| {
            let lw = log_weight(s);
            if lw == f64::NEG_INFINITY {
                0.0
            } else {
                s.powi(k as i32) * (kappa * s - peak + lw).exp()
            }
        };
        let res = quadrature::double_exponential::integrate(integrand, lo, hi, 1e-14);
        if !res.integral.is_finite() {
            return Err(EwError::NoConvergence("log-linear moment quadrature"));
        }
        *slot = res.integral;
    }
    if !(out[0] > 0.0) {
        return Err(EwError::NoConvergence("log-linear moment quadrature"));
    }
    Ok([1.0, out[1] / out[0], out[2] / out[0]])
}
