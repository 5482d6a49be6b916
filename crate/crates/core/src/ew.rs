//! The exponential-weights engine.
//!
//! Greedy EW tilts the current posterior by `exp(-eta_t f_t)`; lazy EW tilts
//! the prior by `exp(-eta_t sum_{s<=t} f_s)`. Both then project the mean onto
//! the action domain. All supported family/loss pairs are conjugate, so the
//! lazy flavor only keeps sufficient statistics of the past losses.

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::ln_beta;

use crate::domain::ConvexDomain;
use crate::error::{check_dim, invalid, EwError, Result};
use crate::expfam::{project_mean, BetaState, ExpFamilyPosterior, GaussianState, PoissonProductState};
use crate::loss::SurrogateLoss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    Lazy,
    Greedy,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Lazy => "lazy",
            Flavor::Greedy => "greedy",
        }
    }
}

/// A positive, nonincreasing sequence of learning rates `eta_1 >= eta_2 >= ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
}

#[derive(Debug, Clone, PartialEq)]
enum ScheduleKind {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl Schedule {
    pub fn constant(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(EwError::NonMonotoneSchedule { round: 1 });
        }
        Ok(Self {
            kind: ScheduleKind::Constant(eta),
        })
    }

    /// `values[t - 1]` is `eta_t`.
    pub fn sequence(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("schedule", "sequence must be nonempty"));
        }
        for (i, eta) in values.iter().enumerate() {
            let increased = i > 0 && *eta > values[i - 1];
            if !(*eta > 0.0 && eta.is_finite()) || increased {
                return Err(EwError::NonMonotoneSchedule { round: i + 1 });
            }
        }
        Ok(Self {
            kind: ScheduleKind::Sequence(values),
        })
    }

    /// Tabulates `f(1), ..., f(horizon)`.
    pub fn from_fn(horizon: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::sequence((1..=horizon).map(f).collect())
    }

    /// `eta_t` for `t >= 1`; `t = 0` returns `eta_1`.
    pub fn eta(&self, t: usize) -> Result<f64> {
        match &self.kind {
            ScheduleKind::Constant(eta) => Ok(*eta),
            ScheduleKind::Sequence(v) => v
                .get(t.max(1) - 1)
                .copied()
                .ok_or(EwError::ScheduleExhausted {
                    round: t,
                    horizon: v.len(),
                }),
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        match &self.kind {
            ScheduleKind::Constant(_) => None,
            ScheduleKind::Sequence(v) => Some(v.len()),
        }
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            ScheduleKind::Constant(_) => true,
            ScheduleKind::Sequence(v) => v.iter().all(|x| *x == v[0]),
        }
    }

    /// The same schedule multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match &self.kind {
            ScheduleKind::Constant(eta) => Self::constant(eta * c),
            ScheduleKind::Sequence(v) => Self::sequence(v.iter().map(|x| x * c).collect()),
        }
    }
}

/// Sufficient statistics of the past losses for lazy EW.
#[derive(Debug, Clone, PartialEq)]
enum LazyStats {
    /// `sum (g_s - M_s a_s)` and `sum M_s`.
    Gaussian {
        linear: DVector<f64>,
        curvature: Option<DMatrix<f64>>,
    },
    Poisson { gradient: DVector<f64> },
    Discrete { cumulative: Vec<f64> },
    /// `sum x_s` and `sum (1 - x_s)`.
    Beta { ones: f64, zeros: f64 },
}

impl LazyStats {
    fn new(prior: &ExpFamilyPosterior) -> Self {
        match prior {
            ExpFamilyPosterior::Gaussian(g) => LazyStats::Gaussian {
                linear: DVector::zeros(g.dim()),
                curvature: None,
            },
            ExpFamilyPosterior::Poisson(p) => LazyStats::Poisson {
                gradient: DVector::zeros(p.dim()),
            },
            ExpFamilyPosterior::Discrete(a) => LazyStats::Discrete {
                cumulative: vec![0.0; a.atoms().len()],
            },
            ExpFamilyPosterior::Beta(_) => LazyStats::Beta { ones: 0.0, zeros: 0.0 },
        }
    }

    fn absorb(&mut self, prior: &ExpFamilyPosterior, loss: &SurrogateLoss) {
        match (self, loss) {
            (LazyStats::Gaussian { linear, .. }, SurrogateLoss::Linear { gradient }) => *linear += gradient,
            (LazyStats::Gaussian { linear, curvature }, SurrogateLoss::Quadratic(q)) => {
                *linear += q.gradient() - q.curvature().apply(q.anchor());
                if !q.curvature().is_zero() {
                    let m = q.curvature().to_matrix(q.dim());
                    match curvature {
                        Some(sum) => *sum += m,
                        None => *curvature = Some(m),
                    }
                }
            }
            (LazyStats::Poisson { gradient: sum }, SurrogateLoss::Linear { gradient }) => *sum += gradient,
            (LazyStats::Discrete { cumulative }, loss) => {
                let ExpFamilyPosterior::Discrete(atoms) = prior else {
                    unreachable!("statistics built from the prior")
                };
                for (c, atom) in cumulative.iter_mut().zip(atoms.atoms()) {
                    *c += loss.value(atom);
                }
            }
            (LazyStats::Beta { ones, zeros }, SurrogateLoss::LogLoss { outcome }) => {
                *ones += outcome;
                *zeros += 1.0 - outcome;
            }
            _ => unreachable!("compatibility checked before absorbing"),
        }
    }

    fn posterior(&self, prior: &ExpFamilyPosterior, eta: f64) -> Result<ExpFamilyPosterior> {
        match (self, prior) {
            (LazyStats::Gaussian { linear, curvature }, ExpFamilyPosterior::Gaussian(p)) => match curvature {
                None => Ok(ExpFamilyPosterior::Gaussian(
                    p.with_mean(p.mean() - p.covariance() * linear * eta),
                )),
                Some(sum) => {
                    let precision = p.precision() + sum * eta;
                    let rhs = p.precision() * p.mean() - linear * eta;
                    let state = GaussianState::from_precision(DVector::zeros(p.dim()), precision)?;
                    let mean = state.covariance() * rhs;
                    Ok(ExpFamilyPosterior::Gaussian(state.with_mean(mean)))
                }
            },
            (LazyStats::Poisson { gradient }, ExpFamilyPosterior::Poisson(p)) => {
                let rates = p.rates().zip_map(gradient, |l, g| l * (-eta * g).exp());
                Ok(ExpFamilyPosterior::Poisson(PoissonProductState::new(rates)?))
            }
            (LazyStats::Discrete { cumulative }, ExpFamilyPosterior::Discrete(a)) => {
                let logs: Vec<f64> = cumulative.iter().map(|c| -eta * c).collect();
                Ok(ExpFamilyPosterior::Discrete(a.tilted(&logs)?))
            }
            (LazyStats::Beta { ones, zeros }, ExpFamilyPosterior::Beta(b)) => {
                let (a0, b0) = b.shape();
                Ok(ExpFamilyPosterior::Beta(BetaState::new(
                    a0 + eta * ones,
                    b0 + eta * zeros,
                    b.support(),
                )?))
            }
            _ => unreachable!("statistics built from the prior"),
        }
    }
}

/// Checks that `loss` admits a conjugate update of `posterior`.
pub fn check_compatible(posterior: &ExpFamilyPosterior, loss: &SurrogateLoss) -> Result<()> {
    let ok = match (posterior, loss) {
        (ExpFamilyPosterior::Gaussian(g), SurrogateLoss::Linear { gradient }) => {
            return check_dim(g.dim(), gradient.len())
        }
        (ExpFamilyPosterior::Gaussian(g), SurrogateLoss::Quadratic(q)) => return check_dim(g.dim(), q.dim()),
        (ExpFamilyPosterior::Poisson(p), SurrogateLoss::Linear { gradient }) => {
            return check_dim(p.dim(), gradient.len())
        }
        (ExpFamilyPosterior::Discrete(a), SurrogateLoss::Linear { gradient }) => {
            return check_dim(a.dim(), gradient.len())
        }
        (ExpFamilyPosterior::Discrete(a), SurrogateLoss::Quadratic(q)) => return check_dim(a.dim(), q.dim()),
        (ExpFamilyPosterior::Beta(_), SurrogateLoss::LogLoss { .. }) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(EwError::IncompatibleLoss {
            loss: loss.kind(),
            family: posterior.family(),
        })
    }
}

/// One greedy tilt `dP' proportional to exp(-eta f) dP`, without projection.
pub fn tilt(posterior: &ExpFamilyPosterior, loss: &SurrogateLoss, eta: f64) -> Result<ExpFamilyPosterior> {
    check_compatible(posterior, loss)?;
    match (posterior, loss) {
        (ExpFamilyPosterior::Gaussian(g), SurrogateLoss::Linear { gradient }) => Ok(ExpFamilyPosterior::Gaussian(
            g.with_mean(g.mean() - g.covariance() * gradient * eta),
        )),
        (ExpFamilyPosterior::Gaussian(g), SurrogateLoss::Quadratic(q)) => {
            if q.curvature().is_zero() {
                return Ok(ExpFamilyPosterior::Gaussian(
                    g.with_mean(g.mean() - g.covariance() * q.gradient() * eta),
                ));
            }
            let precision = g.precision() + q.curvature().to_matrix(g.dim()) * eta;
            let rhs = g.precision() * g.mean() - q.gradient() * eta + q.curvature().apply(q.anchor()) * eta;
            let state = GaussianState::from_precision(DVector::zeros(g.dim()), precision)?;
            let mean = state.covariance() * rhs;
            Ok(ExpFamilyPosterior::Gaussian(state.with_mean(mean)))
        }
        (ExpFamilyPosterior::Poisson(p), SurrogateLoss::Linear { gradient }) => {
            let rates = p.rates().zip_map(gradient, |l, g| l * (-eta * g).exp());
            Ok(ExpFamilyPosterior::Poisson(PoissonProductState::new(rates)?))
        }
        (ExpFamilyPosterior::Discrete(a), loss) => {
            let logs: Vec<f64> = a.atoms().iter().map(|atom| -eta * loss.value(atom)).collect();
            Ok(ExpFamilyPosterior::Discrete(a.tilted(&logs)?))
        }
        (ExpFamilyPosterior::Beta(b), SurrogateLoss::LogLoss { outcome }) => {
            let (a0, b0) = b.shape();
            Ok(ExpFamilyPosterior::Beta(BetaState::new(
                a0 + eta * outcome,
                b0 + eta * (1.0 - outcome),
                b.support(),
            )?))
        }
        _ => unreachable!("compatibility checked above"),
    }
}

/// One exponential-weights learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    prior: ExpFamilyPosterior,
    posterior: ExpFamilyPosterior,
    raw_posterior: ExpFamilyPosterior,
    schedule: Schedule,
    flavor: Flavor,
    round: usize,
    stats: LazyStats,
}

impl Learner {
    /// Starts from `P_1`, the prior with its mean projected onto `domain`.
    pub fn new(
        prior: ExpFamilyPosterior,
        schedule: Schedule,
        flavor: Flavor,
        domain: &ConvexDomain,
    ) -> Result<Self> {
        let prior = project_mean(&prior, domain)?;
        let stats = LazyStats::new(&prior);
        Ok(Self {
            posterior: prior.clone(),
            raw_posterior: prior.clone(),
            prior,
            schedule,
            flavor,
            round: 0,
            stats,
        })
    }

    pub fn prior(&self) -> &ExpFamilyPosterior {
        &self.prior
    }

    /// `P_t`, the current (projected) posterior.
    pub fn posterior(&self) -> &ExpFamilyPosterior {
        &self.posterior
    }

    /// `P~_t`, the posterior before projection.
    pub fn raw_posterior(&self) -> &ExpFamilyPosterior {
        &self.raw_posterior
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// Number of updates applied so far; the learner is playing round `round() + 1`.
    pub fn round(&self) -> usize {
        self.round
    }

    /// The prediction `w_t = E_{P_t}[w]`.
    pub fn mean(&self) -> DVector<f64> {
        self.posterior.mean()
    }

    /// Learning rate that the next update will use.
    pub fn next_eta(&self) -> Result<f64> {
        self.schedule.eta(self.round + 1)
    }

    /// Learning rate in the mixability gap of the round being played: `eta_t`
    /// for greedy EW, `eta_{t-1}` for lazy EW.
    pub fn gap_eta(&self) -> Result<f64> {
        match self.flavor {
            Flavor::Greedy => self.schedule.eta(self.round + 1),
            Flavor::Lazy => self.schedule.eta(self.round),
        }
    }

    /// Feeds the loss of round `t = round() + 1` and projects onto `domain`.
    pub fn update(&mut self, loss: &SurrogateLoss, domain: &ConvexDomain) -> Result<()> {
        check_compatible(&self.posterior, loss)?;
        let t = self.round + 1;
        let eta = self.schedule.eta(t)?;
        let raw = match self.flavor {
            Flavor::Greedy => tilt(&self.posterior, loss, eta)?,
            Flavor::Lazy => {
                let mut stats = self.stats.clone();
                stats.absorb(&self.prior, loss);
                let raw = stats.posterior(&self.prior, eta)?;
                self.stats = stats;
                raw
            }
        };
        self.posterior = project_mean(&raw, domain)?;
        self.raw_posterior = raw;
        self.round = t;
        Ok(())
    }
}

/// Functional form of [`Learner::update`].
pub fn ew_update(state: &Learner, loss: &SurrogateLoss, domain: &ConvexDomain) -> Result<Learner> {
    let mut next = state.clone();
    next.update(loss, domain)?;
    Ok(next)
}

pub fn posterior_mean(state: &Learner) -> DVector<f64> {
    state.mean()
}

/// Largest dimension for which numeric mixability gaps are attempted.
pub const NUMERIC_GAP_MAX_DIM: usize = 2;
const NUMERIC_GAP_TOL: f64 = 1e-8;

/// `f(w_t) + (1/eta) ln E_{P_t}[exp(-eta f(w))]` with `w_t` the mean of `P_t`.
///
/// Closed forms cover the conjugate pairs; Poisson with nonlinear losses in
/// dimension at most two is summed numerically, and Beta with non-log losses
/// is integrated numerically.
pub fn mixability_gap(posterior: &ExpFamilyPosterior, loss: &SurrogateLoss, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid("eta", format!("{eta} must be positive")));
    }
    match (posterior, loss) {
        (ExpFamilyPosterior::Gaussian(g), SurrogateLoss::Linear { gradient }) => {
            check_dim(g.dim(), gradient.len())?;
            Ok(0.5 * eta * gradient.dot(&(g.covariance() * gradient)))
        }
        (ExpFamilyPosterior::Gaussian(g), SurrogateLoss::Quadratic(q)) => {
            check_dim(g.dim(), q.dim())?;
            let m = g.mean() - q.anchor();
            let b = g.precision() * &m - q.gradient() * eta;
            let tilted_precision = g.precision() + q.curvature().to_matrix(g.dim()) * eta;
            let chol = nalgebra::Cholesky::new(tilted_precision.clone()).ok_or(EwError::NotPositiveDefinite)?;
            let log_det_ratio = -g.log_det_covariance() - crate::expfam::log_det_spd(&tilted_precision)?;
            let log_e = 0.5 * log_det_ratio + 0.5 * b.dot(&chol.solve(&b)) - 0.5 * m.dot(&(g.precision() * &m));
            Ok(q.value(g.mean()) + log_e / eta)
        }
        (ExpFamilyPosterior::Poisson(p), SurrogateLoss::Linear { gradient }) => {
            check_dim(p.dim(), gradient.len())?;
            let log_e: f64 = p
                .rates()
                .iter()
                .zip(gradient.iter())
                .map(|(l, g)| l * (-eta * g).exp_m1())
                .sum();
            Ok(p.rates().dot(gradient) + log_e / eta)
        }
        (ExpFamilyPosterior::Poisson(p), SurrogateLoss::Quadratic(q)) => {
            check_dim(p.dim(), q.dim())?;
            poisson_numeric_gap(p, loss, eta)
        }
        (ExpFamilyPosterior::Discrete(a), loss) => {
            if let SurrogateLoss::Linear { gradient } = loss {
                check_dim(a.dim(), gradient.len())?;
            }
            let logs: Vec<f64> = a
                .atoms()
                .iter()
                .zip(a.weights())
                .map(|(atom, w)| w.ln() - eta * loss.value(atom))
                .collect();
            Ok(loss.value(&a.mean()) + log_sum_exp(&logs) / eta)
        }
        (ExpFamilyPosterior::Beta(b), SurrogateLoss::LogLoss { outcome }) => {
            let (a0, b0) = b.shape();
            let u = DVector::from_element(1, b.unit_mean());
            let log_e = ln_beta(a0 + eta * outcome, b0 + eta * (1.0 - outcome)) - ln_beta(a0, b0);
            Ok(loss.value(&u) + log_e / eta)
        }
        (ExpFamilyPosterior::Beta(b), loss) => beta_numeric_gap(b, loss, eta),
        _ => Err(EwError::IncompatibleLoss {
            loss: loss.kind(),
            family: posterior.family(),
        }),
    }
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

fn poisson_numeric_gap(p: &PoissonProductState, loss: &SurrogateLoss, eta: f64) -> Result<f64> {
    let d = p.dim();
    if d > NUMERIC_GAP_MAX_DIM {
        return Err(EwError::IncompatibleLoss {
            loss: loss.kind(),
            family: "Poisson",
        });
    }
    // Truncate each coordinate far in the tail; the neglected mass is below
    // the tolerance for any loss bounded below on the lattice.
    let limits: Vec<usize> = p
        .rates()
        .iter()
        .map(|l| (l + 40.0 * l.sqrt() + 60.0).ceil() as usize)
        .collect();
    let log_pmf = |k: usize, l: f64| k as f64 * l.ln() - l - statrs::function::gamma::ln_gamma(k as f64 + 1.0);
    let mut logs = Vec::new();
    let mut point = DVector::zeros(d);
    let mut counts = vec![0usize; d];
    loop {
        for i in 0..d {
            point[i] = counts[i] as f64;
        }
        let lp: f64 = (0..d).map(|i| log_pmf(counts[i], p.rates()[i])).sum();
        logs.push(lp - eta * loss.value(&point));
        let mut i = 0;
        while i < d {
            counts[i] += 1;
            if counts[i] <= limits[i] {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
        if i == d {
            break;
        }
    }
    let gap = loss.value(p.rates()) + log_sum_exp(&logs) / eta;
    if gap.is_finite() {
        Ok(gap)
    } else {
        Err(EwError::NoConvergence("Poisson mixability-gap summation"))
    }
}

fn beta_numeric_gap(b: &BetaState, loss: &SurrogateLoss, eta: f64) -> Result<f64> {
    let (a0, b0) = b.shape();
    let log_norm = ln_beta(a0, b0);
    let f = |u: f64| loss.value(&DVector::from_element(1, b.support_point(u)));
    let mean = DVector::from_element(1, b.mean());
    let shift = f(b.unit_mean());
    let integrand = |u: f64| {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        ((a0 - 1.0) * u.ln() + (b0 - 1.0) * (1.0 - u).ln() - log_norm - eta * (f(u) - shift)).exp()
    };
    let out = quadrature::double_exponential::integrate(integrand, 0.0, 1.0, NUMERIC_GAP_TOL * 1e-2);
    if !(out.integral > 0.0 && out.integral.is_finite()) || out.error_estimate > NUMERIC_GAP_TOL {
        return Err(EwError::NoConvergence("Beta mixability-gap quadrature"));
    }
    Ok(loss.value(&mean) - shift + out.integral.ln() / eta)
}

/// The right-hand side of the EW regret decomposition for a comparator with
/// `kl(Q || P_1) = kl_prior`.
///
/// Lazy: `kl_prior / eta_T + sum gaps`. Greedy:
/// `kl_prior / eta_1 + (1/eta_T - 1/eta_1) kl_max + sum gaps`, where `kl_max`
/// bounds `kl(Q || P_t)` over the run.
pub fn lemma1_bound(
    kl_prior: f64,
    gaps: &[f64],
    schedule: &Schedule,
    kl_max_intermediate: f64,
    flavor: Flavor,
) -> Result<f64> {
    let horizon = gaps.len();
    let eta_last = schedule.eta(horizon)?;
    let gap_sum: f64 = gaps.iter().sum();
    Ok(match flavor {
        Flavor::Lazy => kl_prior / eta_last + gap_sum,
        Flavor::Greedy => {
            let eta_first = schedule.eta(1)?;
            kl_prior / eta_first + (1.0 / eta_last - 1.0 / eta_first) * kl_max_intermediate + gap_sum
        }
    })
}

/// One row of a regret ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub t: usize,
    pub loss: f64,
    pub cum_loss: f64,
    pub comparator_cum_loss: f64,
    pub regret: f64,
    pub mix_gap: f64,
    pub bound: f64,
}

/// Per-round record of learner loss, comparator loss, regret and bound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    rows: Vec<LedgerRow>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends round `len() + 1`. `bound` is the bound on the cumulative
    /// regret after this round.
    pub fn push(&mut self, loss: f64, comparator_loss: f64, mix_gap: f64, bound: f64) {
        let previous = self.rows.last().map_or(0.0, |r| r.comparator_cum_loss);
        self.push_cumulative(loss, previous + comparator_loss, mix_gap, bound);
    }

    /// Like [`push`](Self::push), but takes the comparator's cumulative loss
    /// directly, for comparators re-optimized in hindsight every round.
    pub fn push_cumulative(&mut self, loss: f64, comparator_cum_loss: f64, mix_gap: f64, bound: f64) {
        let cum_loss = self.rows.last().map_or(0.0, |r| r.cum_loss) + loss;
        self.rows.push(LedgerRow {
            t: self.rows.len() + 1,
            loss,
            cum_loss,
            comparator_cum_loss,
            regret: cum_loss - comparator_cum_loss,
            mix_gap,
            bound,
        });
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rounds where `regret > bound + tol`.
    pub fn violations(&self, tol: f64) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| !(r.regret <= r.bound + tol))
            .map(|r| r.t)
            .collect()
    }

    /// Smallest `bound - regret` over all rows.
    pub fn min_slack(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.bound - r.regret)
            .fold(f64::INFINITY, f64::min)
    }
}
