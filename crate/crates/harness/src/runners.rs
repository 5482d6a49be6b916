//! One replicate of each algorithm against its adversary.

use std::time::Instant;

use ewkit_core::bandit::{estimate_loss_vector, mixture_moment, tuned_parameters, BanditPosterior, ExplorationSpec, SamplerConfig};
use ewkit_core::ew::{mixability_gap, Flavor, Learner, RegretLedger, Schedule};
use ewkit_core::experts::{instantaneous_regrets, CoinBetting, EtaGridPosterior};
use ewkit_core::expfam::{BetaState, BetaSupport, DiscreteAtoms, ExpFamilyPosterior, GaussianState};
use ewkit_core::loss::{Curvature, QuadraticSurrogate, SurrogateLoss};
use ewkit_core::surrogates::{ons_surrogate, ExponentiatedGradientPm, QuadEwState};
use ewkit_core::ConvexDomain;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;

use crate::adversary::{Adversary, AdversaryParams, GradNorm, Round};
use crate::bounds::{evaluate_bound, minimize_positive, BoundInputs, BoundKind};
use crate::comparator::{l1_linear_min, linear_min, log_loss_min, project, LogLinearComparator};
use crate::config::{Algorithm, AdversaryKind, DomainKind, EtaSpec, ExperimentConfig};
use crate::error::{config_err, HarnessError, Result};
use crate::rng::{stream, Role};

/// Relative tolerance on every bound comparison.
pub const BOUND_TOL: f64 = 1e-9;
/// Tolerance of the iProd and Squint potential invariants.
pub const POTENTIAL_TOL: f64 = 1e-10;
/// Slack on `eta |<w, g~>| <= 1` in bandit runs.
pub const ESTIMATE_SLACK: f64 = 0.05;
/// Largest fraction of bandit rounds whose chain diagnostic may flag.
pub const MAX_FLAGGED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Fails when violated.
    Strict,
    /// Flagged when violated by less than a factor 2, failed beyond.
    FlagBelowDouble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Flag,
    Fail,
}

/// `value <= bound` as checked at the end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub mode: CheckMode,
}

impl BoundCheck {
    pub fn strict(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            mode: CheckMode::Strict,
        }
    }

    pub fn slack(&self) -> f64 {
        self.bound - self.value
    }

    pub fn status(&self) -> Status {
        let tol = BOUND_TOL * (1.0 + self.bound.abs());
        if self.value <= self.bound + tol {
            Status::Pass
        } else if self.mode == CheckMode::FlagBelowDouble && self.value < 2.0 * self.bound {
            Status::Flag
        } else {
            Status::Fail
        }
    }
}

/// Result of one replicate.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub replicate: u64,
    pub ledger: RegretLedger,
    /// Whether the bound column is asserted on every row or only the last.
    pub anytime: bool,
    pub checks: Vec<BoundCheck>,
    pub stats: Vec<(&'static str, f64)>,
    pub runtime: f64,
}

impl RunOutcome {
    pub fn final_regret(&self) -> f64 {
        self.ledger.last().map_or(0.0, |r| r.regret)
    }

    pub fn final_bound(&self) -> f64 {
        self.ledger.last().map_or(f64::INFINITY, |r| r.bound)
    }

    pub fn stat(&self, name: &str) -> Option<f64> {
        self.stats.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    /// Rows whose regret exceeds the bound column (all rows when anytime,
    /// else the last).
    pub fn row_violations(&self) -> Vec<usize> {
        let rows = self.ledger.rows();
        let tail = if self.anytime { rows } else { &rows[rows.len().saturating_sub(1)..] };
        tail.iter()
            .filter(|r| !(r.regret <= r.bound + BOUND_TOL * (1.0 + r.bound.abs())))
            .map(|r| r.t)
            .collect()
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .checks
            .iter()
            .filter(|c| c.status() == Status::Fail)
            .map(|c| format!("{}: {:.6e} > {:.6e}", c.name, c.value, c.bound))
            .collect();
        let rows = self.row_violations();
        if !rows.is_empty() {
            out.push(format!("bound column exceeded at {} rows (first t = {})", rows.len(), rows[0]));
        }
        out
    }

    pub fn flags(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| c.status() == Status::Flag)
            .map(|c| format!("{}: {:.6e} > {:.6e} (within 2x)", c.name, c.value, c.bound))
            .collect()
    }
}

pub fn run_replicate(config: &ExperimentConfig, replicate: u64) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    let adversary = Adversary::new(adversary_params(config), stream(config.seed, replicate, Role::Adversary));
    let mut learner_rng = stream(config.seed, replicate, Role::Learner);
    let mut outcome = match config.algorithm {
        Algorithm::Kt => run_kt(config, adversary),
        Algorithm::EgPm => run_egpm(config, adversary),
        Algorithm::Gd => run_gd(config, adversary),
        Algorithm::StronglyConvex | Algorithm::Ons => run_quadratic(config, adversary),
        Algorithm::IProd | Algorithm::Squint | Algorithm::CoinBetting => run_experts(config, adversary),
        Algorithm::Bandit => run_bandit(config, adversary, &mut learner_rng),
    }?;
    outcome.replicate = replicate;
    outcome.runtime = start.elapsed().as_secs_f64();
    Ok(outcome)
}

pub fn adversary_params(config: &ExperimentConfig) -> AdversaryParams {
    AdversaryParams {
        kind: config.adversary(),
        dim: config.dim(),
        grad_bound: config.grad_bound(),
        norm: if config.algorithm == Algorithm::EgPm { GradNorm::Linf } else { GradNorm::L2 },
        domain: config.domain,
        radius: config.radius,
        max_norm: config.max_norm(),
        alpha: config.alpha(),
        experts: config.algorithm.is_experts(),
    }
}

fn outcome(ledger: RegretLedger, anytime: bool, checks: Vec<BoundCheck>, stats: Vec<(&'static str, f64)>) -> RunOutcome {
    RunOutcome {
        replicate: 0,
        ledger,
        anytime,
        checks,
        stats,
        runtime: 0.0,
    }
}

fn expect_linear(round: Round) -> Result<DVector<f64>> {
    match round {
        Round::Linear(g) => Ok(g),
        other => Err(config_err(format!("expected a linear round, got {other:?}"))),
    }
}

fn expect_experts(round: Round) -> Result<DVector<f64>> {
    match round {
        Round::Experts(g) => Ok(g),
        other => Err(config_err(format!("expected expert losses, got {other:?}"))),
    }
}

fn run_kt(config: &ExperimentConfig, mut adversary: Adversary) -> Result<RunOutcome> {
    let all = ConvexDomain::AllSpace;
    let prior = ExpFamilyPosterior::Beta(BetaState::new(0.5, 0.5, BetaSupport::Unit)?);
    let mut learner = Learner::new(prior, Schedule::constant(1.0)?, Flavor::Lazy, &all)?;
    let mut ledger = RegretLedger::new();
    let mut ones = 0;
    for t in 1..=config.horizon() {
        let w = learner.mean();
        let Round::Outcome(x) = adversary.next(&w)? else {
            return Err(config_err("kt needs binary outcomes"));
        };
        let loss = SurrogateLoss::log_loss(x)?;
        let gap = mixability_gap(learner.posterior(), &loss, 1.0)?;
        learner.update(&loss, &all)?;
        ones += (x == 1.0) as usize;
        let bound = evaluate_bound(
            BoundKind::Kt,
            &BoundInputs {
                horizon: Some(t),
                ..Default::default()
            },
        )?;
        ledger.push_cumulative(loss.value(&w), log_loss_min(ones, t), gap, bound);
    }
    Ok(outcome(ledger, true, Vec::new(), vec![("ones", ones as f64)]))
}

fn run_egpm(config: &ExperimentConfig, mut adversary: Adversary) -> Result<RunOutcome> {
    let (d, horizon, m, g_bound) = (config.dim(), config.horizon(), config.scale, config.grad_bound());
    let eta = match config.eta {
        EtaSpec::Tuned => ExponentiatedGradientPm::tuned_eta(d, horizon, m, g_bound),
        EtaSpec::Constant(eta) => eta,
        EtaSpec::InverseSqrt(_) => return Err(config_err("egpm takes a constant learning rate")),
    };
    let all = ConvexDomain::AllSpace;
    let prior = ExpFamilyPosterior::Discrete(DiscreteAtoms::signed_basis(d, m, true)?);
    let mut learner = Learner::new(prior, Schedule::constant(eta)?, config.flavor, &all)?;
    let mut ledger = RegretLedger::new();
    let mut sum = DVector::zeros(d);
    for t in 1..=horizon {
        let w = learner.mean();
        let g = expect_linear(adversary.next(&w)?)?;
        let loss = SurrogateLoss::linear(g.clone())?;
        let gap = mixability_gap(learner.posterior(), &loss, eta)?;
        learner.update(&loss, &all)?;
        sum += &g;
        let inputs = BoundInputs {
            horizon: Some(t),
            dim: Some(d),
            scale: Some(m),
            grad_bound: Some(g_bound),
            eta: Some(eta),
            ..Default::default()
        };
        ledger.push_cumulative(g.dot(&w), l1_linear_min(m, &sum), gap, evaluate_bound(BoundKind::EgPm, &inputs)?);
    }
    let mut checks = Vec::new();
    if config.eta == EtaSpec::Tuned {
        let closed = evaluate_bound(
            BoundKind::EgPm,
            &BoundInputs {
                horizon: Some(horizon),
                dim: Some(d),
                scale: Some(m),
                grad_bound: Some(g_bound),
                ..Default::default()
            },
        )?;
        let regret = ledger.last().map_or(0.0, |r| r.regret);
        checks.push(BoundCheck::strict("egpm-tuned", regret, closed));
    }
    Ok(outcome(ledger, true, checks, vec![("eta", eta)]))
}

fn gd_schedule(config: &ExperimentConfig) -> Result<Schedule> {
    let horizon = config.horizon();
    Ok(match config.eta {
        EtaSpec::Tuned => {
            let rate = config.max_norm() / (config.grad_bound() * (horizon as f64).sqrt());
            Schedule::constant(rate / config.sigma2)?
        }
        EtaSpec::Constant(eta) => Schedule::constant(eta)?,
        EtaSpec::InverseSqrt(c) => Schedule::from_fn(horizon, |t| c / (t as f64).sqrt())?,
    })
}

fn run_gd(config: &ExperimentConfig, mut adversary: Adversary) -> Result<RunOutcome> {
    let (d, horizon, sigma2) = (config.dim(), config.horizon(), config.sigma2);
    let domain = config.action_domain()?;
    let schedule = gd_schedule(config)?;
    let prior = GaussianState::isotropic(DVector::zeros(d), sigma2)?;
    let mut learner = Learner::new(ExpFamilyPosterior::Gaussian(prior), schedule.clone(), config.flavor, &domain)?;
    let big_d = config.max_norm();
    let (kind, first) = match config.flavor {
        Flavor::Lazy => (BoundKind::GdLazy, learner.mean()),
        Flavor::Greedy => (BoundKind::GdGreedy, learner.mean()),
    };
    let mut dist_sq = (big_d + first.norm()).powi(2);
    let mut weighted = 0.0;
    let mut gaps = Vec::with_capacity(horizon);
    let mut sum = DVector::zeros(d);
    let mut trajectory = Vec::with_capacity(horizon);
    let mut ledger = RegretLedger::new();
    for t in 1..=horizon {
        let w = learner.mean();
        let g = expect_linear(adversary.next(&w)?)?;
        let loss = SurrogateLoss::linear(g.clone())?;
        let gap = mixability_gap(learner.posterior(), &loss, learner.gap_eta()?)?;
        gaps.push(gap);
        learner.update(&loss, &domain)?;
        if config.flavor == Flavor::Greedy {
            dist_sq = dist_sq.max((big_d + w.norm()).powi(2));
        }
        let eta_weight = match config.flavor {
            Flavor::Lazy => schedule.eta(t - 1)?,
            Flavor::Greedy => schedule.eta(t)?,
        };
        weighted += eta_weight * g.norm_squared();
        sum += &g;
        let (comparator, _) = linear_min(config.domain, config.radius, &sum);
        let inputs = BoundInputs {
            sigma2: Some(sigma2),
            eta: Some(schedule.eta(t)?),
            dist_sq: Some(dist_sq),
            weighted_grad_sq: Some(weighted),
            ..Default::default()
        };
        ledger.push_cumulative(g.dot(&w), comparator, gap, evaluate_bound(kind, &inputs)?);
        trajectory.push(w);
    }

    // the decomposition itself, with the computed gaps and Q = N(u*, sigma^2 I)
    let (_, u) = linear_min(config.domain, config.radius, &sum);
    let kl = |c: &DVector<f64>| (&u - c).norm_squared() / (2.0 * sigma2);
    let kl_prior = kl(&DVector::zeros(d));
    let kl_max = trajectory.iter().map(kl).fold(kl_prior, f64::max);
    let lemma = evaluate_bound(
        BoundKind::Lemma1,
        &BoundInputs {
            kl: Some(kl_prior),
            eta: Some(schedule.eta(horizon)?),
            eta_first: (config.flavor == Flavor::Greedy).then_some(schedule.eta(1)?),
            kl_max: Some(kl_max),
            gap_sum: Some(gaps.iter().sum()),
            ..Default::default()
        },
    )?;
    let regret = ledger.last().map_or(0.0, |r| r.regret);
    let checks = vec![BoundCheck::strict("lemma1", regret, lemma)];
    Ok(outcome(ledger, true, checks, vec![("eta_final", schedule.eta(horizon)?)]))
}

/// `eta sigma^2` for the quadratic-surrogate algorithms.
fn quadratic_eta_sigma2(config: &ExperimentConfig, inputs: BoundInputs, kind: BoundKind) -> Result<f64> {
    Ok(match config.eta {
        EtaSpec::Constant(eta) => eta * config.sigma2,
        EtaSpec::Tuned => minimize_positive(
            |x| {
                let p = BoundInputs {
                    eta_sigma2: Some(x),
                    ..inputs
                };
                evaluate_bound(kind, &p).unwrap_or(f64::INFINITY)
            },
            1e-6,
            1e6,
        ),
        EtaSpec::InverseSqrt(_) => return Err(config_err("quadratic surrogates need a constant learning rate")),
    })
}

enum QuadLearner {
    Recursion(QuadEwState),
    Engine(Box<Learner>),
}

impl QuadLearner {
    fn state(&self) -> Result<GaussianState> {
        match self {
            QuadLearner::Recursion(q) => Ok(GaussianState::from_precision(q.mean().clone(), q.precision().clone())?),
            QuadLearner::Engine(l) => match l.posterior() {
                ExpFamilyPosterior::Gaussian(g) => Ok(g.clone()),
                _ => unreachable!("quadratic learners are Gaussian"),
            },
        }
    }

    fn step(&mut self, loss: &QuadraticSurrogate, domain: &ConvexDomain) -> Result<()> {
        match self {
            QuadLearner::Recursion(q) => {
                q.step(loss, domain)?;
            }
            QuadLearner::Engine(l) => l.update(&SurrogateLoss::Quadratic(loss.clone()), domain)?,
        }
        Ok(())
    }

    fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(match self {
            QuadLearner::Recursion(q) => q.covariance().clone(),
            QuadLearner::Engine(_) => self.state()?.covariance().clone(),
        })
    }
}

/// Strongly convex GD and ONS. Greedy runs use the closed-form recursion;
/// lazy runs use the engine, which is exact lazy EW under projection.
fn run_quadratic(config: &ExperimentConfig, mut adversary: Adversary) -> Result<RunOutcome> {
    let (d, horizon, sigma2) = (config.dim(), config.horizon(), config.sigma2);
    let is_ons = config.algorithm == Algorithm::Ons;
    if is_ons && config.domain != DomainKind::Ball {
        return Err(config_err("ons runs on a ball domain"));
    }
    let domain = config.action_domain()?;
    let (g_bound, alpha, big_d, diameter) = (config.grad_bound(), config.alpha(), config.max_norm(), config.diameter());
    let kind = if is_ons { BoundKind::Ons } else { BoundKind::StronglyConvex };
    let base = BoundInputs {
        horizon: Some(horizon),
        dim: Some(d),
        grad_bound: Some(g_bound),
        alpha: Some(alpha),
        radius: Some(big_d),
        diameter: Some(diameter),
        ..Default::default()
    };
    let eta_sigma2 = quadratic_eta_sigma2(config, base, kind)?;
    let eta = eta_sigma2 / sigma2;
    let prior = GaussianState::isotropic(DVector::zeros(d), sigma2)?;
    let mut learner = match config.flavor {
        Flavor::Greedy => QuadLearner::Recursion(QuadEwState::new(&prior, eta, Flavor::Greedy, &domain)?),
        Flavor::Lazy => QuadLearner::Engine(Box::new(Learner::new(
            ExpFamilyPosterior::Gaussian(prior),
            Schedule::constant(eta)?,
            Flavor::Lazy,
            &domain,
        )?)),
    };

    let mut ledger = RegretLedger::new();
    let mut quad_sum = 0.0;
    // sum of surrogates as 1/2 u^T A u + <b, u> + c
    let (mut sa, mut sb, mut sc) = (DMatrix::zeros(d, d), DVector::zeros(d), 0.0);
    let mut centers = (DVector::zeros(d), 0.0);
    let mut log_linear = LogLinearComparator::new(d, big_d);
    let mut rounds = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let state = learner.state()?;
        let w = state.mean().clone();
        let round = adversary.next(&w)?;
        let g = round.gradient(&w);
        let surrogate = if is_ons {
            ons_surrogate(&g, &w, alpha, g_bound, diameter)?
        } else {
            QuadraticSurrogate::new(g.clone(), Curvature::Isotropic(alpha), w.clone())?
        };
        let gap = mixability_gap(&ExpFamilyPosterior::Gaussian(state), &SurrogateLoss::Quadratic(surrogate.clone()), eta)?;
        learner.step(&surrogate, &domain)?;
        quad_sum += g.dot(&(learner.covariance()? * &g));

        let m = surrogate.curvature().to_matrix(d);
        let mw = &m * &w;
        sa += &m;
        sb += &g - &mw;
        sc += -w.dot(&g) + 0.5 * w.dot(&mw);

        let comparator = match &round {
            Round::Quadratic { center, alpha } => {
                centers.0 += center;
                centers.1 += center.norm_squared();
                let u = project(config.domain, config.radius, &(&centers.0 / t as f64));
                0.5 * alpha * (centers.1 - 2.0 * u.dot(&centers.0) + t as f64 * u.norm_squared())
            }
            Round::LogLinear(x) => log_linear.push(x.clone()),
            other => return Err(config_err(format!("unexpected round {other:?}"))),
        };
        let inputs = BoundInputs {
            horizon: Some(t),
            eta_sigma2: Some(eta_sigma2),
            ..base
        };
        ledger.push_cumulative(round.loss(&w), comparator, gap, evaluate_bound(kind, &inputs)?);
        rounds.push(round);
    }

    let last = ledger.last().copied().ok_or_else(|| config_err("empty run"))?;
    let gauss = evaluate_bound(
        BoundKind::GaussQuadratic,
        &BoundInputs {
            eta: Some(eta),
            prior_quad: Some(big_d * big_d / sigma2),
            quad_sum: Some(quad_sum),
            ..Default::default()
        },
    )?;
    // true regret against u* is dominated by surrogate regret against u*
    let u = match &rounds[0] {
        Round::LogLinear(_) => log_linear.point().clone(),
        _ => project(config.domain, config.radius, &(&centers.0 / horizon as f64)),
    };
    let true_regret = last.cum_loss - rounds.iter().map(|r| r.loss(&u)).sum::<f64>();
    let surrogate_regret = -(0.5 * u.dot(&(&sa * &u)) + sb.dot(&u) + sc);
    let checks = vec![
        BoundCheck::strict("gauss-quadratic", last.regret, gauss),
        BoundCheck::strict("linearization", true_regret, surrogate_regret),
    ];
    let stats = vec![("eta", eta), ("eta_sigma2", eta_sigma2), ("surrogate_regret", surrogate_regret)];
    Ok(outcome(ledger, true, checks, stats))
}

/// Regret statistics of the best expert and of the top-2 mixture.
fn comparator_stats(regret: &DVector<f64>, variance: &DVector<f64>, d: usize) -> Vec<(&'static str, f64, f64, f64)> {
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| regret[b].total_cmp(&regret[a]));
    let mut out = vec![("best", regret[order[0]], variance[order[0]], (d as f64).ln())];
    if d >= 2 {
        let (i, j) = (order[0], order[1]);
        out.push((
            "top2",
            0.5 * (regret[i] + regret[j]),
            0.5 * (variance[i] + variance[j]),
            (d as f64 / 2.0).ln(),
        ));
    }
    out
}

/// `(eta*, bound)` for every grid rate.
fn iprod_bound(post: &EtaGridPosterior, variance: f64, kl: f64) -> Result<Vec<(f64, f64)>> {
    post.grid()
        .iter()
        .map(|&eta| {
            let inputs = BoundInputs {
                eta: Some(eta),
                variance: Some(variance),
                kl: Some(kl),
                gamma_mass: Some(post.prior_mass(eta / 2.0, eta)),
                ..Default::default()
            };
            Ok((eta, evaluate_bound(BoundKind::IProd, &inputs)?))
        })
        .collect()
}

fn run_experts(config: &ExperimentConfig, mut adversary: Adversary) -> Result<RunOutcome> {
    let (d, horizon) = (config.dim(), config.horizon());
    let prior = DVector::from_element(d, 1.0 / d as f64);
    let algorithm = config.algorithm;
    let mut grid = EtaGridPosterior::for_horizon(horizon, &prior)?;
    let mut coin = CoinBetting::new(&prior, horizon)?.clipping_regrets(config.clip_regrets);
    let mut regret = DVector::zeros(d);
    let mut variance = DVector::zeros(d);
    let mut expert_loss = DVector::zeros(d);
    let mut ledger = RegretLedger::new();
    let mut worst_potential: f64 = 0.0;
    let mut potential_rises = 0usize;
    let coin_bound = evaluate_bound(
        BoundKind::CoinBetting,
        &BoundInputs {
            horizon: Some(horizon),
            kl: Some((d as f64).ln()),
            ..Default::default()
        },
    )?;
    for _ in 1..=horizon {
        let w = match algorithm {
            Algorithm::CoinBetting => coin.weights(),
            _ => grid.iprod_weights()?,
        };
        let g = expect_experts(adversary.next(&w)?)?;
        let r = instantaneous_regrets(&w, &g)?;
        match algorithm {
            Algorithm::IProd => {
                grid.iprod_update(&r)?;
                worst_potential = worst_potential.max((grid.potential() - 1.0).abs());
            }
            Algorithm::Squint => {
                let before = grid.potential();
                grid.squint_update(&r)?;
                let now = grid.potential();
                worst_potential = worst_potential.max(now - 1.0);
                if now > before + POTENTIAL_TOL {
                    potential_rises += 1;
                }
            }
            _ => {
                coin.step(&g)?;
            }
        }
        regret += &r;
        variance += r.map(|x| x * x);
        expert_loss += &g;
        let bound = match algorithm {
            Algorithm::CoinBetting => coin_bound,
            _ => {
                let (_, _, vb, kl) = comparator_stats(&regret, &variance, d)[0];
                iprod_bound(&grid, vb, kl)?
                    .into_iter()
                    .map(|(_, b)| b)
                    .fold(f64::INFINITY, f64::min)
            }
        };
        ledger.push_cumulative(w.dot(&g), expert_loss.min(), f64::NAN, bound);
    }

    let mut checks = Vec::new();
    for (label, r, v, kl) in comparator_stats(&regret, &variance, d) {
        match algorithm {
            Algorithm::CoinBetting => {
                let inputs = BoundInputs {
                    horizon: Some(horizon),
                    kl: Some(kl),
                    ..Default::default()
                };
                checks.push(BoundCheck::strict(
                    format!("coin-betting[{label}]"),
                    r,
                    evaluate_bound(BoundKind::CoinBetting, &inputs)?,
                ));
            }
            _ => {
                for (eta, b) in iprod_bound(&grid, v, kl)? {
                    checks.push(BoundCheck::strict(format!("iprod[{label}, eta*={eta}]"), r, b));
                }
            }
        }
    }
    let mut stats = vec![("best_variance", comparator_stats(&regret, &variance, d)[0].2)];
    match algorithm {
        Algorithm::IProd => {
            checks.push(BoundCheck::strict("potential |phi - 1|", worst_potential, POTENTIAL_TOL));
            stats.push(("potential", grid.potential()));
        }
        Algorithm::Squint => {
            checks.push(BoundCheck::strict("potential phi - 1", worst_potential, POTENTIAL_TOL));
            checks.push(BoundCheck::strict("potential rises", potential_rises as f64, 0.0));
            stats.push(("potential", grid.potential()));
        }
        _ => {
            let wealth_min = coin.wealth().min();
            stats.push(("min_wealth", wealth_min));
        }
    }
    let anytime = algorithm != Algorithm::CoinBetting;
    Ok(outcome(ledger, anytime, checks, stats))
}

fn run_bandit(config: &ExperimentConfig, mut adversary: Adversary, rng: &mut ChaCha20Rng) -> Result<RunOutcome> {
    let (d, horizon) = (config.dim(), config.horizon());
    let domain = config.action_domain()?;
    let exploration = ExplorationSpec::for_domain(&domain, d)?;
    let nu = config.nu.unwrap_or(d as f64);
    let (eta, gamma) = match config.eta {
        EtaSpec::Tuned => tuned_parameters(d, horizon, Some(nu))?,
        EtaSpec::Constant(eta) => {
            let gamma = eta * d as f64;
            if gamma >= 1.0 {
                return Err(config_err(format!("gamma = eta d = {gamma} must be below 1")));
            }
            (eta, gamma.min(0.5))
        }
        EtaSpec::InverseSqrt(_) => return Err(config_err("bandit takes a constant learning rate")),
    };
    let sampler = SamplerConfig {
        moment_samples: config.moment_samples,
        ..SamplerConfig::default()
    };
    let mut posterior = BanditPosterior::new(d, domain, sampler)?;
    let bound = evaluate_bound(
        BoundKind::Bandit,
        &BoundInputs {
            horizon: Some(horizon),
            dim: Some(d),
            nu: Some(nu),
            ..Default::default()
        },
    )?;
    let mut ledger = RegretLedger::new();
    let mut sum = DVector::zeros(d);
    let mut flagged = 0usize;
    let mut worst_estimate: f64 = 0.0;
    let mut explored = 0usize;
    for _ in 1..=horizon {
        let s = if config.exact_moment {
            mixture_moment(&posterior.exact_moment()?, &exploration, gamma)?
        } else {
            let (s, diag) = posterior.second_moment(&exploration, gamma, config.moment_samples, rng)?;
            flagged += diag.flagged as usize;
            s
        };
        let draw = posterior.sample_action(&exploration, gamma, rng)?;
        explored += draw.explored as usize;
        let w = draw.point;
        let g = expect_linear(adversary.next(&w)?)?;
        let observed = g.dot(&w);
        let estimate = estimate_loss_vector(&w, observed, &s)?;
        worst_estimate = worst_estimate.max(eta * w.dot(&estimate).abs());
        posterior.absorb_estimate(&estimate, eta)?;
        sum += &g;
        let (comparator, _) = linear_min(config.domain, config.radius, &sum);
        ledger.push_cumulative(observed, comparator, f64::NAN, bound);
    }
    let flagged_fraction = flagged as f64 / horizon as f64;
    if flagged_fraction > MAX_FLAGGED_FRACTION {
        return Err(HarnessError::Diagnostic(format!(
            "chain drift flagged in {:.1}% of rounds",
            100.0 * flagged_fraction
        )));
    }
    let regret = ledger.last().map_or(0.0, |r| r.regret);
    let checks = vec![
        BoundCheck {
            name: "bandit".into(),
            value: regret,
            bound,
            mode: CheckMode::FlagBelowDouble,
        },
        BoundCheck::strict("eta |<w, g~>|", worst_estimate, 1.0 + ESTIMATE_SLACK),
    ];
    let stats = vec![
        ("eta", eta),
        ("gamma", gamma),
        ("nu", nu),
        ("flagged_fraction", flagged_fraction),
        ("explored_fraction", explored as f64 / horizon as f64),
    ];
    Ok(outcome(ledger, false, checks, stats))
}

/// Whether `kind` can drive `algorithm` (used by the sweep to skip
/// combinations early).
pub fn supports(algorithm: Algorithm, kind: AdversaryKind) -> bool {
    let mut c = ExperimentConfig::for_algorithm(algorithm);
    c.adversary = Some(kind);
    c.validate().is_ok()
}
