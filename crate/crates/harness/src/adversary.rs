//! Seeded synthetic adversaries. Each round is checked against the declared
//! class bounds before it is handed to the learner.

use ewkit_core::loss::log_loss;
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::config::{AdversaryKind, DomainKind};
use crate::error::{HarnessError, Result};

/// One round of losses.
#[derive(Debug, Clone, PartialEq)]
pub enum Round {
    /// `f(w) = <w, g>`.
    Linear(DVector<f64>),
    /// `f(w) = alpha/2 |w - center|^2`.
    Quadratic { center: DVector<f64>, alpha: f64 },
    /// Log loss of a probability against outcome `x`.
    Outcome(f64),
    /// `f(w) = -ln(1 + <w, x>)`.
    LogLinear(DVector<f64>),
    /// Expert losses in `[0, 1]^d`.
    Experts(DVector<f64>),
}

impl Round {
    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        match self {
            Round::Linear(g) | Round::Experts(g) => g.dot(w),
            Round::Quadratic { center, alpha } => 0.5 * alpha * (w - center).norm_squared(),
            Round::Outcome(x) => log_loss(*x, w[0]),
            Round::LogLinear(x) => -(1.0 + x.dot(w)).ln(),
        }
    }

    /// Gradient at `w` (the log loss uses its derivative in `u`).
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            Round::Linear(g) | Round::Experts(g) => g.clone(),
            Round::Quadratic { center, alpha } => (w - center) * *alpha,
            Round::Outcome(x) => DVector::from_element(1, -x / w[0] + (1.0 - x) / (1.0 - w[0])),
            Round::LogLinear(x) => x * (-1.0 / (1.0 + x.dot(w))),
        }
    }
}

/// Which norm the declared gradient bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradNorm {
    L2,
    Linf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryParams {
    pub kind: AdversaryKind,
    pub dim: usize,
    pub grad_bound: f64,
    pub norm: GradNorm,
    pub domain: DomainKind,
    /// Ball radius or box half-width.
    pub radius: f64,
    /// `max |w|_2` over the domain.
    pub max_norm: f64,
    pub alpha: f64,
    /// Emit expert loss vectors rather than linear gradients (zero adversary).
    pub experts: bool,
}

#[derive(Debug, Clone)]
pub struct Adversary {
    params: AdversaryParams,
    rng: ChaCha20Rng,
    bias: DVector<f64>,
    probability: f64,
}

fn uniform_ball(dim: usize, radius: f64, rng: &mut ChaCha20Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return v * (radius * rng.random::<f64>().powf(1.0 / dim as f64) / n);
        }
    }
}

fn unit_direction(dim: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

fn random_sign(rng: &mut ChaCha20Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

impl Adversary {
    /// Draws the per-seed structure (biases, best expert, Bernoulli rate).
    pub fn new(params: AdversaryParams, mut rng: ChaCha20Rng) -> Self {
        let d = params.dim;
        let mut probability = 0.0;
        let bias = match params.kind {
            AdversaryKind::IidLinear => DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5)),
            AdversaryKind::StronglyConvexQuadratic => uniform_ball(d, 0.5 * params.max_norm, &mut rng),
            AdversaryKind::ExpConcave | AdversaryKind::BanditLinear => unit_direction(d, &mut rng) * 0.5,
            AdversaryKind::ExpertsBounded => DVector::from_fn(d, |_, _| rng.random_range(0.2..0.8)),
            AdversaryKind::ExpertsLowVariance => {
                let best = rng.random_range(0..d);
                DVector::from_fn(d, |i, _| if i == best { 0.0 } else { rng.random_range(0.02..0.1) })
            }
            AdversaryKind::LogLossBernoulli => {
                probability = rng.random_range(0.05..0.95);
                DVector::zeros(d)
            }
            AdversaryKind::AdaptiveLinear | AdversaryKind::Zero => DVector::zeros(d),
        };
        Self {
            params,
            rng,
            bias,
            probability,
        }
    }

    pub fn params(&self) -> &AdversaryParams {
        &self.params
    }

    /// The next round, given the learner's current action.
    pub fn next(&mut self, w: &DVector<f64>) -> Result<Round> {
        let round = self.draw(w);
        self.check(&round, w)?;
        Ok(round)
    }

    fn scale_linear(&self, v: DVector<f64>) -> DVector<f64> {
        match self.params.norm {
            GradNorm::Linf => v * self.params.grad_bound,
            GradNorm::L2 => v * (self.params.grad_bound / (self.params.dim as f64).sqrt()),
        }
    }

    fn draw(&mut self, w: &DVector<f64>) -> Round {
        let p = &self.params;
        let d = p.dim;
        match p.kind {
            AdversaryKind::IidLinear => {
                let noise = DVector::from_fn(d, |_, _| self.rng.random_range(-0.5..0.5));
                Round::Linear(self.scale_linear(&self.bias + noise))
            }
            AdversaryKind::AdaptiveLinear => {
                let g = match p.norm {
                    GradNorm::L2 => {
                        let n = w.norm();
                        if n > 1e-12 {
                            w * (p.grad_bound / n)
                        } else {
                            unit_direction(d, &mut self.rng) * p.grad_bound
                        }
                    }
                    GradNorm::Linf => DVector::from_fn(d, |i, _| {
                        let s = if w[i] > 0.0 {
                            1.0
                        } else if w[i] < 0.0 {
                            -1.0
                        } else {
                            random_sign(&mut self.rng)
                        };
                        s * p.grad_bound
                    }),
                };
                Round::Linear(g)
            }
            AdversaryKind::Zero if p.experts => Round::Experts(DVector::zeros(d)),
            AdversaryKind::Zero => Round::Linear(DVector::zeros(d)),
            AdversaryKind::StronglyConvexQuadratic => Round::Quadratic {
                center: &self.bias + uniform_ball(d, 0.5 * p.max_norm, &mut self.rng),
                alpha: p.alpha,
            },
            AdversaryKind::LogLossBernoulli => {
                Round::Outcome(if self.rng.random::<f64>() < self.probability { 1.0 } else { 0.0 })
            }
            AdversaryKind::ExpConcave => {
                let v = &self.bias + uniform_ball(d, 0.5, &mut self.rng);
                Round::LogLinear(v / (2.0 * p.max_norm))
            }
            AdversaryKind::ExpertsBounded => Round::Experts(DVector::from_fn(d, |i, _| {
                (self.bias[i] + self.rng.random_range(-0.3..0.3)).clamp(0.0, 1.0)
            })),
            AdversaryKind::ExpertsLowVariance => {
                let base = self.rng.random_range(0.0..0.9);
                Round::Experts(self.bias.map(|delta| base + delta))
            }
            AdversaryKind::BanditLinear => {
                let v = &self.bias + uniform_ball(d, 0.5, &mut self.rng);
                let scale = match p.domain {
                    DomainKind::Ball => p.radius,
                    DomainKind::Box => p.radius * (d as f64).sqrt(),
                };
                Round::Linear(v / scale)
            }
        }
    }

    fn check(&self, round: &Round, w: &DVector<f64>) -> Result<()> {
        let p = &self.params;
        let slack = 1.0 + 1e-12;
        let fail = |what: String| Err(HarnessError::Constant(format!("{}: {what}", p.kind.id())));
        match round {
            Round::Linear(g) if p.kind == AdversaryKind::BanditLinear => {
                let worst = match p.domain {
                    DomainKind::Ball => p.radius * g.norm(),
                    DomainKind::Box => p.radius * g.lp_norm(1),
                };
                if !(worst <= slack) {
                    return fail(format!("max |<w, g>| = {worst} exceeds 1"));
                }
            }
            Round::Linear(g) => {
                let n = match p.norm {
                    GradNorm::L2 => g.norm(),
                    GradNorm::Linf => g.amax(),
                };
                if !(n <= p.grad_bound * slack) {
                    return fail(format!("gradient norm {n} exceeds G = {}", p.grad_bound));
                }
            }
            Round::LogLinear(x) if !(2.0 * p.max_norm * x.norm() <= slack) => {
                return fail("1 + <w, x> may drop below 1/2".into());
            }
            Round::Quadratic { .. } | Round::LogLinear(_) => {
                let n = round.gradient(w).norm();
                if !(n <= p.grad_bound * slack) {
                    return fail(format!("gradient norm {n} exceeds G = {}", p.grad_bound));
                }
            }
            Round::Outcome(x) => {
                if !(0.0..=1.0).contains(x) {
                    return fail(format!("outcome {x} outside [0, 1]"));
                }
            }
            Round::Experts(g) => {
                if g.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return fail("expert loss outside [0, 1]".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Role};

    fn params(kind: AdversaryKind) -> AdversaryParams {
        AdversaryParams {
            kind,
            dim: 3,
            grad_bound: 1.0,
            norm: GradNorm::L2,
            domain: DomainKind::Ball,
            radius: 1.0,
            max_norm: 1.0,
            alpha: 1.0,
            experts: false,
        }
    }

    #[test]
    fn every_kind_respects_its_class() {
        for kind in AdversaryKind::ALL {
            let mut p = params(kind);
            p.dim = if kind == AdversaryKind::LogLossBernoulli { 1 } else { 3 };
            p.grad_bound = if kind == AdversaryKind::StronglyConvexQuadratic { 2.0 } else { 1.0 };
            let mut adv = Adversary::new(p.clone(), stream(1, 0, Role::Adversary));
            let w = if kind == AdversaryKind::LogLossBernoulli {
                DVector::from_element(1, 0.3)
            } else {
                DVector::from_element(p.dim, 0.5)
            };
            for _ in 0..2000 {
                adv.next(&w).unwrap();
            }
        }
    }

    #[test]
    fn violations_are_reported() {
        let adv = Adversary::new(params(AdversaryKind::IidLinear), stream(1, 0, Role::Adversary));
        let w = DVector::zeros(3);
        let err = adv.check(&Round::Linear(DVector::from_element(3, 1.0)), &w).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(adv.check(&Round::Experts(DVector::from_element(3, 1.5)), &w).is_err());
    }

    #[test]
    fn same_seed_same_rounds() {
        let p = params(AdversaryKind::ExpConcave);
        let mut a = Adversary::new(p.clone(), stream(5, 1, Role::Adversary));
        let mut b = Adversary::new(p, stream(5, 1, Role::Adversary));
        let w = DVector::zeros(3);
        for _ in 0..10 {
            assert_eq!(a.next(&w).unwrap(), b.next(&w).unwrap());
        }
    }
}
