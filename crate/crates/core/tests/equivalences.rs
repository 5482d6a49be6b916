//! Classical algorithms reproduced by the exponential-weights engine.

use ewkit_core::bregman::{GaussianCarrier, PoissonCarrier};
use ewkit_core::ew::{Flavor, Learner, Schedule};
use ewkit_core::experts::{coinbetting_eta, kt_predict};
use ewkit_core::expfam::{BetaState, BetaSupport, DiscreteAtoms, ExpFamilyPosterior, GaussianState, PoissonProductState};
use ewkit_core::loss::{Curvature, QuadraticSurrogate, SurrogateLoss};
use ewkit_core::surrogates::{ons_surrogate, ExponentiatedGradientPm, GradientDescent, MirrorDescent, QuadEwState};
use ewkit_core::ConvexDomain;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_vec(d: usize, scale: f64, rng: &mut ChaCha20Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(-scale..scale))
}

#[test]
fn gradient_descent_is_gaussian_ew() {
    for seed in 0..5 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = 4;
        let sigma2 = rng.random_range(0.2..3.0);
        let etas: Vec<f64> = (1..=500).map(|t| 0.5 / (t as f64).sqrt()).collect();
        let schedule = Schedule::sequence(etas.clone()).unwrap();
        let gd_schedule = schedule.scaled(sigma2).unwrap();
        let domain = ConvexDomain::ball(rng.random_range(0.3..2.0)).unwrap();
        let w1 = DVector::zeros(d);
        for flavor in [Flavor::Greedy, Flavor::Lazy] {
            let prior = ExpFamilyPosterior::Gaussian(GaussianState::isotropic(w1.clone(), sigma2).unwrap());
            let mut ew = Learner::new(prior, schedule.clone(), flavor, &domain).unwrap();
            let mut gd = GradientDescent::new(w1.clone(), gd_schedule.clone(), flavor, &domain).unwrap();
            for _ in 0..500 {
                let g = random_vec(d, 1.0, &mut rng);
                ew.update(&SurrogateLoss::linear(g.clone()).unwrap(), &domain).unwrap();
                gd.step(&g, &domain).unwrap();
                assert!((ew.mean() - gd.current()).amax() <= 1e-10);
            }
        }
    }
}

#[test]
fn eg_pm_is_ew_on_signed_basis() {
    for seed in 0..5 {
        let mut rng = ChaCha20Rng::seed_from_u64(100 + seed);
        let (d, m) = (6, 2.0);
        let schedule = Schedule::constant(0.05).unwrap();
        let prior = ExpFamilyPosterior::Discrete(DiscreteAtoms::signed_basis(d, m, true).unwrap());
        let mut ew = Learner::new(prior, schedule.clone(), Flavor::Greedy, &ConvexDomain::AllSpace).unwrap();
        let mut eg = ExponentiatedGradientPm::new(d, m, schedule).unwrap();
        for _ in 0..300 {
            let g = random_vec(d, 1.0, &mut rng);
            ew.update(&SurrogateLoss::linear(g.clone()).unwrap(), &ConvexDomain::AllSpace).unwrap();
            eg.step(&g).unwrap();
            let ExpFamilyPosterior::Discrete(atoms) = ew.posterior() else { unreachable!() };
            let (plus, minus) = eg.weights();
            for i in 0..d {
                assert!((atoms.weights()[i] - plus[i]).abs() <= 1e-12);
                assert!((atoms.weights()[d + i] - minus[i]).abs() <= 1e-12);
            }
            assert!(eg.prediction().lp_norm(1) <= m + 1e-12);
        }
    }
}

#[test]
fn mirror_descent_is_ew_for_both_carriers() {
    for seed in 0..3 {
        let mut rng = ChaCha20Rng::seed_from_u64(200 + seed);
        let d = 3;
        let schedule = Schedule::from_fn(200, |t| 0.4 / (t as f64).sqrt()).unwrap();
        for flavor in [Flavor::Greedy, Flavor::Lazy] {
            let sigma2 = 0.7;
            let ball = ConvexDomain::ball(1.0).unwrap();
            let w1 = DVector::from_element(d, 0.1);
            let mut ew = Learner::new(
                ExpFamilyPosterior::Gaussian(GaussianState::isotropic(w1.clone(), sigma2).unwrap()),
                schedule.clone(),
                flavor,
                &ball,
            )
            .unwrap();
            let mut md = MirrorDescent::new(GaussianCarrier::new(sigma2).unwrap(), w1, schedule.clone(), flavor, &ball).unwrap();

            let positive_box = ConvexDomain::boxed(DVector::from_element(d, 0.05), DVector::from_element(d, 3.0)).unwrap();
            let r1 = DVector::from_element(d, 1.0);
            let mut ew_p = Learner::new(
                ExpFamilyPosterior::Poisson(PoissonProductState::new(r1.clone()).unwrap()),
                schedule.clone(),
                flavor,
                &positive_box,
            )
            .unwrap();
            let mut md_p = MirrorDescent::new(PoissonCarrier, r1, schedule.clone(), flavor, &positive_box).unwrap();
            for _ in 0..200 {
                let g = random_vec(d, 2.0, &mut rng);
                let lin = SurrogateLoss::linear(g.clone()).unwrap();
                ew.update(&lin, &ball).unwrap();
                md.step(&g, &ball).unwrap();
                assert!((ew.mean() - md.current()).amax() <= 1e-8);
                ew_p.update(&lin, &positive_box).unwrap();
                md_p.step(&g, &positive_box).unwrap();
                assert!((ew_p.mean() - md_p.current()).amax() <= 1e-8);
            }
        }
    }
}

#[test]
fn quadratic_recursion_matches_engine() {
    for seed in 0..3 {
        let mut rng = ChaCha20Rng::seed_from_u64(300 + seed);
        let d = 4;
        let prior = GaussianState::isotropic(DVector::zeros(d), 0.5).unwrap();
        let eta = 0.8;
        let ball = ConvexDomain::ball(1.0).unwrap();
        let all = ConvexDomain::AllSpace;
        for (flavor, domain) in [(Flavor::Greedy, &ball), (Flavor::Lazy, &all)] {
            let mut quad = QuadEwState::new(&prior, eta, flavor, domain).unwrap();
            let mut ew = Learner::new(
                ExpFamilyPosterior::Gaussian(prior.clone()),
                Schedule::constant(eta).unwrap(),
                flavor,
                domain,
            )
            .unwrap();
            for _ in 0..250 {
                let g = random_vec(d, 1.0, &mut rng);
                let q = ons_surrogate(&g, quad.mean(), 1.0, 2.0, 2.0).unwrap();
                quad.step(&q, domain).unwrap();
                ew.update(&SurrogateLoss::Quadratic(q), domain).unwrap();
                assert!((ew.mean() - quad.mean()).amax() <= 1e-9);
            }
        }
    }
}

#[test]
fn sherman_morrison_matches_direct_inversion() {
    let mut rng = ChaCha20Rng::seed_from_u64(400);
    let d = 5;
    let prior = GaussianState::isotropic(DVector::zeros(d), 1.0).unwrap();
    let ball = ConvexDomain::ball(1.0).unwrap();
    let mut rank_one = QuadEwState::new(&prior, 1.0, Flavor::Greedy, &ball).unwrap();
    let mut dense = rank_one.clone();
    for _ in 0..600 {
        let g = random_vec(d, 1.0, &mut rng);
        let q = ons_surrogate(&g, rank_one.mean(), 1.0, 2.0, 2.0).unwrap();
        let Curvature::RankOne { scale, direction } = q.curvature().clone() else { unreachable!() };
        let m = &direction * direction.transpose() * scale;
        let qd = QuadraticSurrogate::new(g.clone(), Curvature::Dense(m), dense.mean().clone()).unwrap();
        rank_one.step(&q, &ball).unwrap();
        dense.step(&qd, &ball).unwrap();
        assert!((rank_one.covariance() - dense.covariance()).amax() <= 1e-9);
        let identity = rank_one.precision() * rank_one.covariance() - DMatrix::identity(d, d);
        assert!(identity.amax() <= 1e-9);
    }
}

#[test]
fn kt_is_lazy_ew_with_jeffreys_prior() {
    let mut rng = ChaCha20Rng::seed_from_u64(500);
    let prior = ExpFamilyPosterior::Beta(BetaState::new(0.5, 0.5, BetaSupport::Unit).unwrap());
    let mut ew = Learner::new(prior, Schedule::constant(1.0).unwrap(), Flavor::Lazy, &ConvexDomain::AllSpace).unwrap();
    let mut ones = 0;
    for t in 1..=300 {
        assert!((ew.mean()[0] - kt_predict(ones, t).unwrap()).abs() <= 1e-14);
        let x = rng.random_bool(0.3);
        ones += x as usize;
        ew.update(&SurrogateLoss::log_loss(x as u8 as f64).unwrap(), &ConvexDomain::AllSpace)
            .unwrap();
    }
}

#[test]
fn coin_betting_rate_is_clipped_lazy_beta_mean() {
    let mut rng = ChaCha20Rng::seed_from_u64(600);
    let horizon = 200;
    let a = horizon as f64 / 4.0 + 0.5;
    let prior = ExpFamilyPosterior::Beta(BetaState::new(a, a, BetaSupport::Symmetric).unwrap());
    let nonnegative = ConvexDomain::interval(0.0, 1.0).unwrap();
    let mut ew = Learner::new(prior, Schedule::constant(1.0).unwrap(), Flavor::Lazy, &nonnegative).unwrap();
    let mut regret = 0.0;
    for t in 1..=horizon {
        assert!((ew.mean()[0] - coinbetting_eta(regret, t, a)).abs() <= 1e-12);
        let r: f64 = if rng.random_bool(0.6) { rng.random_range(0.0..1.0) } else { -rng.random_range(0.0..1.0) };
        regret += r;
        ew.update(&SurrogateLoss::log_loss((1.0 + r) / 2.0).unwrap(), &nonnegative).unwrap();
    }
}
