use ewkit_core::bregman::{BregmanPair, GaussianCarrier, PoissonCarrier};
use ewkit_core::ew::{mixability_gap, Flavor, Learner, Schedule};
use ewkit_core::expfam::{
    kl_bernoulli, kl_gaussian, unnormalized_relative_entropy, BetaState, BetaSupport, DiscreteAtoms,
    ExpFamilyPosterior, GaussianState, PoissonProductState,
};
use ewkit_core::loss::{Curvature, QuadraticSurrogate, SurrogateLoss};
use ewkit_core::surrogates::{ons_surrogate, QuadEwState};
use ewkit_core::ConvexDomain;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn vec_in(range: std::ops::Range<f64>, d: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(range, d).prop_map(DVector::from_vec)
}

fn random_spd(d: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.3
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn duality_round_trip_gaussian(theta in (1usize..6).prop_flat_map(|d| vec_in(-5.0..5.0, d)), var in 0.1f64..10.0) {
        let c = GaussianCarrier::new(var).unwrap();
        let back = c.natural_map(&c.mean_map(&theta)).unwrap();
        prop_assert!((back - &theta).amax() <= 1e-9);
    }

    #[test]
    fn duality_round_trip_poisson(theta in (1usize..6).prop_flat_map(|d| vec_in(-5.0..5.0, d))) {
        let back = PoissonCarrier.natural_map(&PoissonCarrier.mean_map(&theta)).unwrap();
        prop_assert!((back - &theta).amax() <= 1e-9);
    }

    #[test]
    fn kl_equals_both_bregman_forms_gaussian(
        (mp, mq) in (1usize..5).prop_flat_map(|d| (vec_in(-3.0..3.0, d), vec_in(-3.0..3.0, d))),
        var in 0.2f64..5.0,
    ) {
        let c = GaussianCarrier::new(var).unwrap();
        let p = GaussianState::isotropic(mp.clone(), var).unwrap();
        let q = GaussianState::isotropic(mq.clone(), var).unwrap();
        let kl = kl_gaussian(&p, &q).unwrap();
        let (tp, tq) = (c.natural_map(&mp).unwrap(), c.natural_map(&mq).unwrap());
        prop_assert!(close(kl, c.bregman_cumulant(&tq, &tp).unwrap(), 1e-9));
        prop_assert!(close(kl, c.bregman_conjugate(&mp, &mq).unwrap(), 1e-9));
    }

    #[test]
    fn kl_equals_both_bregman_forms_poisson(
        (lp, lq) in (1usize..5).prop_flat_map(|d| (vec_in(0.05..8.0, d), vec_in(0.05..8.0, d))),
    ) {
        let p = PoissonProductState::new(lp.clone()).unwrap();
        let q = PoissonProductState::new(lq.clone()).unwrap();
        let kl = p.kl(&q).unwrap();
        let b_cumulant = PoissonCarrier.bregman_cumulant(&q.natural(), &p.natural()).unwrap();
        let b_conjugate = PoissonCarrier.bregman_conjugate(&lp, &lq).unwrap();
        prop_assert!(close(kl, b_cumulant, 1e-9));
        prop_assert!(close(kl, b_conjugate, 1e-9));
        prop_assert!(close(kl, unnormalized_relative_entropy(&lp, &lq).unwrap(), 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pinsker(x in 0.0f64..=1.0, y in 1e-9f64..1.0) {
        prop_assert!(kl_bernoulli(x, y).unwrap() >= 2.0 * (x - y).powi(2) - 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mahalanobis_projection_beats_random_feasible_points(seed in any::<u64>(), d in 1usize..5, use_ball in any::<bool>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let precision = random_spd(d, &mut rng);
        let v = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let domain = if use_ball {
            ConvexDomain::ball(rng.random_range(0.3..1.5)).unwrap()
        } else {
            ConvexDomain::centered_box(d, rng.random_range(0.2..1.0)).unwrap()
        };
        let p = domain.project_mahalanobis(&v, &precision).unwrap();
        prop_assert!(domain.contains(&p, 1e-9));
        let dist = |z: &DVector<f64>| (z - &v).dot(&(&precision * (z - &v)));
        let best = dist(&p);
        for _ in 0..1000 {
            let z = match &domain {
                ConvexDomain::Ball { radius } => {
                    let dir = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                    if dir.norm() == 0.0 { continue; }
                    dir.normalize() * r
                }
                ConvexDomain::Box { lower, upper } => {
                    DVector::from_fn(d, |i, _| rng.random_range(lower[i]..=upper[i]))
                }
                _ => unreachable!(),
            };
            prop_assert!(dist(&z) >= best - 1e-9);
        }
    }

    #[test]
    fn lazy_and_greedy_agree_without_constraints(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = 3;
        let eta = rng.random_range(0.05..0.5);
        let all = ConvexDomain::AllSpace;
        let s = Schedule::constant(eta).unwrap();
        let gauss = ExpFamilyPosterior::Gaussian(GaussianState::new(DVector::from_element(d, 0.1), random_spd(d, &mut rng)).unwrap());
        let poisson = ExpFamilyPosterior::Poisson(PoissonProductState::new(DVector::from_element(d, 0.5)).unwrap());
        let atoms = ExpFamilyPosterior::Discrete(DiscreteAtoms::signed_basis(d, 1.0, true).unwrap());
        let beta = ExpFamilyPosterior::Beta(BetaState::new(0.5, 0.5, BetaSupport::Unit).unwrap());
        for prior in [gauss, poisson, atoms, beta] {
            let mut lazy = Learner::new(prior.clone(), s.clone(), Flavor::Lazy, &all).unwrap();
            let mut greedy = Learner::new(prior.clone(), s.clone(), Flavor::Greedy, &all).unwrap();
            for _ in 0..200 {
                let g = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let loss = match &prior {
                    ExpFamilyPosterior::Gaussian(_) => {
                        let curvature = Curvature::RankOne { scale: 0.1, direction: g.clone() };
                        SurrogateLoss::Quadratic(QuadraticSurrogate::new(g.clone(), curvature, greedy.mean()).unwrap())
                    }
                    ExpFamilyPosterior::Beta(_) => SurrogateLoss::log_loss(rng.random_range(0.0..=1.0)).unwrap(),
                    _ => SurrogateLoss::linear(g.clone() * 0.2).unwrap(),
                };
                lazy.update(&loss, &all).unwrap();
                greedy.update(&loss, &all).unwrap();
                let diff = (lazy.mean() - greedy.mean()).amax();
                prop_assert!(diff <= 1e-10 * (1.0 + greedy.mean().amax()), "{} diverged by {diff}", prior.family());
            }
        }
    }

    #[test]
    fn gap_nonpositive_for_exp_concave_losses(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        // log loss is 1-exp-concave
        let a = rng.random_range(0.2..20.0);
        let b = rng.random_range(0.2..20.0);
        let beta = ExpFamilyPosterior::Beta(BetaState::new(a, b, BetaSupport::Unit).unwrap());
        let eta = rng.random_range(0.01..=1.0);
        let gap = mixability_gap(&beta, &SurrogateLoss::log_loss(rng.random_range(0.0..=1.0)).unwrap(), eta).unwrap();
        prop_assert!(gap <= 1e-12);
        // (w - y)^2 on [-1, 1] is 1/8-exp-concave
        let atoms: Vec<DVector<f64>> = (0..7).map(|k| DVector::from_element(1, -1.0 + k as f64 / 3.0)).collect();
        let weights: Vec<f64> = (0..7).map(|_| rng.random_range(0.01..1.0)).collect();
        let post = ExpFamilyPosterior::Discrete(DiscreteAtoms::new(atoms, weights).unwrap());
        let y = DVector::from_element(1, rng.random_range(-1.0..=1.0));
        let sq = QuadraticSurrogate::new(DVector::zeros(1), Curvature::Isotropic(2.0), y).unwrap();
        let gap = mixability_gap(&post, &SurrogateLoss::Quadratic(sq), rng.random_range(0.001..=0.125)).unwrap();
        prop_assert!(gap <= 1e-12);
    }

    #[test]
    fn prediction_depends_only_on_eta_times_variance(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = 3;
        let ball = ConvexDomain::ball(1.0).unwrap();
        let (eta, sigma2) = (0.3, 0.8);
        for c in [0.1, 10.0] {
            let base = GaussianState::isotropic(DVector::zeros(d), sigma2).unwrap();
            let scaled = GaussianState::isotropic(DVector::zeros(d), sigma2 / c).unwrap();
            let mut gd_a = Learner::new(ExpFamilyPosterior::Gaussian(base.clone()), Schedule::constant(eta).unwrap(), Flavor::Greedy, &ball).unwrap();
            let mut gd_b = Learner::new(ExpFamilyPosterior::Gaussian(scaled.clone()), Schedule::constant(c * eta).unwrap(), Flavor::Greedy, &ball).unwrap();
            let mut ons_a = QuadEwState::new(&base, eta, Flavor::Greedy, &ball).unwrap();
            let mut ons_b = QuadEwState::new(&scaled, c * eta, Flavor::Greedy, &ball).unwrap();
            for _ in 0..100 {
                let g = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let lin = SurrogateLoss::linear(g.clone()).unwrap();
                gd_a.update(&lin, &ball).unwrap();
                gd_b.update(&lin, &ball).unwrap();
                prop_assert!((gd_a.mean() - gd_b.mean()).amax() <= 1e-10);
                let qa = ons_surrogate(&g, ons_a.mean(), 1.0, 2.0, 2.0).unwrap();
                let qb = ons_surrogate(&g, ons_b.mean(), 1.0, 2.0, 2.0).unwrap();
                ons_a.step(&qa, &ball).unwrap();
                ons_b.step(&qb, &ball).unwrap();
                prop_assert!((ons_a.mean() - ons_b.mean()).amax() <= 1e-10);
            }
        }
    }
}
