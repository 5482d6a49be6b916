//! Independent numerical checks of closed forms.

use ewkit_core::bandit::{
    estimate_loss_vector, exact_moments, mixture_moment, BanditPosterior, ExplorationSpec, SamplerConfig,
};
use ewkit_core::ew::{Flavor, Learner, Schedule};
use ewkit_core::experts::{instantaneous_regrets, CoinBetting, EtaGridPosterior};
use ewkit_core::expfam::{kl_bernoulli, kl_gaussian, ExpFamilyPosterior, GaussianState, PoissonProductState};
use ewkit_core::loss::{Curvature, QuadraticSurrogate, SurrogateLoss};
use ewkit_core::ConvexDomain;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[test]
fn one_dimensional_posterior_matches_trapezoid_rule() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (m0, s0) = (0.3, 1.2);
    let prior = GaussianState::isotropic(dv(&[m0]), s0 * s0).unwrap();
    let eta = 0.5;
    let all = ConvexDomain::AllSpace;
    let mut ew = Learner::new(ExpFamilyPosterior::Gaussian(prior), Schedule::constant(eta).unwrap(), Flavor::Lazy, &all).unwrap();
    let mut losses = Vec::new();
    for _ in 0..10 {
        let q = QuadraticSurrogate::new(
            dv(&[rng.random_range(-1.0..1.0)]),
            Curvature::Isotropic(rng.random_range(0.0..0.3)),
            dv(&[rng.random_range(-1.0..1.0)]),
        )
        .unwrap();
        let loss = SurrogateLoss::Quadratic(q);
        ew.update(&loss, &all).unwrap();
        losses.push(loss);
    }

    let n = 100_000;
    let (lo, hi) = (m0 - 8.0 * s0, m0 + 8.0 * s0);
    let h = (hi - lo) / n as f64;
    let log_density = |w: f64| {
        let x = dv(&[w]);
        -0.5 * ((w - m0) / s0).powi(2) - eta * losses.iter().map(|l| l.value(&x)).sum::<f64>()
    };
    let shift = log_density(ew.mean()[0]);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        let w = lo + k as f64 * h;
        let weight = if k == 0 || k == n { 0.5 } else { 1.0 };
        let p = weight * (log_density(w) - shift).exp();
        z += p;
        m1 += p * w;
        m2 += p * w * w;
    }
    let mean = m1 / z;
    let var = m2 / z - mean * mean;
    let ExpFamilyPosterior::Gaussian(post) = ew.posterior() else { unreachable!() };
    assert!((post.mean()[0] - mean).abs() <= 1e-6, "{} vs {mean}", post.mean()[0]);
    assert!((post.covariance()[(0, 0)] - var).abs() <= 1e-6);
}

#[test]
fn gaussian_kl_matches_monte_carlo() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let q = GaussianState::new(dv(&[0.5, -0.2]), DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap();
    let p = GaussianState::new(dv(&[0.0, 0.4]), DMatrix::from_row_slice(2, 2, &[2.0, -0.2, -0.2, 1.0])).unwrap();
    let chol = q.covariance().clone().cholesky().unwrap().l();
    let log_density = |s: &GaussianState, x: &DVector<f64>| {
        let diff = x - s.mean();
        -0.5 * diff.dot(&(s.precision() * &diff)) - 0.5 * s.log_det_covariance()
    };
    let n = 1_000_000;
    let mut total = 0.0;
    for _ in 0..n {
        let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = q.mean() + &chol * z;
        total += log_density(&q, &x) - log_density(&p, &x);
    }
    let mc = total / n as f64;
    let kl = kl_gaussian(&q, &p).unwrap();
    assert!((kl - mc).abs() <= 1e-2, "{kl} vs {mc}");
}

#[test]
fn poisson_kl_matches_truncated_series() {
    let lp = [0.4, 3.0, 7.5];
    let lq = [1.1, 2.0, 6.0];
    let ln_pmf = |lambda: f64, k: u32| k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0);
    let mut series = 0.0;
    for (a, b) in lp.iter().zip(&lq) {
        for k in 0..=200 {
            let lpk = ln_pmf(*a, k);
            series += lpk.exp() * (lpk - ln_pmf(*b, k));
        }
    }
    let p = PoissonProductState::new(dv(&lp)).unwrap();
    let q = PoissonProductState::new(dv(&lq)).unwrap();
    assert!((p.kl(&q).unwrap() - series).abs() <= 1e-10);
}

#[test]
fn prod_inequality_on_grid() {
    let n = 10_000;
    for k in 0..=n {
        let x = -0.5 + 1.5 * k as f64 / n as f64;
        assert!((1.0 + x).ln() >= x - x * x - 1e-15, "fails at {x}");
    }
}

#[test]
fn pinsker_on_grid() {
    let n = 400;
    for i in 0..=n {
        for j in 1..n {
            let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
            assert!(kl_bernoulli(x, y).unwrap() >= 2.0 * (x - y).powi(2) - 1e-15);
        }
    }
}

fn random_losses(k: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
    DVector::from_fn(k, |i, _| (rng.random::<f64>() + 0.15 * i as f64).min(1.0))
}

#[test]
fn iprod_potential_is_one_and_squint_potential_decreases() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let k = 5;
    let prior = DVector::from_element(k, 1.0 / k as f64);
    let horizon = 2000;
    let mut iprod = EtaGridPosterior::for_horizon(horizon, &prior).unwrap();
    let mut squint = iprod.clone();
    let mut last = 1.0;
    for _ in 0..horizon {
        let losses = random_losses(k, &mut rng);
        let w = iprod.iprod_weights().unwrap();
        iprod.iprod_update(&instantaneous_regrets(&w, &losses).unwrap()).unwrap();
        assert!((iprod.potential() - 1.0).abs() <= 1e-10);

        let w = squint.iprod_weights().unwrap();
        squint.squint_update(&instantaneous_regrets(&w, &losses).unwrap()).unwrap();
        let phi = squint.potential();
        assert!(phi <= 1.0 + 1e-10 && phi <= last + 1e-10);
        last = phi;
    }
}

#[test]
fn coin_betting_wealth_has_product_form() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let k = 4;
    let horizon = 500;
    let prior = dv(&[0.1, 0.2, 0.3, 0.4]);
    let mut cb = CoinBetting::new(&prior, horizon).unwrap();
    let a = horizon as f64 / 4.0 + 0.5;
    let mut product = prior.clone();
    let mut regret = DVector::<f64>::zeros(k);
    for t in 1..=horizon {
        let (_, r) = cb.step(&random_losses(k, &mut rng)).unwrap();
        for i in 0..k {
            let eta = (regret[i] / (t as f64 - 1.0 + 2.0 * a)).max(0.0);
            product[i] *= 1.0 + eta * r[i];
            regret[i] += r[i];
        }
        for i in 0..k {
            assert!((cb.wealth()[i] - product[i]).abs() <= 1e-10 * product[i].max(1.0));
        }
    }
}

#[test]
fn loss_estimator_is_unbiased() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let d = 2;
    let domain = ConvexDomain::centered_box(d, 1.0).unwrap();
    let exploration = ExplorationSpec::for_domain(&domain, d).unwrap();
    let mut posterior = BanditPosterior::new(d, domain, SamplerConfig::default()).unwrap();
    posterior.set_theta(dv(&[0.8, -0.5])).unwrap();
    let gamma = 0.3;
    let s = mixture_moment(&posterior.exact_moment().unwrap(), &exploration, gamma).unwrap();
    let ell = dv(&[0.3, -0.2]);
    let n = 100_000;
    let mut mean = DVector::zeros(d);
    for _ in 0..n {
        let w = posterior.sample_action(&exploration, gamma, &mut rng).unwrap().point;
        mean += estimate_loss_vector(&w, w.dot(&ell), &s).unwrap();
    }
    mean /= n as f64;
    assert!((&mean - &ell).amax() <= 0.02, "{mean}");
}

#[test]
fn exploration_moments_match_sampling() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let d = 3;
    for domain in [ConvexDomain::ball(1.5).unwrap(), ConvexDomain::centered_box(d, 0.7).unwrap()] {
        let spec = ExplorationSpec::for_domain(&domain, d).unwrap();
        let n = 100_000;
        let mut m = DMatrix::zeros(d, d);
        for _ in 0..n {
            let w = spec.sample(&mut rng);
            assert!(domain.contains(&w, 1e-12));
            m += &w * w.transpose();
        }
        m /= n as f64;
        assert!((m - spec.second_moment()).amax() <= 5e-3 * spec.john_min_eigenvalue().max(1.0));
    }
}

#[test]
fn uniform_ball_moments_and_mixtures() {
    for d in [1, 2, 3, 5] {
        let ball = ConvexDomain::ball(1.0).unwrap();
        let (mean, second) = exact_moments(&DVector::zeros(d), &ball).unwrap();
        let id = DMatrix::<f64>::identity(d, d);
        assert!(mean.amax() <= 1e-12);
        assert!((&second - &id / (d as f64 + 2.0)).amax() <= 1e-9);
        let spec = ExplorationSpec::for_domain(&ball, d).unwrap();
        let full = mixture_moment(&second, &spec, 1.0).unwrap();
        assert!((full - &id / d as f64).amax() <= 1e-12);
        let half = mixture_moment(&second, &spec, 0.5).unwrap();
        let expected = &id * (0.5 / (d as f64 + 2.0) + 0.5 / d as f64);
        assert!((half - expected).amax() <= 1e-9);
    }
}

#[test]
fn chain_mean_vanishes_at_zero_theta() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let d = 3;
    for domain in [ConvexDomain::ball(1.0).unwrap(), ConvexDomain::centered_box(d, 1.0).unwrap()] {
        let mut posterior = BanditPosterior::new(d, domain, SamplerConfig::default()).unwrap();
        let n = 20_000;
        let mut mean = DVector::zeros(d);
        for _ in 0..n {
            mean += posterior.sample_posterior(&mut rng);
        }
        mean /= n as f64;
        assert!(mean.amax() <= 0.03, "{mean:?}");
    }
}
