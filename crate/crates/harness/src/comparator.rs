//! Best fixed actions in hindsight.
//!
//! Linear, quadratic and log losses have exact minimizers. For the
//! log-linear loss the minimizer is computed iteratively and the reported
//! value is a certified lower bound on the minimum (Frank-Wolfe gap), so a
//! regret computed against it never understates the true regret.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::config::DomainKind;

/// `min <u, s>` over the ball or centered box, with a minimizer.
pub fn linear_min(domain: DomainKind, radius: f64, s: &DVector<f64>) -> (f64, DVector<f64>) {
    match domain {
        DomainKind::Ball => {
            let n = s.norm();
            let u = if n > 0.0 { s * (-radius / n) } else { DVector::zeros(s.len()) };
            (-radius * n, u)
        }
        DomainKind::Box => {
            let u = s.map(|x| if x > 0.0 { -radius } else if x < 0.0 { radius } else { 0.0 });
            (-radius * s.lp_norm(1), u)
        }
    }
}

/// `min <u, s>` over the l1 ball of radius `scale`.
pub fn l1_linear_min(scale: f64, s: &DVector<f64>) -> f64 {
    -scale * s.amax()
}

/// `min_u sum_s log_loss(x_s, u)` for `ones` ones in `t` binary outcomes,
/// attained at the empirical frequency.
pub fn log_loss_min(ones: usize, t: usize) -> f64 {
    let term = |k: usize| if k == 0 { 0.0 } else { -(k as f64) * (k as f64 / t as f64).ln() };
    term(ones) + term(t - ones)
}

/// Euclidean projection onto the ball or centered box.
pub fn project(domain: DomainKind, radius: f64, v: &DVector<f64>) -> DVector<f64> {
    match domain {
        DomainKind::Ball => {
            let n = v.norm();
            if n > radius {
                v * (radius / n)
            } else {
                v.clone()
            }
        }
        DomainKind::Box => v.map(|x| x.clamp(-radius, radius)),
    }
}

/// Minimizer of `1/2 v^T A v - <b, v>` over `|v| <= radius`, for PSD `A`.
pub fn ball_qp(a: &DMatrix<f64>, b: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = b.len();
    if b.norm() == 0.0 {
        return DVector::zeros(d);
    }
    let eig = SymmetricEigen::new(a.clone());
    let c = eig.eigenvectors.transpose() * b;
    let lam = eig.eigenvalues.map(|l| l.max(0.0));
    let floor = 1e-12 * lam.amax().max(1.0);
    let solve = |mu: f64| -> DVector<f64> {
        let coef = DVector::from_fn(d, |i, _| {
            let denom = lam[i] + mu;
            if denom > floor {
                c[i] / denom
            } else {
                0.0
            }
        });
        &eig.eigenvectors * coef
    };
    // interior solution (pseudo-inverse when a flat direction carries no slope)
    let flat_slope = (0..d).any(|i| lam[i] <= floor && c[i].abs() > 1e-12 * b.norm());
    if !flat_slope {
        let v = solve(0.0);
        if v.norm() <= radius {
            return v;
        }
    }
    // |v(mu)| decreases in mu and is at most |b| / mu
    let (mut lo, mut hi) = (0.0, b.norm() / radius);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if solve(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = solve(hi);
    let n = v.norm();
    if n > radius {
        v * (radius / n)
    } else {
        v
    }
}

/// Running minimizer of `sum_s -ln(1 + <u, x_s>)` over a ball.
#[derive(Debug, Clone)]
pub struct LogLinearComparator {
    radius: f64,
    xs: Vec<DVector<f64>>,
    point: DVector<f64>,
}

impl LogLinearComparator {
    pub fn new(dim: usize, radius: f64) -> Self {
        Self {
            radius,
            xs: Vec::new(),
            point: DVector::zeros(dim),
        }
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.point
    }

    pub fn value_at(&self, u: &DVector<f64>) -> f64 {
        self.xs.iter().map(|x| -(1.0 + x.dot(u)).ln()).sum()
    }

    fn derivatives(&self, u: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = u.len();
        let (mut f, mut g, mut h) = (0.0, DVector::zeros(d), DMatrix::zeros(d, d));
        for x in &self.xs {
            let m = 1.0 + x.dot(u);
            f -= m.ln();
            g -= x / m;
            h.syger(1.0 / (m * m), x, x, 1.0);
        }
        h.fill_upper_triangle_with_lower_triangle();
        (f, g, h)
    }

    /// Adds `x` and returns a lower bound on the new minimum.
    pub fn push(&mut self, x: DVector<f64>) -> f64 {
        self.xs.push(x);
        let mut u = self.point.clone();
        let mut lower = f64::NEG_INFINITY;
        for _ in 0..60 {
            let (f, g, h) = self.derivatives(&u);
            let gap = g.dot(&u) + self.radius * g.norm();
            lower = lower.max(f - gap);
            if gap <= 1e-12 * (1.0 + f.abs()) {
                break;
            }
            // Newton model restricted to the ball, then backtracking
            let target = ball_qp(&h, &(&h * &u - &g), self.radius);
            let step = &target - &u;
            let slope = g.dot(&step);
            let mut s = 1.0;
            let mut moved = false;
            while s > 1e-12 {
                let cand = &u + &step * s;
                if self.value_at(&cand) <= f + 1e-4 * s * slope {
                    u = cand;
                    moved = true;
                    break;
                }
                s *= 0.5;
            }
            if !moved {
                break;
            }
        }
        self.point = u;
        lower
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn linear_minima() {
        let s = dv(&[3.0, -4.0]);
        let (v, u) = linear_min(DomainKind::Ball, 2.0, &s);
        assert!((v + 10.0).abs() < 1e-12);
        assert!((u.dot(&s) - v).abs() < 1e-12);
        let (v, u) = linear_min(DomainKind::Box, 0.5, &s);
        assert!((v + 3.5).abs() < 1e-12);
        assert_eq!(u, dv(&[-0.5, 0.5]));
        assert_eq!(l1_linear_min(2.0, &s), -8.0);
    }

    #[test]
    fn log_loss_minimum_is_entropy() {
        assert_eq!(log_loss_min(0, 5), 0.0);
        assert!((log_loss_min(1, 2) - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ball_qp_beats_random_feasible_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for case in 0..50 {
            let d = 3;
            let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let mut a = &m * m.transpose();
            if case % 3 == 0 {
                // singular curvature
                a = m.column(0) * m.column(0).transpose();
            }
            let b = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let r = rng.random_range(0.2..2.0);
            let v = ball_qp(&a, &b, r);
            assert!(v.norm() <= r * (1.0 + 1e-12));
            let q = |z: &DVector<f64>| 0.5 * z.dot(&(&a * z)) - b.dot(z);
            for _ in 0..2000 {
                let z = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let z = project(DomainKind::Ball, r, &(z * r));
                assert!(q(&z) >= q(&v) - 1e-9);
            }
        }
    }

    #[test]
    fn log_linear_lower_bound_is_tight() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut c = LogLinearComparator::new(3, 1.0);
        let bias = dv(&[0.3, -0.1, 0.2]);
        for _ in 0..300 {
            let x = &bias + DVector::from_fn(3, |_, _| rng.random_range(-0.15..0.15));
            let lower = c.push(x);
            let at = c.value_at(c.point());
            assert!(lower <= at + 1e-12 && at - lower <= 1e-8 * (1.0 + at.abs()), "{lower} {at}");
            for _ in 0..20 {
                let z = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
                let z = project(DomainKind::Ball, 1.0, &z);
                assert!(c.value_at(&z) >= lower - 1e-12);
            }
        }
    }
}
