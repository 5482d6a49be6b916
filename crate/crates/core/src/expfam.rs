//! Exponential-family posteriors, their divergences, and mean projection.
//!
//! Four families are supported: multivariate Gaussians, products of
//! independent Poissons, the Beta family (on `[0, 1]` or mapped to
//! `[-1, 1]`), and finite sets of weighted atoms. Every exponential-weights
//! posterior in this crate is one of these.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::domain::ConvexDomain;
use crate::error::{check_dim, invalid, EwError, Result};

/// Largest condition number accepted for a covariance matrix.
pub const MAX_CONDITION: f64 = 1e12;
const SYMMETRY_TOL: f64 = 1e-12;
const INVERSE_TOL: f64 = 1e-9;

/// A multivariate normal `N(mean, covariance)`, stored with its precision.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let covariance = validated_spd(covariance, mean.len())?;
        let precision = spd_inverse(&covariance)?;
        Self::checked(mean, covariance, precision)
    }

    pub fn from_precision(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let precision = validated_spd(precision, mean.len())?;
        let covariance = spd_inverse(&precision)?;
        Self::checked(mean, covariance, precision)
    }

    /// `N(mean, variance * I)`.
    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid("variance", format!("{variance} must be positive")));
        }
        let d = mean.len();
        if d == 0 {
            return Err(invalid("mean", "dimension must be at least 1"));
        }
        Ok(Self {
            mean,
            covariance: DMatrix::identity(d, d) * variance,
            precision: DMatrix::identity(d, d) / variance,
        })
    }

    fn checked(mean: DVector<f64>, covariance: DMatrix<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let residual = (&precision * &covariance - DMatrix::identity(d, d)).amax();
        if residual > INVERSE_TOL {
            return Err(EwError::IllConditioned(residual / f64::EPSILON));
        }
        Ok(Self {
            mean,
            covariance,
            precision,
        })
    }

    /// Same covariance, new mean.
    pub fn with_mean(&self, mean: DVector<f64>) -> Self {
        Self {
            mean,
            covariance: self.covariance.clone(),
            precision: self.precision.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det_covariance(&self) -> f64 {
        log_det_spd(&self.covariance).expect("covariance validated at construction")
    }
}

/// A product of independent Poisson distributions with rates `lambda_i`.
///
/// Natural parameter `theta = ln(lambda)`, cumulant `F(theta) = sum exp(theta_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonProductState {
    rates: DVector<f64>,
}

impl PoissonProductState {
    pub fn new(rates: DVector<f64>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(invalid("rates", "all Poisson rates must be positive and finite"));
        }
        Ok(Self { rates })
    }

    pub fn from_natural(theta: &DVector<f64>) -> Result<Self> {
        Self::new(theta.map(f64::exp))
    }

    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }

    pub fn natural(&self) -> DVector<f64> {
        self.rates.map(f64::ln)
    }

    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    /// `kl(self || other)`, computed as the cumulant Bregman divergence
    /// `B_F(theta_other || theta_self)`.
    pub fn kl(&self, other: &Self) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        let (ts, to) = (self.natural(), other.natural());
        let f = |t: &DVector<f64>| t.map(f64::exp).sum();
        Ok(f(&to) - f(&ts) - self.rates.dot(&(&to - &ts)))
    }
}

/// Where a Beta variate lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaSupport {
    /// The usual `[0, 1]`.
    Unit,
    /// `[-1, 1]` through `eta = 2x - 1`, so that `(1 + eta) / 2 ~ Beta(a, b)`.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaState {
    a: f64,
    b: f64,
    support: BetaSupport,
}

impl BetaState {
    pub fn new(a: f64, b: f64, support: BetaSupport) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(invalid("beta shape", format!("a = {a}, b = {b} must be positive")));
        }
        Ok(Self { a, b, support })
    }

    pub fn shape(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn support(&self) -> BetaSupport {
        self.support
    }

    /// Mean of the underlying `[0, 1]` variate.
    pub fn unit_mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn mean(&self) -> f64 {
        match self.support {
            BetaSupport::Unit => self.unit_mean(),
            BetaSupport::Symmetric => 2.0 * self.unit_mean() - 1.0,
        }
    }

    pub(crate) fn unit_point(&self, w: f64) -> f64 {
        match self.support {
            BetaSupport::Unit => w,
            BetaSupport::Symmetric => 0.5 * (1.0 + w),
        }
    }

    pub(crate) fn support_point(&self, x: f64) -> f64 {
        match self.support {
            BetaSupport::Unit => x,
            BetaSupport::Symmetric => 2.0 * x - 1.0,
        }
    }
}

/// A discrete distribution on finitely many distinct atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteAtoms {
    atoms: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl DiscreteAtoms {
    /// Builds the distribution, renormalizing `weights`.
    pub fn new(atoms: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        check_dim(atoms.len(), weights.len())?;
        let Some(first) = atoms.first() else {
            return Err(invalid("atoms", "at least one atom is required"));
        };
        let d = first.len();
        for atom in &atoms {
            check_dim(d, atom.len())?;
        }
        for (i, a) in atoms.iter().enumerate() {
            if atoms[..i].iter().any(|b| b == a) {
                return Err(invalid("atoms", "atoms must be distinct"));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights", "weights must be nonnegative and finite"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(EwError::ZeroWeights);
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { atoms, weights })
    }

    /// Uniform weights on `{scale * e_i}` and, when `with_negations`, on
    /// `{-scale * e_i}` as well (ordered `+e_1..+e_d, -e_1..-e_d`).
    pub fn signed_basis(dim: usize, scale: f64, with_negations: bool) -> Result<Self> {
        let mut atoms = Vec::new();
        let signs: &[f64] = if with_negations { &[1.0, -1.0] } else { &[1.0] };
        for sign in signs {
            for i in 0..dim {
                let mut e = DVector::zeros(dim);
                e[i] = sign * scale;
                atoms.push(e);
            }
        }
        let n = atoms.len();
        Self::new(atoms, vec![1.0; n])
    }

    pub fn atoms(&self) -> &[DVector<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.dim());
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            mean.axpy(*w, a, 1.0);
        }
        mean
    }

    /// Reweights by `exp(log_factors)` and renormalizes, in log space.
    pub(crate) fn tilted(&self, log_factors: &[f64]) -> Result<Self> {
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(log_factors)
            .map(|(w, f)| w.ln() + f)
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(EwError::ZeroWeights);
        }
        let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        Ok(Self {
            atoms: self.atoms.clone(),
            weights: unnorm.into_iter().map(|w| w / total).collect(),
        })
    }
}

/// A posterior from one of the supported families.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpFamilyPosterior {
    Gaussian(GaussianState),
    Poisson(PoissonProductState),
    Beta(BetaState),
    Discrete(DiscreteAtoms),
}

impl ExpFamilyPosterior {
    pub fn family(&self) -> &'static str {
        match self {
            Self::Gaussian(_) => "Gaussian",
            Self::Poisson(_) => "Poisson",
            Self::Beta(_) => "Beta",
            Self::Discrete(_) => "discrete",
        }
    }

    /// The mean parameter `E[w]`.
    pub fn mean(&self) -> DVector<f64> {
        match self {
            Self::Gaussian(g) => g.mean().clone(),
            Self::Poisson(p) => p.rates().clone(),
            Self::Beta(b) => DVector::from_element(1, b.mean()),
            Self::Discrete(a) => a.mean(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Poisson(p) => p.dim(),
            Self::Beta(_) => 1,
            Self::Discrete(a) => a.dim(),
        }
    }
}

/// `kl(q || p)` between two Gaussians.
pub fn kl_gaussian(q: &GaussianState, p: &GaussianState) -> Result<f64> {
    let d = q.dim();
    check_dim(d, p.dim())?;
    let diff = q.mean() - p.mean();
    let trace = (p.precision() * q.covariance()).trace();
    let maha = diff.dot(&(p.precision() * &diff));
    let log_det_ratio = p.log_det_covariance() - q.log_det_covariance();
    Ok(0.5 * (log_det_ratio + trace + maha - d as f64))
}

/// Kullback-Leibler divergence between Bernoulli(x) and Bernoulli(y), with
/// `0 ln 0 = 0`. Returns `f64::INFINITY` when `y` is 0 or 1 and `x != y`.
pub fn kl_bernoulli(x: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid("x", format!("{x} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&y) {
        return Err(invalid("y", format!("{y} outside [0, 1]")));
    }
    let term = |p: f64, q: f64| -> f64 {
        if p == 0.0 {
            0.0
        } else if q == 0.0 {
            f64::INFINITY
        } else {
            p * (p / q).ln()
        }
    };
    Ok(term(x, y) + term(1.0 - x, 1.0 - y))
}

/// `sum_i (w_i ln(w_i / u_i) - w_i + u_i)` for positive vectors.
pub fn unnormalized_relative_entropy(w: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
    check_dim(w.len(), u.len())?;
    if w.iter().chain(u.iter()).any(|x| !(*x > 0.0)) {
        return Err(invalid("entries", "unnormalized relative entropy needs positive entries"));
    }
    Ok(w
        .iter()
        .zip(u.iter())
        .map(|(wi, ui)| wi * (wi / ui).ln() - wi + ui)
        .sum())
}

/// Replaces the mean of `state` by its projection onto `domain`.
///
/// Gaussians keep their covariance and take the Mahalanobis projection under
/// their own precision. Poisson products take the Bregman projection of the
/// unnormalized relative entropy. A Beta mean is clipped to the interval and
/// the shapes are refit at fixed concentration `a + b`; only the projected
/// mean is meaningful. Discrete posteriors are only accepted when their mean is
/// already feasible.
pub fn project_mean(state: &ExpFamilyPosterior, domain: &ConvexDomain) -> Result<ExpFamilyPosterior> {
    match state {
        ExpFamilyPosterior::Gaussian(g) => {
            let mean = domain.project_mahalanobis(g.mean(), g.precision())?;
            Ok(ExpFamilyPosterior::Gaussian(g.with_mean(mean)))
        }
        ExpFamilyPosterior::Poisson(p) => {
            let rates = project_relative_entropy(p.rates(), domain)?;
            Ok(ExpFamilyPosterior::Poisson(PoissonProductState::new(rates)?))
        }
        ExpFamilyPosterior::Beta(b) => {
            let (lower, upper) = match domain {
                ConvexDomain::AllSpace => return Ok(state.clone()),
                ConvexDomain::Interval { lower, upper } => (*lower, *upper),
                ConvexDomain::Box { lower, upper } if lower.len() == 1 => (lower[0], upper[0]),
                other => {
                    return Err(EwError::UnsupportedProjection {
                        family: "Beta",
                        domain: other.name(),
                    })
                }
            };
            let mean = b.mean();
            let clipped = mean.clamp(lower, upper);
            if clipped == mean {
                return Ok(state.clone());
            }
            let unit = b.unit_point(clipped);
            let total = b.a + b.b;
            Ok(ExpFamilyPosterior::Beta(BetaState::new(
                total * unit,
                total * (1.0 - unit),
                b.support,
            )?))
        }
        ExpFamilyPosterior::Discrete(a) => {
            if domain.contains(&a.mean(), 1e-12) {
                Ok(state.clone())
            } else {
                Err(EwError::UnsupportedProjection {
                    family: "discrete",
                    domain: domain.name(),
                })
            }
        }
    }
}

/// Bregman projection of positive rates under the unnormalized relative
/// entropy. The divergence is separable, so boxes clamp and the simplex
/// normalizes.
pub(crate) fn project_relative_entropy(
    rates: &DVector<f64>,
    domain: &ConvexDomain,
) -> Result<DVector<f64>> {
    match domain {
        ConvexDomain::AllSpace => Ok(rates.clone()),
        ConvexDomain::Simplex => Ok(rates / rates.sum()),
        ConvexDomain::Box { lower, upper } => {
            check_dim(lower.len(), rates.len())?;
            if lower.iter().zip(upper.iter()).any(|(_, u)| *u <= 0.0) {
                return Err(invalid("box", "needs a positive upper bound for positive rates"));
            }
            Ok(DVector::from_iterator(
                rates.len(),
                rates
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(r, (l, u))| r.clamp(*l, *u)),
            ))
        }
        ConvexDomain::Interval { lower, upper } => {
            check_dim(1, rates.len())?;
            if *upper <= 0.0 {
                return Err(invalid("interval", "needs a positive upper bound for positive rates"));
            }
            Ok(DVector::from_element(1, rates[0].clamp(*lower, *upper)))
        }
        ConvexDomain::Ball { .. } if domain.contains(rates, 0.0) => Ok(rates.clone()),
        ConvexDomain::Ball { .. } => Err(EwError::UnsupportedProjection {
            family: "Poisson",
            domain: "ball",
        }),
    }
}

fn validated_spd(m: DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    check_dim(d, m.nrows())?;
    check_dim(d, m.ncols())?;
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(EwError::NotSymmetric(asym));
    }
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m.clone());
    let (min, max) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(min > 0.0) {
        return Err(EwError::NotPositiveDefinite);
    }
    if max / min > MAX_CONDITION {
        return Err(EwError::IllConditioned(max / min));
    }
    Ok(m)
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(m.clone()).ok_or(EwError::NotPositiveDefinite)?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(m.clone()).ok_or(EwError::NotPositiveDefinite)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn kl_gaussian_closed_form_examples() {
        let q = GaussianState::isotropic(dv(&[1.0, 0.0]), 1.0).unwrap();
        let p = GaussianState::isotropic(dv(&[0.0, 0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(kl_gaussian(&q, &p).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);

        let q = GaussianState::isotropic(dv(&[0.0, 0.0]), 2.0).unwrap();
        let expected = 0.5 * (-(4.0_f64).ln() + 4.0 - 2.0);
        assert_abs_diff_eq!(kl_gaussian(&q, &p).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 0.3069, epsilon = 1e-4);
    }

    #[test]
    fn kl_gaussian_isotropic_reduces_to_scaled_distance() {
        let sigma2 = 0.7;
        let q = GaussianState::isotropic(dv(&[1.0, -2.0, 0.5]), sigma2).unwrap();
        let p = GaussianState::isotropic(dv(&[0.2, 0.1, -0.3]), sigma2).unwrap();
        let dist2 = (q.mean() - p.mean()).norm_squared();
        assert_abs_diff_eq!(kl_gaussian(&q, &p).unwrap(), dist2 / (2.0 * sigma2), epsilon = 1e-13);
    }

    #[test]
    fn kl_gaussian_dimension_mismatch() {
        let q = GaussianState::isotropic(dv(&[1.0]), 1.0).unwrap();
        let p = GaussianState::isotropic(dv(&[0.0, 0.0]), 1.0).unwrap();
        assert!(matches!(kl_gaussian(&q, &p), Err(EwError::DimensionMismatch { .. })));
    }

    #[test]
    fn degenerate_and_asymmetric_covariances_are_rejected() {
        let m = DMatrix::from_diagonal(&dv(&[1.0, 1e-13]));
        assert!(matches!(
            GaussianState::new(dv(&[0.0, 0.0]), m),
            Err(EwError::IllConditioned(_))
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            GaussianState::new(dv(&[0.0, 0.0]), m),
            Err(EwError::NotSymmetric(_))
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianState::new(dv(&[0.0, 0.0]), m),
            Err(EwError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn kl_bernoulli_examples() {
        assert_eq!(kl_bernoulli(0.3, 0.3).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_bernoulli(1.0, 0.5).unwrap(), 2.0_f64.ln(), epsilon = 1e-15);
        let v = kl_bernoulli(0.75, 0.5).unwrap();
        assert_abs_diff_eq!(v, 0.1308, epsilon = 1e-4);
        assert!(v >= 0.125);
        assert_eq!(kl_bernoulli(0.5, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(kl_bernoulli(0.0, 0.0).unwrap(), 0.0);
        assert!(kl_bernoulli(1.5, 0.5).is_err());
    }

    #[test]
    fn unnormalized_relative_entropy_examples() {
        let w = dv(&[0.4, 2.0]);
        assert_eq!(unnormalized_relative_entropy(&w, &w).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(
            unnormalized_relative_entropy(&dv(&[e]), &dv(&[1.0])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            unnormalized_relative_entropy(&dv(&[1.0, 2.0]), &dv(&[2.0, 1.0])).unwrap(),
            2.0_f64.ln(),
            epsilon = 1e-15
        );
        assert!(unnormalized_relative_entropy(&dv(&[0.0]), &dv(&[1.0])).is_err());
    }

    #[test]
    fn gaussian_projection_keeps_covariance() {
        let cov = DMatrix::from_diagonal(&dv(&[1.0, 4.0]));
        let g = GaussianState::new(dv(&[2.0, 0.0]), cov.clone()).unwrap();
        let ball = ConvexDomain::ball(1.0).unwrap();
        let ExpFamilyPosterior::Gaussian(p) =
            project_mean(&ExpFamilyPosterior::Gaussian(g), &ball).unwrap()
        else {
            panic!("family changed");
        };
        assert_abs_diff_eq!(p.mean()[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p.mean()[1], 0.0, epsilon = 1e-12);
        assert_eq!(p.covariance(), &cov);
    }

    #[test]
    fn beta_projection_clips_mean_at_zero() {
        let b = BetaState::new(1.0, 3.0, BetaSupport::Symmetric).unwrap();
        assert!(b.mean() < 0.0);
        let dom = ConvexDomain::interval(0.0, 1.0).unwrap();
        let projected = project_mean(&ExpFamilyPosterior::Beta(b), &dom).unwrap();
        assert_abs_diff_eq!(projected.mean()[0], 0.0, epsilon = 1e-15);
        let b = BetaState::new(3.0, 1.0, BetaSupport::Symmetric).unwrap();
        let same = project_mean(&ExpFamilyPosterior::Beta(b), &dom).unwrap();
        assert_eq!(same, ExpFamilyPosterior::Beta(b));
    }

    #[test]
    fn discrete_atoms_validation_and_mean() {
        let atoms = vec![dv(&[1.0, 0.0]), dv(&[0.0, 1.0])];
        let d = DiscreteAtoms::new(atoms.clone(), vec![0.2, 0.8]).unwrap();
        assert_abs_diff_eq!(d.mean(), dv(&[0.2, 0.8]), epsilon = 1e-15);
        assert!(DiscreteAtoms::new(vec![atoms[0].clone(), atoms[0].clone()], vec![1.0, 1.0]).is_err());
        assert!(matches!(
            DiscreteAtoms::new(atoms, vec![0.0, 0.0]),
            Err(EwError::ZeroWeights)
        ));
    }

    #[test]
    fn poisson_projection_onto_simplex_normalizes() {
        let p = PoissonProductState::new(dv(&[1.0, 3.0])).unwrap();
        let proj = project_mean(&ExpFamilyPosterior::Poisson(p), &ConvexDomain::Simplex).unwrap();
        assert_abs_diff_eq!(proj.mean(), dv(&[0.25, 0.75]), epsilon = 1e-15);
    }
}
