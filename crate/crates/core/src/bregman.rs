//! Cumulant / conjugate pairs `(F, F*)` and their Bregman divergences.
//!
//! Mirror descent with regularizer `F*` predicts with the means of
//! exponential weights over the family whose cumulant is `F`. Two carriers
//! are provided constructively: the Gaussian (squared Euclidean regularizer)
//! and the Poisson product (unnormalized relative entropy).

use std::fmt;

use nalgebra::DVector;

use crate::domain::ConvexDomain;
use crate::error::{check_dim, invalid, EwError, Result};
use crate::expfam::project_relative_entropy;

/// A Legendre pair `F`, `F*` with explicit gradient maps.
///
/// `mean_map` is `grad F` (natural to mean), `natural_map` is `grad F*`
/// (mean to natural).
pub trait BregmanPair {
    fn name(&self) -> &'static str;

    fn cumulant(&self, theta: &DVector<f64>) -> f64;

    fn conjugate(&self, mu: &DVector<f64>) -> Result<f64>;

    fn mean_map(&self, theta: &DVector<f64>) -> DVector<f64>;

    fn natural_map(&self, mu: &DVector<f64>) -> Result<DVector<f64>>;

    /// `B_F(a || b)`.
    fn bregman_cumulant(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        check_dim(a.len(), b.len())?;
        Ok(self.cumulant(a) - self.cumulant(b) - self.mean_map(b).dot(&(a - b)))
    }

    /// `B_{F*}(x || y)`.
    fn bregman_conjugate(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(self.conjugate(x)? - self.conjugate(y)? - self.natural_map(y)?.dot(&(x - y)))
    }

    /// `argmin_{w in domain} B_{F*}(w || v)`.
    fn project(&self, v: &DVector<f64>, domain: &ConvexDomain) -> Result<DVector<f64>> {
        if matches!(domain, ConvexDomain::AllSpace) || domain.contains(v, 0.0) {
            Ok(v.clone())
        } else {
            Err(EwError::UnsupportedProjection {
                family: self.name(),
                domain: domain.name(),
            })
        }
    }
}

/// `F(theta) = sigma^2 |theta|^2 / 2`, `F*(mu) = |mu|^2 / (2 sigma^2)`: the
/// cumulant of `N(theta sigma^2, sigma^2 I)` in its mean-shift family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCarrier {
    variance: f64,
}

impl GaussianCarrier {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid("variance", format!("{variance} must be positive")));
        }
        Ok(Self { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

impl BregmanPair for GaussianCarrier {
    fn name(&self) -> &'static str {
        "Gaussian"
    }

    fn cumulant(&self, theta: &DVector<f64>) -> f64 {
        0.5 * self.variance * theta.norm_squared()
    }

    fn conjugate(&self, mu: &DVector<f64>) -> Result<f64> {
        Ok(mu.norm_squared() / (2.0 * self.variance))
    }

    fn mean_map(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta * self.variance
    }

    fn natural_map(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(mu / self.variance)
    }

    fn project(&self, v: &DVector<f64>, domain: &ConvexDomain) -> Result<DVector<f64>> {
        domain.project_euclidean(v)
    }
}

/// `F(theta) = sum exp(theta_i)`, `F*(w) = sum w_i (ln w_i - 1)`: the
/// cumulant of a product of Poisson distributions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoissonCarrier;

impl BregmanPair for PoissonCarrier {
    fn name(&self) -> &'static str {
        "Poisson"
    }

    fn cumulant(&self, theta: &DVector<f64>) -> f64 {
        theta.iter().map(|t| t.exp()).sum()
    }

    fn conjugate(&self, mu: &DVector<f64>) -> Result<f64> {
        positive(mu)?;
        Ok(mu.iter().map(|w| w * (w.ln() - 1.0)).sum())
    }

    fn mean_map(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta.map(f64::exp)
    }

    fn natural_map(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        positive(mu)?;
        Ok(mu.map(f64::ln))
    }

    fn project(&self, v: &DVector<f64>, domain: &ConvexDomain) -> Result<DVector<f64>> {
        positive(v)?;
        project_relative_entropy(v, domain)
    }
}

fn positive(mu: &DVector<f64>) -> Result<()> {
    match mu.iter().find(|w| !(**w > 0.0)) {
        Some(w) => Err(EwError::MirrorMapDomain(format!(
            "entropic mirror map needs positive entries, got {w}"
        ))),
        None => Ok(()),
    }
}

type ScalarMap = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorMap = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type FallibleVectorMap = Box<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;

/// A user-supplied Legendre pair. Both gradient maps must be given; nothing
/// is inverted numerically.
pub struct ExplicitBregman {
    name: &'static str,
    cumulant: ScalarMap,
    conjugate: ScalarMap,
    mean_map: VectorMap,
    natural_map: FallibleVectorMap,
}

impl ExplicitBregman {
    pub fn new(
        name: &'static str,
        cumulant: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        conjugate: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        mean_map: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        natural_map: impl Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name,
            cumulant: Box::new(cumulant),
            conjugate: Box::new(conjugate),
            mean_map: Box::new(mean_map),
            natural_map: Box::new(natural_map),
        }
    }
}

impl fmt::Debug for ExplicitBregman {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExplicitBregman").field("name", &self.name).finish()
    }
}

impl BregmanPair for ExplicitBregman {
    fn name(&self) -> &'static str {
        self.name
    }

    fn cumulant(&self, theta: &DVector<f64>) -> f64 {
        (self.cumulant)(theta)
    }

    fn conjugate(&self, mu: &DVector<f64>) -> Result<f64> {
        Ok((self.conjugate)(mu))
    }

    fn mean_map(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.mean_map)(theta)
    }

    fn natural_map(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        (self.natural_map)(mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::unnormalized_relative_entropy;
    use approx::assert_abs_diff_eq;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn poisson_divergence_is_unnormalized_relative_entropy() {
        let (w, u) = (dv(&[1.0, 2.0]), dv(&[2.0, 1.0]));
        let b = PoissonCarrier.bregman_conjugate(&w, &u).unwrap();
        assert_abs_diff_eq!(b, unnormalized_relative_entropy(&w, &u).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn gaussian_divergence_is_scaled_squared_distance() {
        let c = GaussianCarrier::new(0.5).unwrap();
        let (x, y) = (dv(&[1.0, -1.0]), dv(&[0.0, 1.0]));
        assert_abs_diff_eq!(c.bregman_conjugate(&x, &y).unwrap(), 5.0, epsilon = 1e-14);
    }

    #[test]
    fn entropic_map_rejects_nonpositive_points() {
        assert!(matches!(
            PoissonCarrier.natural_map(&dv(&[1.0, 0.0])),
            Err(EwError::MirrorMapDomain(_))
        ));
    }

    #[test]
    fn explicit_pair_defaults_to_checked_projection() {
        let pair = ExplicitBregman::new(
            "half-square",
            |t| 0.5 * t.norm_squared(),
            |m| 0.5 * m.norm_squared(),
            |t| t.clone(),
            |m| Ok(m.clone()),
        );
        let ball = ConvexDomain::ball(1.0).unwrap();
        assert_eq!(pair.project(&dv(&[0.5]), &ball).unwrap(), dv(&[0.5]));
        assert!(pair.project(&dv(&[2.0]), &ball).is_err());
    }
}
