//! Convex action sets and the projections that keep posterior means feasible.
//!
//! Two projections are offered. The Euclidean one is what gradient descent
//! uses. The Mahalanobis one, `argmin_{w in W} (w - v)^T A (w - v)` for a
//! positive-definite `A`, is the mean projection of a Gaussian posterior with
//! precision `A`; for isotropic `A` it coincides with the Euclidean one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, invalid, EwError, Result};

/// Convergence tolerance of the iterative projections.
const PROJECTION_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 200_000;

/// The action set `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexDomain {
    /// All of `R^d`; projections are the identity.
    AllSpace,
    /// The centered L2 ball `{w : ||w||_2 <= radius}`.
    Ball { radius: f64 },
    /// The box `lower <= w <= upper`, coordinatewise.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// The probability simplex.
    Simplex,
    /// A one-dimensional interval `[lower, upper]`.
    Interval { lower: f64, upper: f64 },
}

impl ConvexDomain {
    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("{radius} is not a positive finite number")));
        }
        Ok(Self::Ball { radius })
    }

    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(invalid("box", "every lower bound must not exceed its upper bound"));
        }
        Ok(Self::Box { lower, upper })
    }

    /// The box `[-half_width, half_width]^d`.
    pub fn centered_box(dim: usize, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(invalid("half_width", "must be positive"));
        }
        Self::boxed(
            DVector::from_element(dim, -half_width),
            DVector::from_element(dim, half_width),
        )
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(invalid("interval", format!("[{lower}, {upper}] is empty")));
        }
        Ok(Self::Interval { lower, upper })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AllSpace => "all-space",
            Self::Ball { .. } => "ball",
            Self::Box { .. } => "box",
            Self::Simplex => "simplex",
            Self::Interval { .. } => "interval",
        }
    }

    fn check_point_dim(&self, d: usize) -> Result<()> {
        match self {
            Self::Box { lower, .. } => check_dim(lower.len(), d),
            Self::Interval { .. } => check_dim(1, d),
            _ => Ok(()),
        }
    }

    /// Whether `w` lies in the domain up to an absolute slack `tol`.
    pub fn contains(&self, w: &DVector<f64>, tol: f64) -> bool {
        match self {
            Self::AllSpace => true,
            Self::Ball { radius } => w.norm() <= radius + tol,
            Self::Box { lower, upper } => {
                w.len() == lower.len()
                    && w.iter()
                        .zip(lower.iter().zip(upper.iter()))
                        .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
            }
            Self::Simplex => {
                w.iter().all(|x| *x >= -tol) && (w.sum() - 1.0).abs() <= tol.max(1e-12)
            }
            Self::Interval { lower, upper } => {
                w.len() == 1 && w[0] >= lower - tol && w[0] <= upper + tol
            }
        }
    }

    /// Euclidean projection `argmin_{w in W} ||w - v||_2`.
    pub fn project_euclidean(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point_dim(v.len())?;
        Ok(match self {
            Self::AllSpace => v.clone(),
            Self::Ball { radius } => {
                let norm = v.norm();
                if norm <= *radius {
                    v.clone()
                } else {
                    v * (*radius / norm)
                }
            }
            Self::Box { lower, upper } => clamp_box(v, lower, upper),
            Self::Simplex => project_simplex(v),
            Self::Interval { lower, upper } => DVector::from_element(1, v[0].clamp(*lower, *upper)),
        })
    }

    /// Mahalanobis projection `argmin_{w in W} (w - v)^T A (w - v)` for
    /// positive-definite `precision = A`.
    pub fn project_mahalanobis(
        &self,
        v: &DVector<f64>,
        precision: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        let d = v.len();
        self.check_point_dim(d)?;
        check_dim(d, precision.nrows())?;
        check_dim(d, precision.ncols())?;
        if matches!(self, Self::AllSpace) || self.contains(v, 0.0) {
            return Ok(v.clone());
        }
        if is_isotropic(precision) {
            return self.project_euclidean(v);
        }
        match self {
            Self::AllSpace => unreachable!(),
            Self::Ball { radius } => project_ball_mahalanobis(v, precision, *radius),
            Self::Box { lower, upper } => project_box_mahalanobis(v, precision, lower, upper),
            Self::Interval { lower, upper } => Ok(DVector::from_element(1, v[0].clamp(*lower, *upper))),
            Self::Simplex => project_simplex_mahalanobis(v, precision),
        }
    }
}

/// True when `a` is a positive multiple of the identity.
pub(crate) fn is_isotropic(a: &DMatrix<f64>) -> bool {
    let s = a[(0, 0)];
    a.iter().enumerate().all(|(k, x)| {
        let (i, j) = (k % a.nrows(), k / a.nrows());
        if i == j {
            *x == s
        } else {
            *x == 0.0
        }
    })
}

fn clamp_box(v: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        v.iter()
            .zip(lower.iter().zip(upper.iter()))
            .map(|(x, (l, u))| x.clamp(*l, *u)),
    )
}

/// Sort-based Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, x) in sorted.iter().enumerate() {
        cumsum += x;
        let candidate = (cumsum - 1.0) / (k as f64 + 1.0);
        if x - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.map(|x| (x - tau).max(0.0))
}

/// Solves `(A + lambda I) w = A v` with `lambda` bisected until `||w|| = radius`.
fn project_ball_mahalanobis(v: &DVector<f64>, a: &DMatrix<f64>, radius: f64) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|l| *l <= 0.0) {
        return Err(EwError::NotPositiveDefinite);
    }
    let coords = eig.eigenvectors.transpose() * v;
    let norm_at = |lambda: f64| -> f64 {
        eig.eigenvalues
            .iter()
            .zip(coords.iter())
            .map(|(l, c)| {
                let x = l * c / (l + lambda);
                x * x
            })
            .sum::<f64>()
            .sqrt()
    };
    let max_eig = eig.eigenvalues.max();
    let mut lo = 0.0_f64;
    let mut hi = max_eig * v.norm() / radius;
    // hi is feasible by construction: every scaled coordinate shrinks below radius.
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scaled = DVector::from_iterator(
        coords.len(),
        eig.eigenvalues
            .iter()
            .zip(coords.iter())
            .map(|(l, c)| l * c / (l + hi)),
    );
    let w = &eig.eigenvectors * scaled;
    if (w.norm() - radius).abs() > 1e-10 * radius.max(1.0) {
        return Err(EwError::NoConvergence("ball projection bisection"));
    }
    Ok(w)
}

/// Projected coordinate descent on the box-constrained quadratic.
fn project_box_mahalanobis(
    v: &DVector<f64>,
    a: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = v.len();
    if (0..d).any(|i| a[(i, i)] <= 0.0) {
        return Err(EwError::NotPositiveDefinite);
    }
    let mut w = clamp_box(v, lower, upper);
    let scale = v.amax().max(1.0);
    for _ in 0..MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for i in 0..d {
            let mut off = 0.0;
            for j in 0..d {
                if j != i {
                    off += a[(i, j)] * (w[j] - v[j]);
                }
            }
            let next = (v[i] - off / a[(i, i)]).clamp(lower[i], upper[i]);
            max_change = max_change.max((next - w[i]).abs());
            w[i] = next;
        }
        if max_change <= PROJECTION_TOL * scale {
            return Ok(w);
        }
    }
    Err(EwError::NoConvergence("box projection fixed point"))
}

/// Accelerated projected gradient on the simplex-constrained quadratic.
fn project_simplex_mahalanobis(v: &DVector<f64>, a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let lipschitz = eig.eigenvalues.max();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(EwError::NotPositiveDefinite);
    }
    let mut w = project_simplex(v);
    let mut y = w.clone();
    let mut momentum = 1.0_f64;
    for _ in 0..MAX_SWEEPS {
        let grad = a * (&y - v);
        let next = project_simplex(&(&y - grad / lipschitz));
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + (&next - &w) * ((momentum - 1.0) / next_momentum);
        let change = (&next - &w).amax();
        w = next;
        momentum = next_momentum;
        if change <= PROJECTION_TOL {
            return Ok(w);
        }
    }
    Err(EwError::NoConvergence("simplex projection"))
}
