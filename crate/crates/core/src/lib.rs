//! Continuous exponential weights over exponential-family posteriors.
//!
//! The crate is organized bottom-up:
//!
//! - [`domain`]: convex action sets and (Mahalanobis) projections onto them.
//! - [`expfam`] and [`bregman`]: the posterior families, their divergences and
//!   the cumulant/conjugate pairs behind mirror descent.
//! - [`loss`]: per-round surrogate losses.
//! - [`ew`]: the lazy and greedy exponential-weights engine, learning-rate
//!   schedules, mixability gaps and the regret ledger.
//! - [`surrogates`]: gradient descent, EG±, mirror descent and the
//!   quadratic-surrogate recursion, implemented directly so they can be
//!   checked against the engine.
//! - [`experts`]: KT, iProd, Squint and coin betting.
//! - [`bandit`]: sampling-based exponential weights with bandit feedback.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod bregman;
pub mod domain;
pub mod error;
pub mod ew;
pub mod experts;
pub mod expfam;
pub mod loss;
pub mod surrogates;

pub use domain::ConvexDomain;
pub use error::{EwError, Result};
pub use ew::{Flavor, Learner, RegretLedger, Schedule};
pub use expfam::{BetaState, BetaSupport, DiscreteAtoms, ExpFamilyPosterior, GaussianState, PoissonProductState};
pub use loss::{Curvature, QuadraticSurrogate, SurrogateLoss};
