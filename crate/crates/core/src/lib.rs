//! Numerical laboratory for sieve priors in the Gaussian sequence model.
//!
//! The prior draws a model dimension `k` from a Poisson conditioned to
//! `k >= 1`, then independent Gaussian coordinates with polynomially
//! decaying scales on the first `k` coordinates and point masses at zero
//! beyond. In the white-noise / sequence model this prior is conjugate, so
//! the posterior over `(k, theta)` is available in closed form. The crate
//! computes that posterior exactly, runs Monte Carlo risk and contraction
//! experiments over `(beta, n)` grids, fits log-log rate exponents, and
//! audits the numeric conditions the theory rests on.

pub mod audit;
pub mod error;
pub mod model;
pub mod posterior;
pub mod prior;
pub mod regression;
pub mod risk;
pub mod rng;

pub use audit::AuditConfig;
pub use error::{Error, Result};
pub use model::{
    make_polylog_truth, make_random_sobolev_truth, simulate_sequence, BasisKind, BasisWeights,
    SequenceObservation, SobolevSpec, TruthVector,
};
pub use posterior::{compute_posterior, PosteriorSample, PosteriorSummary};
pub use prior::SievePriorConfig;
pub use risk::{ExperimentGrid, RateFit, RiskEstimate, TruthKind};
