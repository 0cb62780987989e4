//! Bayesian state estimation for Gaussian-mixture state-space models.
//!
//! The centerpiece is a Gaussian mixture filter whose measurement and time
//! updates are exact for models with mixture priors, mixture process noise,
//! and mixture measurement noise. The exponential growth in component count
//! is held down by greedy Kullback-Leibler mixture reduction after both
//! updates, and every covariance in the pipeline is propagated as an
//! upper-triangular square-root factor via QR factorizations.
//!
//! Alongside the filter there are reference estimators (a Kalman filter and
//! a bootstrap particle filter), a covariance-form twin of the whole
//! recursion used as a numerical oracle, model wrappers for nonlinear
//! systems (per-component affine linearization and component splitting), and
//! an experiment harness with four builtin studies. Each major capability
//! has a runnable program under `examples/`; the `gmmf` binary exposes the
//! harness as `run` / `reduce` / `metrics` subcommands.

pub mod baselines;
pub mod error;
pub mod filter;
pub mod harness;
pub mod linalg;
pub mod mixture;
pub mod model;
pub mod reduction;

pub use error::{Error, Result};
pub use filter::{run_filter, run_filter_naive, FilterConfig, FilterTrace, SplitSites};
pub use linalg::{half_logdet_from_factor, qr_r_factor, solve_upper_transposed, UpperTriangular};
pub use mixture::{GaussianComponent, GaussianMixture};
pub use model::{GmmStateSpaceModel, Model, NonlinearModel, SplitConfig};
pub use reduction::{kl_bound, merge_pair, reduce, reduce_with_report, ReductionConfig};
