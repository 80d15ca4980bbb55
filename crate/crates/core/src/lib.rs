//! Person-level differentially private mean estimation for distributions with
//! bounded k-th moments.
//!
//! Every person contributes `m` samples; neighbouring datasets differ in all
//! samples of one person. Estimators:
//!
//! * [`est1d::estimate_mean_1d`]: histogram coarse estimate plus truncated
//!   Laplace mean (pure or approximate DP, d = 1).
//! * [`esthd_approx::estimate_two_round`] and
//!   [`esthd_approx::estimate_single_round`]: clip-and-noise with Gaussian
//!   noise in d dimensions.
//! * [`esthd_pure::estimate_pure_full`]: pure DP via scores over a cover and
//!   the exponential mechanism (small d only).
//!
//! [`tailbounds`] evaluates the concentration bounds behind the estimators and
//! checks them by Monte Carlo.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clipping;
pub mod error;
pub mod est1d;
pub mod esthd_approx;
pub mod esthd_pure;
pub mod mechanisms;
pub mod report;
pub mod synth;
pub mod tailbounds;
pub mod types;

pub use error::{DpError, Result};
pub use report::EstimateReport;
pub use synth::{sample_dataset, Family, SyntheticSpec};
pub use types::{ClipBall, PersonDataset, PrivacyBudget, ProblemParams, Seed};
