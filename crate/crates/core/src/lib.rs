//! Smooth top-k classification losses.
//!
//! The smooth top-k SVM loss reduces to elementary symmetric polynomials
//! `σ_{k-1}` and `σ_k` of exponentiated scores. This crate evaluates them in
//! log space with an `O(kn)` divide-and-conquer expansion ([`esp`]), derives
//! their gradients from the forward results ([`grad`]), and builds the loss
//! family on top ([`loss`]), along with top-k marginals ([`proba`]),
//! brute-force references ([`oracle`]), experiment drivers ([`harness`])
//! and a small training harness ([`train`]).

pub mod config;
pub mod error;
pub mod esp;
pub mod grad;
pub mod harness;
pub mod host;
pub mod logspace;
pub mod loss;
pub mod oracle;
pub mod proba;
pub mod real;
pub mod train;

pub use config::{instability_policy, LossConfig};
pub use error::{Error, Result};
pub use esp::{esp_forward_dc, esp_forward_sum, truncated_poly_mul, EspResult, LogCoeffs};
pub use grad::{esp_backward, grad_approx, EntrySource, GradTable};
pub use logspace::{log_sub_exp, log_sum_exp, LogReal};
pub use loss::{
    cross_entropy, cross_entropy_grad, hard_loss, hard_loss_reformulated, smooth_loss, smooth_loss_grad,
    smooth_loss_grad_single, task_loss, topk_prediction, GradResult, ScoreBatch,
};
pub use harness::{gradcheck, stability_check, time_forward, ForwardAlgo, GradcheckReport, StabilityRow, Timing};
pub use proba::{aggregate_crops, topk_marginals, MarginalDist};
pub use real::{Precision, Real};

/// Engine version; host wrappers report the same string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
