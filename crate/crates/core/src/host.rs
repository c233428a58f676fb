//! Flat-buffer entry points for host-language wrappers.
//!
//! Scores are a contiguous row-major `samples × n_classes` buffer and all
//! configuration is passed as plain scalars. An empty batch is valid and
//! yields empty outputs.

use crate::config::LossConfig;
use crate::error::{usage, Result};
use crate::loss::{smooth_loss_grad, ScoreBatch};
use crate::proba::topk_marginals;
use crate::real::Precision;

/// Per-sample smooth losses and the row-major gradient buffer.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    scores: &[f64],
    n_classes: usize,
    labels: &[usize],
    k: usize,
    tau: f64,
    alpha: f64,
    precision: Precision,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let batch = ScoreBatch::new(scores.to_vec(), n_classes, labels.to_vec())?;
    if batch.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let cfg = LossConfig::new(k).with_tau(tau).with_alpha(alpha).with_precision(precision);
    let out = smooth_loss_grad(&batch, &cfg)?;
    Ok((out.losses, out.grads))
}

/// Row-major top-k marginals, one distribution per row.
pub fn batch_topk_marginals(scores: &[f64], n_classes: usize, k: usize) -> Result<Vec<f64>> {
    if n_classes == 0 {
        return if scores.is_empty() { Ok(Vec::new()) } else { usage("n_classes must be positive") };
    }
    if !scores.len().is_multiple_of(n_classes) {
        return usage(format!("{} scores do not divide into rows of {n_classes}", scores.len()));
    }
    let mut out = Vec::with_capacity(scores.len());
    for row in scores.chunks(n_classes) {
        out.extend(topk_marginals(row, k)?.probs);
    }
    Ok(out)
}
