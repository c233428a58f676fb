//! Marginal probability that each label belongs to the top-k prediction.
//!
//! Under the distribution `P(Y) ∝ exp(Σ_{j∈Y} s_j)` over k-subsets, label `i`
//! is selected with probability proportional to
//! `exp(s_i) σ_{k-1}(exp(s_{\i})) = e_i δ_{k,i}`. The factors `δ_{k,i}` for
//! all `i` come from a single backward pass, so the whole vector costs
//! `O(kn)`. Everything stays in log space and is divided by `σ_k(exp(s))`
//! before normalizing.

use crate::error::{usage, Error, Result};
use crate::esp::esp_forward_dc;
use crate::grad::{default_approx_order, esp_backward};

/// Error tolerance of the backward pass for marginals. Tighter than the
/// loss default: columns that miss it are recomputed exactly, which is
/// cheap next to the accuracy gained.
pub const MARGINAL_THRESHOLD: f64 = 1e-13;

/// Probabilities over labels, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDist {
    pub probs: Vec<f64>,
}

impl MarginalDist {
    /// Labels in decreasing order of probability (ties to the lower index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx
    }
}

/// Top-k marginals of one score vector.
pub fn topk_marginals(s: &[f64], k: usize) -> Result<MarginalDist> {
    let n = s.len();
    if k < 1 || k > n {
        return usage(format!("k = {k} out of range for {n} scores"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("scores must be finite".into()));
    }
    let p = default_approx_order(k).min(n - k);
    let esp = esp_forward_dc(s, k, p)?;
    let table = esp_backward(&esp, MARGINAL_THRESHOLD)?;
    let ls_k = esp.sigma(k).ln();
    let unnorm: Vec<f64> = table
        .row(k)
        .iter()
        .zip(s)
        .map(|(d, &si)| (si + d.ln() - ls_k).exp())
        .collect();
    let total: f64 = unnorm.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonFinite(format!("marginals do not normalize (sum = {total})")));
    }
    Ok(MarginalDist { probs: unnorm.into_iter().map(|v| v / total).collect() })
}

/// Averages the marginals of several score vectors of one input (e.g. crops)
/// and renormalizes.
pub fn aggregate_crops(score_vectors: &[Vec<f64>], k: usize) -> Result<MarginalDist> {
    let Some(first) = score_vectors.first() else {
        return usage("no score vectors to aggregate");
    };
    let n = first.len();
    if score_vectors.iter().any(|v| v.len() != n) {
        return usage("score vectors have different lengths");
    }
    let mut acc = vec![0.0; n];
    for v in score_vectors {
        let m = topk_marginals(v, k)?;
        for (a, p) in acc.iter_mut().zip(&m.probs) {
            *a += p;
        }
    }
    let total: f64 = acc.iter().sum();
    Ok(MarginalDist { probs: acc.into_iter().map(|v| v / total).collect() })
}
