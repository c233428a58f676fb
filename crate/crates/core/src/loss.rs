//! Top-k classification losses.
//!
//! The hard surrogate uses the `1/k`-rescaled margin form
//!
//! ```text
//! l_k(s, y) = max{ (s_{\y}/k + α)_[k] - s_y/k, 0 }
//! ```
//!
//! and the smooth surrogate replaces both maxima of its tuple formulation by
//! temperature-scaled log-sum-exps. Splitting the k-tuples by whether they
//! contain `y` gives, with `e = exp(s_{\y} / (kτ))`,
//!
//! ```text
//! L = τ ln(1 + exp(v - u)),  u = s_y/(kτ) + ln σ_{k-1}(e),  v = α/τ + ln σ_k(e)
//! ```
//!
//! which is what [`smooth_loss`] evaluates. For `(k, τ, α) = (1, 1, 0)` it is
//! the cross-entropy.

use rayon::prelude::*;

use crate::config::{instability_policy, LossConfig};
use crate::error::{usage, Error, Result};
use crate::esp::{esp_forward_dc, esp_forward_linear};
use crate::grad::esp_backward;
use crate::real::{Precision, Real};

/// Score vectors (row-major, `samples × n_classes`) with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    scores: Vec<f64>,
    n_classes: usize,
    labels: Vec<usize>,
}

impl ScoreBatch {
    pub fn new(scores: Vec<f64>, n_classes: usize, labels: Vec<usize>) -> Result<Self> {
        if n_classes == 0 && !labels.is_empty() {
            return usage("a batch needs at least one class");
        }
        if scores.len() != labels.len() * n_classes {
            return usage(format!(
                "score buffer has {} values, expected {} samples × {} classes",
                scores.len(),
                labels.len(),
                n_classes
            ));
        }
        if let Some((r, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(Error::Data(format!("sample {r}: label {y} out of range for {n_classes} classes")));
        }
        if let Some(at) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Data(format!("sample {}: non-finite score", at / n_classes)));
        }
        Ok(ScoreBatch { scores, n_classes, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return usage("rows have different lengths");
        }
        Self::new(rows.concat(), n, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.scores[r * self.n_classes..(r + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        (0..self.len()).map(move |r| (self.row(r), self.labels[r]))
    }
}

/// Per-sample losses and gradients of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub losses: Vec<f64>,
    /// Row-major `samples × n_classes`.
    pub grads: Vec<f64>,
    pub n_classes: usize,
    /// Backward-pass entries that needed the approximation or exact fallback.
    pub unstable_count: usize,
}

impl GradResult {
    pub fn grad(&self, r: usize) -> &[f64] {
        &self.grads[r * self.n_classes..(r + 1) * self.n_classes]
    }
}

fn check_scores(s: &[f64], y: usize) -> Result<()> {
    if y >= s.len() {
        return Err(Error::Data(format!("label {y} out of range for {} classes", s.len())));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("scores must be finite".into()));
    }
    Ok(())
}

fn check_rank(k: usize, n: usize) -> Result<()> {
    if k < 1 || k > n.saturating_sub(1) {
        return usage(format!("k = {k} out of range: need 1 <= k <= n - 1 = {}", n as i64 - 1));
    }
    Ok(())
}

/// Indices of the `k` largest scores, ties broken towards the lower index.
/// Returned in increasing index order.
pub fn topk_prediction(s: &[f64], k: usize) -> Result<Vec<usize>> {
    if k < 1 || k > s.len() {
        return usage(format!("k = {k} out of range for {} scores", s.len()));
    }
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("scores contain NaN".into()));
    }
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// Top-k error: 1 iff the k-th largest score strictly exceeds `s_y`.
pub fn task_loss(s: &[f64], y: usize, k: usize) -> Result<u8> {
    check_scores(s, y)?;
    if k < 1 || k > s.len() {
        return usage(format!("k = {k} out of range for {} scores", s.len()));
    }
    let above = s.iter().filter(|&&v| v > s[y]).count();
    Ok(u8::from(above >= k))
}

fn without(s: &[f64], y: usize) -> Vec<f64> {
    s.iter().enumerate().filter_map(|(j, &v)| (j != y).then_some(v)).collect()
}

/// Hard top-k surrogate `max{ (s_{\y}/k + α)_[k] - s_y/k, 0 }`, `O(n)`.
pub fn hard_loss(s: &[f64], y: usize, cfg: &LossConfig) -> Result<f64> {
    cfg.validate(false)?;
    check_scores(s, y)?;
    check_rank(cfg.k, s.len())?;
    let mut rest = without(s, y);
    let k = cfg.k;
    let (_, kth, _) = rest.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let kf = k as f64;
    Ok((*kth / kf + cfg.alpha - s[y] / kf).max(0.0))
}

/// The hard loss as a difference of two maxima over k-tuples:
///
/// ```text
/// max_{|Y|=k} { α·[y ∉ Y] + Σ_{j∈Y} s_j/k } - max_{|Y|=k, y∈Y} Σ_{j∈Y} s_j/k
/// ```
///
/// Both maxima are read off partial sums of the sorted `s_{\y}`.
pub fn hard_loss_reformulated(s: &[f64], y: usize, cfg: &LossConfig) -> Result<f64> {
    cfg.validate(false)?;
    check_scores(s, y)?;
    check_rank(cfg.k, s.len())?;
    let k = cfg.k;
    let kf = k as f64;
    let mut rest = without(s, y);
    rest.sort_unstable_by(|a, b| b.total_cmp(a));
    let head: f64 = rest[..k - 1].iter().sum();
    let with_y = (s[y] + head) / kf;
    let without_y = cfg.alpha + (head + rest[k - 1]) / kf;
    Ok(with_y.max(without_y) - with_y)
}

#[inline]
fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

struct SmoothEval<T> {
    loss: T,
    grad: Option<Vec<T>>,
    unstable: usize,
}

fn smooth_core<T: Real>(s: &[T], y: usize, cfg: &LossConfig, want_grad: bool) -> Result<SmoothEval<T>> {
    let n = s.len();
    let k = cfg.k;
    let kt = T::of_usize(k) * T::of(cfg.tau);
    let log_e: Vec<T> = s
        .iter()
        .enumerate()
        .filter_map(|(j, &v)| (j != y).then_some(v / kt))
        .collect();
    let p = cfg.approx_order().min(n - 1 - k);
    let esp = esp_forward_dc(&log_e, k, p)?;
    let ls_km1 = esp.sigma(k - 1);
    let ls_k = esp.sigma(k);
    let u = s[y] / kt + ls_km1.ln();
    let v = T::of(cfg.alpha / cfg.tau) + ls_k.ln();
    let x = v - u;
    let tau = T::of(cfg.tau);
    let loss = tau * softplus(x);
    if !want_grad {
        return Ok(SmoothEval { loss, grad: None, unstable: 0 });
    }

    let table = esp_backward(&esp, T::of(instability_policy(cfg)))?;
    // w = sigmoid(x), the weight of the tuples that miss y
    let w = (-softplus(-x)).exp();
    let scale = w / T::of_usize(k);
    let mut grad = vec![T::zero(); n];
    grad[y] = -scale;
    let row_k = table.row(k);
    let row_km1 = (k >= 2).then(|| table.row(k - 1));
    for (q, j) in (0..n).filter(|&j| j != y).enumerate() {
        let frac_k = (log_e[q] + row_k[q].ln() - ls_k.ln()).exp();
        let frac_km1 = match row_km1 {
            Some(row) => (log_e[q] + row[q].ln() - ls_km1.ln()).exp(),
            None => T::zero(),
        };
        grad[j] = scale * (frac_k - frac_km1);
    }
    Ok(SmoothEval { loss, grad: Some(grad), unstable: table.unstable_count() })
}

fn check_smooth(s: &[f64], y: usize, cfg: &LossConfig) -> Result<()> {
    cfg.validate(true)?;
    check_scores(s, y)?;
    check_rank(cfg.k, s.len())
}

fn run_smooth(s: &[f64], y: usize, cfg: &LossConfig, want_grad: bool) -> Result<(f64, Option<Vec<f64>>, usize)> {
    check_smooth(s, y, cfg)?;
    let (loss, grad, unstable) = match cfg.precision {
        Precision::F64 => {
            let r = smooth_core::<f64>(s, y, cfg, want_grad)?;
            (r.loss, r.grad, r.unstable)
        }
        Precision::F32 => {
            let s32: Vec<f32> = s.iter().map(|&v| v as f32).collect();
            let r = smooth_core::<f32>(&s32, y, cfg, want_grad)?;
            let grad = r.grad.map(|g| g.into_iter().map(f64::from).collect());
            (f64::from(r.loss), grad, r.unstable)
        }
    };
    if loss.is_nan() || grad.as_ref().is_some_and(|g| g.iter().any(|v| v.is_nan())) {
        return Err(Error::NonFinite("smooth loss evaluation produced NaN".into()));
    }
    Ok((loss, grad, unstable))
}

/// Smooth top-k loss of one score vector.
pub fn smooth_loss(s: &[f64], y: usize, cfg: &LossConfig) -> Result<f64> {
    run_smooth(s, y, cfg, false).map(|(l, _, _)| l)
}

/// Smooth loss and `∂L/∂s` of one score vector, with the number of
/// backward entries that took the unstable path.
pub fn smooth_loss_grad_single(s: &[f64], y: usize, cfg: &LossConfig) -> Result<(f64, Vec<f64>, usize)> {
    let (loss, grad, unstable) = run_smooth(s, y, cfg, true)?;
    Ok((loss, grad.expect("gradient requested"), unstable))
}

/// Batched smooth loss and gradient. Samples are evaluated in parallel;
/// results do not depend on the evaluation order.
pub fn smooth_loss_grad(batch: &ScoreBatch, cfg: &LossConfig) -> Result<GradResult> {
    let n = batch.n_classes();
    let per_sample: Vec<(f64, Vec<f64>, usize)> = (0..batch.len())
        .into_par_iter()
        .map(|r| smooth_loss_grad_single(batch.row(r), batch.labels()[r], cfg))
        .collect::<Result<_>>()?;
    let mut out = GradResult {
        losses: Vec::with_capacity(batch.len()),
        grads: Vec::with_capacity(batch.len() * n),
        n_classes: n,
        unstable_count: 0,
    };
    for (loss, grad, unstable) in per_sample {
        out.losses.push(loss);
        out.grads.extend(grad);
        out.unstable_count += unstable;
    }
    Ok(out)
}

/// `-ln softmax(s)_y`.
pub fn cross_entropy(s: &[f64], y: usize) -> Result<f64> {
    check_scores(s, y)?;
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok(lse - s[y])
}

/// Cross-entropy and its gradient `softmax(s) - onehot(y)`.
pub fn cross_entropy_grad(s: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    let loss = cross_entropy(s, y)?;
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
    let mut grad: Vec<f64> = s.iter().map(|v| (v - m).exp() / z).collect();
    grad[y] -= 1.0;
    Ok((loss, grad))
}

/// Smooth loss and gradient computed naively in linear space, in the
/// working precision `T`. Overflows at small temperatures; exists only for
/// stability comparisons against the log-space path.
pub fn smooth_loss_grad_linear<T: Real>(s: &[T], y: usize, cfg: &LossConfig) -> Result<(T, Vec<T>)> {
    cfg.validate(true)?;
    let n = s.len();
    check_rank(cfg.k, n)?;
    if y >= n {
        return Err(Error::Data(format!("label {y} out of range for {n} classes")));
    }
    let k = cfg.k;
    let kt = T::of_usize(k) * T::of(cfg.tau);
    let log_e: Vec<T> = s
        .iter()
        .enumerate()
        .filter_map(|(j, &v)| (j != y).then_some(v / kt))
        .collect();
    let sig = esp_forward_linear(&log_e, k);
    let e_y = (s[y] / kt).exp();
    let a = e_y * sig[k - 1];
    let b = T::of(cfg.alpha / cfg.tau).exp() * sig[k];
    let tau = T::of(cfg.tau);
    let loss = tau * ((a + b).ln() - a.ln());

    let w = b / (a + b);
    let scale = w / T::of_usize(k);
    let mut grad = vec![T::zero(); n];
    grad[y] = -scale;
    for (q, j) in (0..n).filter(|&j| j != y).enumerate() {
        let e = log_e[q].exp();
        // plain recursion δ_{j} = σ_{j-1} - e δ_{j-1}
        let mut d_prev = T::zero();
        let mut d = T::one();
        for order in 2..=k {
            d_prev = d;
            d = sig[order - 1] - e * d_prev;
        }
        let frac_k = e * d / sig[k];
        let frac_km1 = if k >= 2 { e * d_prev / sig[k - 1] } else { T::zero() };
        grad[j] = scale * (frac_k - frac_km1);
    }
    Ok((loss, grad))
}
