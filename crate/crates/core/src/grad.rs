//! Derivatives `δ_{j,i} = ∂σ_j(e)/∂e_i` from a finished forward pass.
//!
//! The recursion `δ_{1,i} = 1`, `δ_{j,i} = σ_{j-1}(e) - e_i δ_{j-1,i}` costs
//! `O(kn)` given the forward results, but each step is a subtraction and
//! loses precision when `e_i` dominates the other inputs (the relative error
//! of step `j` grows like `e_i^{j-1}` times the unit roundoff). Every step
//! goes through [`log_sub_exp`] and tracks an estimate of the accumulated
//! relative error, including the rounding error that log-space values carry
//! in proportion to their magnitude. Once a column `i` crosses the
//! threshold, that entry and all higher orders of the column come from the
//! truncated alternating series
//!
//! ```text
//! δ_{j,i} ≈ Σ_{m=0..p} (-1)^m σ_{j+m}(e) / e_i^{m+1}
//! ```
//!
//! whose exact error is `σ_{j+p}(e without i) / e_i^{p+1}`. The series is
//! summed in pairs `(t_m - t_{m+1})`; if a pair is not safely positive the
//! column is recomputed exactly from prefix and suffix products of the
//! other inputs, which involves no subtraction.

use crate::error::{usage, Result};
use crate::esp::EspResult;
use crate::logspace::{log_add_exp, log_sub_exp, log_sum_exp_iter, relative_gap, LogReal};
use crate::real::{Precision, Real};

/// Default relative-difference threshold below which a subtraction counts as
/// unstable.
pub fn default_threshold(precision: Precision) -> f64 {
    match precision {
        Precision::F32 => 1e-4,
        Precision::F64 => 1e-11,
    }
}

/// Default extra order `p ≈ 0.2 k`, at least 1.
pub fn default_approx_order(k: usize) -> usize {
    ((0.2 * k as f64).round() as usize).max(1)
}

/// How a table entry was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntrySource {
    Recursion,
    Approximation { order: usize },
    ExactFallback,
}

/// `δ_{j,i}` for `j = 1..=k`, `i = 0..n`, in log space.
#[derive(Debug, Clone)]
pub struct GradTable<T> {
    pub k: usize,
    pub n: usize,
    delta: Vec<LogReal<T>>,
    source: Vec<EntrySource>,
}

impl<T: Real> GradTable<T> {
    #[inline]
    fn idx(&self, j: usize, i: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.k && i < self.n);
        (j - 1) * self.n + i
    }

    /// `ln δ_{j,i}`, with `j` 1-based.
    #[inline]
    pub fn delta(&self, j: usize, i: usize) -> LogReal<T> {
        self.delta[self.idx(j, i)]
    }

    pub fn source(&self, j: usize, i: usize) -> EntrySource {
        self.source[self.idx(j, i)]
    }

    pub fn is_unstable(&self, j: usize, i: usize) -> bool {
        self.source(j, i) != EntrySource::Recursion
    }

    /// Row `j` of the table (all `i`).
    pub fn row(&self, j: usize) -> &[LogReal<T>] {
        let start = self.idx(j, 0);
        &self.delta[start..start + self.n]
    }

    pub fn unstable_count(&self) -> usize {
        self.source.iter().filter(|s| **s != EntrySource::Recursion).count()
    }
}

/// Runs the backward recursion for orders `1..=esp.k`.
///
/// `threshold` is both the relative-difference cutoff of [`log_sub_exp`]
/// and the largest tolerated estimate of the accumulated relative error.
/// An approximated entry is kept only if its truncation error bound is
/// within the threshold as well. Zero disables detection and gives the
/// plain recursion.
pub fn esp_backward<T: Real>(esp: &EspResult<T>, threshold: T) -> Result<GradTable<T>> {
    let (k, n, p) = (esp.k, esp.n, esp.p);
    if esp.log_sigma.len() != esp.max_order() + 1 || esp.log_inputs.len() != n {
        return usage("forward result is inconsistent with its declared orders");
    }
    let mut table = GradTable {
        k,
        n,
        delta: vec![LogReal::one(); k * n],
        source: vec![EntrySource::Recursion; k * n],
    };
    let detect = threshold > T::zero();
    // largest tolerated error estimate, in units of the unit roundoff
    let limit = if detect { threshold.as_f64() / unit_roundoff::<T>() } else { f64::INFINITY };
    let mut fallback = Vec::new();

    for i in 0..n {
        let e_i = esp.log_input(i);
        let w_b = noise_weight(e_i);
        let mut prev = LogReal::one();
        // estimated relative error of `prev` in units of the unit roundoff
        let mut err = 0.0f64;
        let mut first_unstable = None;
        for j in 2..=k {
            let a = esp.sigma(j - 1);
            let b = e_i * prev;
            let (value, stable) = log_sub_exp(a, b, threshold);
            let gap = relative_gap(a, b).as_f64();
            err = (noise_weight(a) + (1.0 - gap) * (w_b + err)) / gap + 1.0;
            if detect && (!stable || err > limit) {
                first_unstable = Some(j);
                break;
            }
            let at = (j - 1) * n + i;
            table.delta[at] = value;
            prev = value;
        }
        let Some(j0) = first_unstable else { continue };
        let approx: Option<Vec<_>> = (j0..=k)
            .map(|j| {
                let v = paired_series(esp, i, j, p, threshold)?;
                // the truncation error is at most the last series term
                let tail = esp.sigma(j + p) / e_i.powi(p + 1);
                ((tail / v).ln() <= threshold.ln()).then_some(v)
            })
            .collect();
        match approx {
            Some(values) => {
                for (j, v) in (j0..=k).zip(values) {
                    let at = (j - 1) * n + i;
                    table.delta[at] = v;
                    table.source[at] = EntrySource::Approximation { order: p };
                }
            }
            None => fallback.push((i, j0)),
        }
    }
    if !fallback.is_empty() {
        let loo = LeaveOneOut::new(&esp.log_inputs, k - 1);
        for (i, j0) in fallback {
            for j in j0..=k {
                let at = (j - 1) * n + i;
                table.delta[at] = loo.sigma_without(i, j - 1);
                table.source[at] = EntrySource::ExactFallback;
            }
        }
    }
    Ok(table)
}

#[inline]
fn unit_roundoff<T: Real>() -> f64 {
    0.5 * T::epsilon().as_f64()
}

/// Magnitude of the rounding error carried by a log-space value, relative
/// to the unit roundoff: the absolute error of `ln x` scales with `|ln x|`.
#[inline]
fn noise_weight<T: Real>(x: LogReal<T>) -> f64 {
    x.ln().as_f64().abs().max(1.0)
}

/// Truncated prefix and suffix products of `Π (1 + e_q X)`, giving
/// `σ_j(e without i)` as a sum of nonnegative terms.
struct LeaveOneOut<T> {
    deg: usize,
    /// `pre[i]`: coefficients of the product over `q < i`.
    pre: Vec<LogReal<T>>,
    /// `suf[i]`: coefficients of the product over `q > i`.
    suf: Vec<LogReal<T>>,
}

impl<T: Real> LeaveOneOut<T> {
    fn new(log_e: &[T], deg: usize) -> Self {
        let n = log_e.len();
        let w = deg + 1;
        let mut pre = vec![LogReal::zero(); n * w];
        let mut suf = vec![LogReal::zero(); n * w];
        let mut acc = vec![LogReal::zero(); w];
        acc[0] = LogReal::one();
        for i in 0..n {
            pre[i * w..(i + 1) * w].copy_from_slice(&acc);
            times_linear(&mut acc, LogReal::raw(log_e[i]));
        }
        acc.iter_mut().for_each(|c| *c = LogReal::zero());
        acc[0] = LogReal::one();
        for i in (0..n).rev() {
            suf[i * w..(i + 1) * w].copy_from_slice(&acc);
            times_linear(&mut acc, LogReal::raw(log_e[i]));
        }
        LeaveOneOut { deg, pre, suf }
    }

    fn sigma_without(&self, i: usize, j: usize) -> LogReal<T> {
        let w = self.deg + 1;
        let pre = &self.pre[i * w..(i + 1) * w];
        let suf = &self.suf[i * w..(i + 1) * w];
        log_sum_exp_iter((0..=j).map(|a| pre[a] * suf[j - a]))
    }
}

/// `coeffs <- coeffs * (1 + e X)`, truncated to the current length.
fn times_linear<T: Real>(coeffs: &mut [LogReal<T>], e: LogReal<T>) {
    for d in (1..coeffs.len()).rev() {
        coeffs[d] = log_add_exp(coeffs[d], e * coeffs[d - 1]);
    }
}

/// Terms `t_m = σ_{j+m}(e) / e_i^{m+1}` for `m = 0..=p`.
fn series_terms<T: Real>(esp: &EspResult<T>, i: usize, j: usize, p: usize) -> impl Iterator<Item = LogReal<T>> + Clone + '_ {
    let e_i = esp.log_input(i);
    (0..=p).map(move |m| esp.sigma(j + m) / e_i.powi(m + 1))
}

/// The truncated series summed in consecutive pairs. `None` when a pair
/// `t_m - t_{m+1}` is not safely positive.
fn paired_series<T: Real>(esp: &EspResult<T>, i: usize, j: usize, p: usize, threshold: T) -> Option<LogReal<T>> {
    let terms: Vec<LogReal<T>> = series_terms(esp, i, j, p).collect();
    let mut parts = Vec::with_capacity(terms.len().div_ceil(2));
    for pair in terms.chunks(2) {
        match *pair {
            [hi, lo] => {
                let (d, stable) = log_sub_exp(hi, lo, threshold);
                let gap = relative_gap(hi, lo).as_f64();
                if !stable || gap < threshold.as_f64() * noise_weight(hi) {
                    return None;
                }
                parts.push(d);
            }
            [last] => parts.push(last),
            _ => unreachable!(),
        }
    }
    Some(log_sum_exp_iter(parts.into_iter()))
}

/// `p`-th order approximation of `δ_{j,i}` from the stored forward results.
///
/// Differs from the exact derivative by exactly
/// `σ_{j+p}(e without i) / e_i^{p+1}`. Intended for inputs `e_i` that dominate
/// the rest of the vector; elsewhere the alternating sum may cancel, in
/// which case it is evaluated as a plain positive-minus-negative difference
/// and clamps to zero if rounding makes it negative.
pub fn grad_approx<T: Real>(esp: &EspResult<T>, i: usize, j: usize, p: usize) -> Result<LogReal<T>> {
    if i >= esp.n {
        return usage(format!("index {i} out of range for n = {}", esp.n));
    }
    if j < 1 || j > esp.k {
        return usage(format!("order j = {j} must lie in 1..={}", esp.k));
    }
    if j + p > esp.max_order() {
        return usage(format!(
            "approximation order p = {p} needs σ up to {} but only {} are stored",
            j + p,
            esp.max_order()
        ));
    }
    if j == 1 {
        return Ok(LogReal::one());
    }
    if let Some(v) = paired_series(esp, i, j, p, T::zero()) {
        return Ok(v);
    }
    let terms = series_terms(esp, i, j, p);
    let pos = log_sum_exp_iter(terms.clone().step_by(2));
    let neg = log_sum_exp_iter(terms.skip(1).step_by(2));
    Ok(log_sub_exp(pos, neg, T::zero()).0)
}
