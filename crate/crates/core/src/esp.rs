//! Elementary symmetric polynomials `σ_0..σ_r` of a positive vector, in log space.
//!
//! Two forward algorithms share one result type:
//!
//! * [`esp_forward_dc`] expands `Q = σ_n(e) · Π (X + 1/e_i)` by pairwise
//!   merging of linear factors, keeping only coefficients up to degree
//!   `r = k + p`. Coefficient `j` of `Q` is `σ_j(e)`, so the low-order part of
//!   the product is all that is needed. There are `O(log n)` merge levels and
//!   `O(r n)` work in total. The factor `σ_n(e)` is distributed over the
//!   leaves, `e_i (X + 1/e_i) = e_i X + 1`, rather than applied at the end:
//!   adding `Σ ln e_i` afterwards would cancel against equally large
//!   coefficient logs and cost absolute precision in `ln σ_j`.
//! * [`esp_forward_sum`] runs the sequential recurrence
//!   `σ_{j,i} = σ_{j,i-1} + e_i σ_{j-1,i-1}`; it is the independent baseline.
//!
//! Both take the inputs as logarithms `ln e_i` and never materialize `e_i`.
//! [`esp_forward_linear`] is the naive linear-space recurrence, kept only to
//! demonstrate overflow in the stability sweep.

use crate::error::{usage, Error, Result};
use crate::logspace::{log_add_exp, LogReal};
use crate::real::Real;

/// Polynomial coefficients in log space; index `j` holds the coefficient of `X^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogCoeffs<T> {
    coeffs: Vec<LogReal<T>>,
}

impl<T: Real> LogCoeffs<T> {
    pub fn new(coeffs: Vec<LogReal<T>>) -> Result<Self> {
        if coeffs.is_empty() {
            return usage("a polynomial needs at least one coefficient");
        }
        Ok(LogCoeffs { coeffs })
    }

    /// Builds from plain nonnegative coefficients.
    pub fn from_values(values: &[T]) -> Result<Self> {
        let coeffs = values
            .iter()
            .map(|&v| LogReal::from_value(v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coeffs)
    }

    /// The constant polynomial 1.
    pub fn one() -> Self {
        LogCoeffs { coeffs: vec![LogReal::one()] }
    }

    pub fn degree_cap(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[LogReal<T>] {
        &self.coeffs
    }

    pub fn values(&self) -> Vec<T> {
        self.coeffs.iter().map(|c| c.value()).collect()
    }
}

/// Product of two polynomials, keeping coefficients of degree `<= max_deg`.
///
/// Costs `O(min(r, p) · min(r, q))` multiply-adds for degrees `p`, `q` and
/// `r = max_deg + 1` kept coefficients.
pub fn truncated_poly_mul<T: Real>(a: &LogCoeffs<T>, b: &LogCoeffs<T>, max_deg: usize) -> LogCoeffs<T> {
    let mut out = Vec::new();
    mul_truncated_into(&a.coeffs, &b.coeffs, max_deg, &mut out);
    LogCoeffs { coeffs: out }
}

/// Truncated convolution of two log-coefficient slices, appended to `out`.
#[inline]
fn mul_truncated_into<T: Real>(
    a: &[LogReal<T>],
    b: &[LogReal<T>],
    max_deg: usize,
    out: &mut Vec<LogReal<T>>,
) {
    let da = a.len() - 1;
    let db = b.len() - 1;
    let top = max_deg.min(da + db);
    for j in 0..=top {
        let lo = j.saturating_sub(db);
        let hi = j.min(da);
        let mut m = T::neg_infinity();
        for i in lo..=hi {
            let t = a[i].ln() + b[j - i].ln();
            if t > m {
                m = t;
            }
        }
        if !m.is_finite() {
            out.push(LogReal::raw(m));
            continue;
        }
        let mut acc = T::zero();
        for i in lo..=hi {
            acc = acc + (a[i].ln() + b[j - i].ln() - m).exp();
        }
        out.push(LogReal::raw(m + acc.ln()));
    }
}

/// Number of coefficient products the divide-and-conquer schedule performs
/// for `n` linear factors truncated at degree `max_deg`.
pub fn dc_term_count(n: usize, max_deg: usize) -> u64 {
    let mut degs: Vec<usize> = vec![1; n];
    let mut terms = 0u64;
    while degs.len() > 1 {
        let mut next = Vec::with_capacity(degs.len().div_ceil(2));
        for pair in degs.chunks(2) {
            match *pair {
                [da, db] => {
                    let top = max_deg.min(da + db);
                    for j in 0..=top {
                        terms += (j.min(da) - j.saturating_sub(db) + 1) as u64;
                    }
                    next.push(top);
                }
                [d] => next.push(d),
                _ => unreachable!(),
            }
        }
        degs = next;
    }
    terms
}

/// Log-domain `σ_0..σ_{k+p}` of an input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EspResult<T> {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    /// `log_sigma[j] = ln σ_j(e)` for `j = 0..=k+p`.
    pub log_sigma: Vec<LogReal<T>>,
    /// `ln e_i`, kept for the backward pass.
    pub log_inputs: Vec<T>,
}

impl<T: Real> EspResult<T> {
    #[inline]
    pub fn sigma(&self, j: usize) -> LogReal<T> {
        self.log_sigma[j]
    }

    /// Highest order stored, `k + p`.
    pub fn max_order(&self) -> usize {
        self.k + self.p
    }

    #[inline]
    pub fn log_input(&self, i: usize) -> LogReal<T> {
        LogReal::raw(self.log_inputs[i])
    }

    pub fn all_finite(&self) -> bool {
        self.log_sigma.iter().all(|s| s.is_finite())
    }
}

fn check_forward_args<T: Real>(log_e: &[T], k: usize, p: usize) -> Result<()> {
    let n = log_e.len();
    if k < 1 {
        return usage(format!("k must be at least 1, got {k}"));
    }
    if k + p > n {
        return usage(format!("k + p = {} exceeds the input length {n}", k + p));
    }
    if let Some(i) = log_e.iter().position(|x| !x.is_finite()) {
        return Err(Error::Usage(format!(
            "input {i} has non-finite log value {} (inputs must be strictly positive and finite)",
            log_e[i]
        )));
    }
    Ok(())
}

/// Divide-and-conquer forward pass.
///
/// `log_e[i] = ln e_i`; returns `ln σ_j(e)` for `j = 0..=k+p`. An odd
/// polynomial left over at a merge level is carried to the next level
/// unchanged. Merges are independent of each other, so the result does not
/// depend on evaluation order.
pub fn esp_forward_dc<T: Real>(log_e: &[T], k: usize, p: usize) -> Result<EspResult<T>> {
    check_forward_args(log_e, k, p)?;
    let n = log_e.len();
    let r = k + p;
    let stride = r + 1;

    // leaf i is [ln 1, ln e_i]
    let mut cur: Vec<LogReal<T>> = Vec::with_capacity(n * 2);
    let mut lens: Vec<usize> = Vec::with_capacity(n);
    for &le in log_e {
        cur.push(LogReal::one());
        cur.push(LogReal::raw(le));
        lens.push(2);
    }
    // Level 0 is packed with stride 2; later levels use `stride`.
    let mut cur_stride = 2;
    let mut next: Vec<LogReal<T>> = Vec::with_capacity(n.div_ceil(2) * stride);
    let mut next_lens: Vec<usize> = Vec::with_capacity(n.div_ceil(2));
    let mut scratch: Vec<LogReal<T>> = Vec::with_capacity(stride);

    while lens.len() > 1 {
        next.clear();
        next_lens.clear();
        let count = lens.len();
        let mut q = 0;
        while q < count {
            let a = &cur[q * cur_stride..q * cur_stride + lens[q]];
            scratch.clear();
            if q + 1 < count {
                let b = &cur[(q + 1) * cur_stride..(q + 1) * cur_stride + lens[q + 1]];
                mul_truncated_into(a, b, r, &mut scratch);
            } else {
                scratch.extend_from_slice(a);
            }
            next_lens.push(scratch.len());
            next.extend_from_slice(&scratch);
            next.resize(next_lens.len() * stride, LogReal::zero());
            q += 2;
        }
        std::mem::swap(&mut cur, &mut next);
        std::mem::swap(&mut lens, &mut next_lens);
        cur_stride = stride;
    }

    let log_sigma = cur[..lens[0]].to_vec();
    debug_assert_eq!(log_sigma.len(), r + 1);

    Ok(EspResult { n, k, p, log_sigma, log_inputs: log_e.to_vec() })
}

/// Sequential summation forward pass in log space.
pub fn esp_forward_sum<T: Real>(log_e: &[T], k: usize, p: usize) -> Result<EspResult<T>> {
    check_forward_args(log_e, k, p)?;
    let n = log_e.len();
    let r = k + p;
    let mut sig = vec![LogReal::<T>::zero(); r + 1];
    sig[0] = LogReal::one();
    for (i, &le) in log_e.iter().enumerate() {
        let e = LogReal::raw(le);
        for j in (1..=r.min(i + 1)).rev() {
            sig[j] = log_add_exp(sig[j], e * sig[j - 1]);
        }
    }
    Ok(EspResult { n, k, p, log_sigma: sig, log_inputs: log_e.to_vec() })
}

/// Naive linear-space summation: `σ_0..σ_r` of `e_i = exp(log_e[i])`.
///
/// Overflows for large inputs; only meant for stability comparisons.
pub fn esp_forward_linear<T: Real>(log_e: &[T], r: usize) -> Vec<T> {
    let mut sig = vec![T::zero(); r + 1];
    sig[0] = T::one();
    for (i, &le) in log_e.iter().enumerate() {
        let e = le.exp();
        for j in (1..=r.min(i + 1)).rev() {
            sig[j] = sig[j] + e * sig[j - 1];
        }
    }
    sig
}
