//! Log-domain arithmetic on nonnegative reals.
//!
//! A [`LogReal`] stores `ln(x)` for some `x >= 0`; `x = 0` is represented by
//! negative infinity. Products become sums of logs and sums go through the
//! max-shifted log-sum-exp, so no intermediate ever overflows for finite
//! inputs.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Div, Mul};

use crate::error::{usage, Error, Result};
use crate::real::Real;

/// A nonnegative real number held as its natural logarithm.
#[derive(Clone, Copy, PartialEq, Default)]
#[repr(transparent)]
pub struct LogReal<T>(T);

impl<T: Real> LogReal<T> {
    /// Wraps a log value. NaN is rejected.
    pub fn from_log(log: T) -> Result<Self> {
        if log.is_nan() {
            return Err(Error::NonFinite("NaN is not a valid log value".into()));
        }
        Ok(LogReal(log))
    }

    /// Wraps a log value known not to be NaN.
    #[inline]
    pub(crate) fn raw(log: T) -> Self {
        debug_assert!(!log.is_nan(), "NaN log value");
        LogReal(log)
    }

    /// `ln(x)` for a nonnegative `x`.
    pub fn from_value(x: T) -> Result<Self> {
        if x.is_nan() || x < T::zero() {
            return Err(Error::Data(format!("log-domain value must be >= 0, got {x}")));
        }
        Ok(LogReal(x.ln()))
    }

    #[inline]
    pub fn zero() -> Self {
        LogReal(T::neg_infinity())
    }

    #[inline]
    pub fn one() -> Self {
        LogReal(T::zero())
    }

    #[inline]
    pub fn ln(self) -> T {
        self.0
    }

    /// The represented value `exp(ln)`; may overflow to infinity.
    #[inline]
    pub fn value(self) -> T {
        self.0.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == T::neg_infinity()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Raises to an integer power: `x^m` is `m * ln x`.
    #[inline]
    pub fn powi(self, m: usize) -> Self {
        if m == 0 {
            return Self::one();
        }
        LogReal(self.0 * T::of_usize(m))
    }

    #[inline]
    pub fn add(self, other: Self) -> Self {
        log_add_exp(self, other)
    }

    pub fn cast<U: Real>(self) -> LogReal<U> {
        LogReal(U::of(self.0.as_f64()))
    }
}

impl<T: Real> Mul for LogReal<T> {
    type Output = Self;

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        // -inf + +inf would be NaN; zero wins.
        if self.is_zero() || rhs.is_zero() {
            return Self::zero();
        }
        LogReal(self.0 + rhs.0)
    }
}

impl<T: Real> Div for LogReal<T> {
    type Output = Self;

    #[inline]
    fn div(self, rhs: Self) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        LogReal(self.0 - rhs.0)
    }
}

impl<T: Real> PartialOrd for LogReal<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl<T: fmt::Debug> fmt::Debug for LogReal<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogReal(ln={:?})", self.0)
    }
}

/// `ln(exp(a) + exp(b))` for two log values.
#[inline]
pub fn log_add_exp<T: Real>(a: LogReal<T>, b: LogReal<T>) -> LogReal<T> {
    let (hi, lo) = if a.0 >= b.0 { (a.0, b.0) } else { (b.0, a.0) };
    if lo == T::neg_infinity() || hi == T::infinity() {
        return LogReal(hi);
    }
    LogReal(hi + (lo - hi).exp().ln_1p())
}

/// `m + ln(sum(exp(x - m)))` with `m = max(xs)`.
///
/// Terms are accumulated left to right after the shift, so the result is
/// reproducible for a fixed input order.
pub fn log_sum_exp<T: Real>(xs: &[LogReal<T>]) -> Result<LogReal<T>> {
    if xs.is_empty() {
        return usage("log_sum_exp of an empty slice");
    }
    Ok(log_sum_exp_iter(xs.iter().copied()))
}

/// Same as [`log_sum_exp`] over a cloneable iterator (walked twice).
/// Returns log-zero for an empty iterator.
pub(crate) fn log_sum_exp_iter<T: Real, I>(xs: I) -> LogReal<T>
where
    I: Iterator<Item = LogReal<T>> + Clone,
{
    let m = xs.clone().fold(T::neg_infinity(), |m, x| m.max(x.0));
    if !m.is_finite() {
        return LogReal(m);
    }
    let total = xs.fold(T::zero(), |acc, x| acc + (x.0 - m).exp());
    LogReal(m + total.ln())
}

/// `ln(exp(a) - exp(b))` with a cancellation report.
///
/// Returns `(value, stable)`. `stable` is false when the relative difference
/// `1 - exp(b - a)` is below `threshold`, and also when rounding made
/// `b >= a`; in that last case the value is log-zero.
pub fn log_sub_exp<T: Real>(a: LogReal<T>, b: LogReal<T>, threshold: T) -> (LogReal<T>, bool) {
    if b.is_zero() {
        return (a, true);
    }
    let d = b.0 - a.0;
    if !(d < T::zero()) {
        return (LogReal::zero(), false);
    }
    let rel = -d.exp_m1();
    (LogReal(a.0 + rel.ln()), rel >= threshold)
}

/// Relative difference `1 - exp(b - a)` used by [`log_sub_exp`], clamped at 0.
#[inline]
pub(crate) fn relative_gap<T: Real>(a: LogReal<T>, b: LogReal<T>) -> T {
    if b.is_zero() {
        return T::one();
    }
    let d = b.0 - a.0;
    if !(d < T::zero()) {
        return T::zero();
    }
    -d.exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr(x: f64) -> LogReal<f64> {
        LogReal::from_log(x).unwrap()
    }

    #[test]
    fn lse_two_equal_terms() {
        let r = log_sum_exp(&[lr(0.0), lr(0.0)]).unwrap();
        assert!((r.ln() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn lse_log_zero_is_identity() {
        let r = log_sum_exp(&[lr(3.25), LogReal::zero()]).unwrap();
        assert_eq!(r.ln(), 3.25);
    }

    #[test]
    fn lse_large_values_single_precision() {
        let xs = [LogReal::from_log(1000f32).unwrap(); 3];
        let r = log_sum_exp(&xs).unwrap();
        assert!(r.is_finite());
        assert!((r.ln() - (1000.0 + 3f32.ln())).abs() < 1e-3);
    }

    #[test]
    fn lse_empty_is_usage_error() {
        let xs: [LogReal<f64>; 0] = [];
        assert!(matches!(log_sum_exp(&xs), Err(Error::Usage(_))));
    }

    #[test]
    fn lse_all_zero() {
        let r = log_sum_exp(&[LogReal::<f64>::zero(), LogReal::zero()]).unwrap();
        assert!(r.is_zero());
    }

    #[test]
    fn sub_exp_simple() {
        let (v, stable) = log_sub_exp(lr(3f64.ln()), lr(0.0), 1e-11);
        assert!(stable);
        assert!((v.ln() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sub_exp_exact_cancellation() {
        let (v, stable) = log_sub_exp(lr(1.5), lr(1.5), 1e-11);
        assert!(!stable);
        assert!(v.is_zero());
    }

    #[test]
    fn sub_exp_near_cancellation_single_precision() {
        // 1 - 5.9999999/6 ~ 1.7e-8, far below the 1e-4 single-precision threshold
        let a = LogReal::from_log(6f32.ln()).unwrap();
        let b = LogReal::from_log(5.9999999f32.ln()).unwrap();
        let (_, stable) = log_sub_exp(a, b, 1e-4f32);
        assert!(!stable);
    }

    #[test]
    fn sub_exp_reversed_is_log_zero() {
        let (v, stable) = log_sub_exp(lr(1.0), lr(2.0), 0.0);
        assert!(!stable);
        assert!(v.is_zero());
    }

    #[test]
    fn sub_exp_zero_threshold_only_flags_sign() {
        let (_, stable) = log_sub_exp(lr(10.0), lr(10.0 - 1e-13), 0.0);
        assert!(stable);
    }

    #[test]
    fn nan_is_rejected() {
        assert!(LogReal::from_log(f64::NAN).is_err());
        assert!(LogReal::from_value(-1.0f64).is_err());
    }

    #[test]
    fn mul_with_zero_is_zero() {
        let z = LogReal::<f64>::zero();
        let inf = lr(f64::INFINITY);
        assert!((z * inf).is_zero());
        assert_eq!((lr(1.0) * lr(2.0)).ln(), 3.0);
    }
}
