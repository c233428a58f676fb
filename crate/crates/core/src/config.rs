use crate::error::{usage, Result};
use crate::grad::{default_approx_order, default_threshold};
use crate::real::Precision;

/// Parameters of a loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Rank of the top-k prediction, `1 <= k <= n - 1`.
    pub k: usize,
    /// Temperature, strictly positive for the smooth loss.
    pub tau: f64,
    /// Margin, nonnegative.
    pub alpha: f64,
    /// Extra orders for the gradient approximation; `None` means `max(1, round(0.2 k))`.
    pub p_order: Option<usize>,
    pub precision: Precision,
    /// Override for the instability threshold; `None` uses the precision default.
    pub instability_threshold: Option<f64>,
}

impl LossConfig {
    pub fn new(k: usize) -> Self {
        LossConfig {
            k,
            tau: 1.0,
            alpha: 1.0,
            p_order: None,
            precision: Precision::F64,
            instability_threshold: None,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_p_order(mut self, p: usize) -> Self {
        self.p_order = Some(p);
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.instability_threshold = Some(threshold);
        self
    }

    pub fn approx_order(&self) -> usize {
        self.p_order.unwrap_or_else(|| default_approx_order(self.k))
    }

    /// Checks the parts of the config that do not depend on `n`.
    pub fn validate(&self, smooth: bool) -> Result<()> {
        if self.k < 1 {
            return usage(format!("k must be at least 1, got {}", self.k));
        }
        if smooth && !(self.tau > 0.0 && self.tau.is_finite()) {
            return usage(format!("temperature must be positive and finite, got {}", self.tau));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return usage(format!("margin must be nonnegative and finite, got {}", self.alpha));
        }
        if let Some(t) = self.instability_threshold {
            if !(0.0..1.0).contains(&t) {
                return usage(format!("instability threshold must lie in [0, 1), got {t}"));
            }
        }
        Ok(())
    }
}

/// Relative-difference threshold used by the backward pass for `cfg`.
pub fn instability_policy(cfg: &LossConfig) -> f64 {
    cfg.instability_threshold.unwrap_or_else(|| default_threshold(cfg.precision))
}
