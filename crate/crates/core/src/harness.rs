//! Experiment drivers shared by the command-line tool and the tests:
//! finite-difference gradient checks, the temperature stability sweep and
//! forward-pass timing.

use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::LossConfig;
use crate::error::{usage, Error, Result};
use crate::esp::{esp_forward_dc, esp_forward_sum};
use crate::loss::{smooth_loss, smooth_loss_grad, smooth_loss_grad_linear, smooth_loss_grad_single, ScoreBatch};
use crate::oracle::{finite_diff_grad, max_relative_error};
use crate::real::Precision;

/// Scores uniform in `[-range, range]` with uniform labels.
pub fn random_batch(n_classes: usize, samples: usize, range: f64, seed: u64) -> Result<ScoreBatch> {
    if n_classes == 0 || !(range >= 0.0 && range.is_finite()) {
        return usage(format!("need n >= 1 and a finite range, got n = {n_classes}, range = {range}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n_classes * samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        scores.extend((0..n_classes).map(|_| rng.random_range(-range..=range)));
        labels.push(rng.random_range(0..n_classes));
    }
    ScoreBatch::new(scores, n_classes, labels)
}

/// Relative-error floor for gradients that are almost zero.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub trials: usize,
    /// Largest per-sample `‖g - fd‖_∞ / max(‖fd‖_∞, floor)`.
    pub max_rel_err: f64,
    /// Largest `|Σ_j g_j|`.
    pub max_grad_sum: f64,
}

/// Compares analytic gradients with central differences on `trials` random
/// score vectors (uniform in `[-5, 5]`), always in 64-bit.
pub fn gradcheck(n: usize, cfg: &LossConfig, trials: usize, seed: u64, h: f64) -> Result<GradcheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return usage(format!("step must be positive, got {h}"));
    }
    let cfg = cfg.clone().with_precision(Precision::F64);
    let batch = random_batch(n, trials, 5.0, seed)?;
    let mut report = GradcheckReport { trials, max_rel_err: 0.0, max_grad_sum: 0.0 };
    for (s, y) in batch.rows() {
        let (_, g, _) = smooth_loss_grad_single(s, y, &cfg)?;
        let mut failure = None;
        let fd = finite_diff_grad(
            |x| {
                smooth_loss(x, y, &cfg).unwrap_or_else(|e| {
                    failure = Some(e);
                    f64::NAN
                })
            },
            s,
            h,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        report.max_rel_err = report.max_rel_err.max(max_relative_error(&g, &fd, GRADCHECK_FLOOR));
        report.max_grad_sum = report.max_grad_sum.max(g.iter().sum::<f64>().abs());
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub tau: f64,
    pub precision: Precision,
    pub linear: bool,
    /// Non-finite loss or gradient entries across the batch.
    pub nonfinite: usize,
}

impl StabilityRow {
    pub fn stable(&self) -> bool {
        self.nonfinite == 0
    }
}

/// Evaluates loss and gradient on `batch` and counts non-finite outputs.
///
/// The log-space path reports NaN as an error; that counts as unstable too.
pub fn stability_check(batch: &ScoreBatch, cfg: &LossConfig, linear: bool) -> Result<StabilityRow> {
    let n = batch.n_classes();
    let mut nonfinite = 0;
    if linear {
        for (s, y) in batch.rows() {
            let (loss, grad): (f64, Vec<f64>) = match cfg.precision {
                Precision::F32 => {
                    let s32: Vec<f32> = s.iter().map(|&v| v as f32).collect();
                    let (l, g) = smooth_loss_grad_linear(&s32, y, cfg)?;
                    (f64::from(l), g.into_iter().map(f64::from).collect())
                }
                Precision::F64 => smooth_loss_grad_linear(s, y, cfg)?,
            };
            nonfinite += usize::from(!loss.is_finite()) + grad.iter().filter(|v| !v.is_finite()).count();
        }
    } else {
        match smooth_loss_grad(batch, cfg) {
            Ok(out) => {
                nonfinite = out.losses.iter().chain(&out.grads).filter(|v| !v.is_finite()).count();
            }
            Err(Error::NonFinite(_)) => nonfinite = batch.len() * (n + 1),
            Err(e) => return Err(e),
        }
    }
    Ok(StabilityRow { tau: cfg.tau, precision: cfg.precision, linear, nonfinite })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardAlgo {
    Dc,
    Sum,
}

impl ForwardAlgo {
    pub fn name(self) -> &'static str {
        match self {
            ForwardAlgo::Dc => "dc",
            ForwardAlgo::Sum => "sum",
        }
    }
}

impl FromStr for ForwardAlgo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dc" => Ok(ForwardAlgo::Dc),
            "sum" => Ok(ForwardAlgo::Sum),
            other => Err(format!("unknown algorithm `{other}` (expected dc or sum)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub n: usize,
    pub algo: ForwardAlgo,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Times the 64-bit forward pass over `batch` random log-input vectors of
/// length `n`. One untimed warm-up run precedes `repeats` timed runs; the
/// standard deviation is the sample one (zero for a single repeat).
pub fn time_forward(n: usize, k: usize, batch: usize, repeats: usize, algo: ForwardAlgo, seed: u64) -> Result<Timing> {
    if repeats == 0 || batch == 0 {
        return usage("repeats and batch must be positive");
    }
    let inputs = random_batch(n, batch, 20.0, seed)?;
    let run = || -> Result<f64> {
        let mut sink = 0.0;
        for (s, _) in inputs.rows() {
            let esp = match algo {
                ForwardAlgo::Dc => esp_forward_dc(s, k, 0)?,
                ForwardAlgo::Sum => esp_forward_sum(s, k, 0)?,
            };
            sink += esp.sigma(k).ln();
        }
        Ok(sink)
    };
    std::hint::black_box(run()?);
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        std::hint::black_box(run()?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times.iter().sum::<f64>() / repeats as f64;
    let std_ms = if repeats > 1 {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Timing { n, algo, mean_ms: mean, std_ms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_batch_is_deterministic() {
        let a = random_batch(7, 5, 2.0, 3).unwrap();
        assert_eq!(a, random_batch(7, 5, 2.0, 3).unwrap());
        assert!(a.rows().all(|(s, y)| y < 7 && s.iter().all(|v| v.abs() <= 2.0)));
    }

    #[test]
    fn gradcheck_small() {
        let r = gradcheck(6, &LossConfig::new(2), 10, 1, 1e-6).unwrap();
        assert!(r.max_rel_err < 1e-5, "{r:?}");
        assert!(r.max_grad_sum < 1e-8);
        let empty = gradcheck(6, &LossConfig::new(2), 0, 1, 1e-6).unwrap();
        assert_eq!(empty.max_rel_err, 0.0);
    }

    #[test]
    fn stability_at_moderate_temperature() {
        let batch = random_batch(50, 4, 20.0, 0).unwrap();
        let cfg = LossConfig::new(5).with_tau(10.0).with_precision(Precision::F32);
        assert!(stability_check(&batch, &cfg, false).unwrap().stable());
        assert!(stability_check(&batch, &cfg, true).unwrap().stable());
    }

    #[test]
    fn timing_shape() {
        let t = time_forward(100, 3, 2, 1, ForwardAlgo::Sum, 0).unwrap();
        assert_eq!(t.std_ms, 0.0);
        assert!(t.mean_ms >= 0.0);
        assert!(time_forward(100, 3, 2, 0, ForwardAlgo::Dc, 0).is_err());
    }
}
