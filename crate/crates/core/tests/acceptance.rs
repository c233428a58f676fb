//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero if any of them fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smooth_topk::grad::default_threshold;
use smooth_topk::harness::random_batch;
use smooth_topk::oracle::{binomial, brute_delta, brute_marginals, brute_sigma, brute_smooth_loss};
use smooth_topk::train::margin::margin_equivalence_check;
use smooth_topk::train::{generate_dataset, train, LinearModel, LossKind, NoisySpec, TrainConfig};
use smooth_topk::{
    cross_entropy, esp_backward, esp_forward_dc, esp_forward_sum, gradcheck, grad_approx, hard_loss,
    hard_loss_reformulated, smooth_loss, stability_check, task_loss, time_forward, topk_marginals, ForwardAlgo,
    LossConfig, Precision, Result,
};

type Check = (&'static str, &'static str, fn() -> Result<Outcome>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn within(limit: Duration, start: Instant) -> (bool, f64) {
    let t = start.elapsed();
    (t <= limit, t.as_secs_f64())
}

fn esp_oracle() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=20);
        let r = rng.random_range(1..=n.min(6));
        let k = rng.random_range(1..=r);
        let p = r - k;
        let log_e = uniform(&mut rng, n, -10.0, 10.0);
        let e: Vec<f64> = log_e.iter().map(|v| v.exp()).collect();
        let dc = esp_forward_dc(&log_e, k, p)?;
        let sum = esp_forward_sum(&log_e, k, p)?;
        for j in 0..=r {
            let want = brute_sigma(&e, j)?;
            worst = worst.max(rel_err(dc.sigma(j).value(), want));
            worst = worst.max(rel_err(sum.sigma(j).value(), want));
        }
    }
    let (fast, secs) = within(Duration::from_secs(10), start);
    outcome(worst <= 1e-10 && fast, format!("max rel err {worst:.2e}, {secs:.2} s"))
}

fn backward_oracle() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let threshold = default_threshold(Precision::F64);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=15);
        let k = rng.random_range(1..=n.min(5));
        let log_e = uniform(&mut rng, n, -2.0, 2.0);
        let e: Vec<f64> = log_e.iter().map(|v| v.exp()).collect();
        let esp = esp_forward_dc(&log_e, k, 0)?;
        let table = esp_backward(&esp, threshold)?;
        for j in 1..=k {
            for i in 0..n {
                worst = worst.max(rel_err(table.delta(j, i).value(), brute_delta(&e, j, i)?));
            }
        }
    }
    let (fast, secs) = within(Duration::from_secs(10), start);
    outcome(worst <= 1e-8 && fast, format!("max rel err {worst:.2e}, {secs:.2} s"))
}

fn approximation_error() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_bound, mut worst_approx) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(5..=10);
        let p = rng.random_range(1..=2);
        let k = rng.random_range(2..=(n - 1 - p).min(4));
        let i = rng.random_range(0..n);
        let mut log_e = uniform(&mut rng, n, -1.0, 0.0);
        log_e[i] = rng.random_range(3.0..4.0);
        let e: Vec<f64> = log_e.iter().map(|v| v.exp()).collect();
        let rest: Vec<f64> = e.iter().enumerate().filter(|(q, _)| *q != i).map(|(_, &v)| v).collect();

        let mut series = 0.0;
        for m in 0..=p {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            series += sign * brute_sigma(&e, k + m)? / e[i].powi(m as i32 + 1);
        }
        let exact = brute_delta(&e, k, i)?;
        let bound = brute_sigma(&rest, k + p)? / e[i].powi(p as i32 + 1);
        worst_bound = worst_bound.max(rel_err((exact - series).abs(), bound));

        let esp = esp_forward_dc(&log_e, k, p)?;
        worst_approx = worst_approx.max(rel_err(grad_approx(&esp, i, k, p)?.value(), series));
    }
    outcome(
        worst_bound <= 1e-6 && worst_approx <= 1e-10,
        format!("error vs bound {worst_bound:.2e}, fast vs brute series {worst_approx:.2e}"),
    )
}

fn loss_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for k in [2, 5] {
        for tau in [0.1, 1.0] {
            for alpha in [0.0, 1.0] {
                let cfg = LossConfig::new(k).with_tau(tau).with_alpha(alpha);
                for _ in 0..100 {
                    let s = uniform(&mut rng, 10, -5.0, 5.0);
                    let y = rng.random_range(0..10);
                    worst = worst.max((smooth_loss(&s, y, &cfg)? - brute_smooth_loss(&s, y, &cfg)?).abs());
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("max abs err {worst:.2e} over 800 samples"))
}

fn gradient_check() -> Result<Outcome> {
    let cfg = LossConfig::new(5).with_tau(1.0);
    let report = gradcheck(10, &cfg, 100, 5, 1e-6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_shift = 0.0f64;
    for _ in 0..100 {
        let s = uniform(&mut rng, 10, -5.0, 5.0);
        let y = rng.random_range(0..10);
        let base = smooth_loss(&s, y, &cfg)?;
        for c in [1.0, -1.0, 100.0, -100.0] {
            let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
            worst_shift = worst_shift.max((smooth_loss(&shifted, y, &cfg)? - base).abs());
        }
    }
    outcome(
        report.max_rel_err <= 1e-5 && report.max_grad_sum <= 1e-8 && worst_shift <= 1e-8,
        format!(
            "fd rel err {:.2e}, grad sum {:.2e}, shift {:.2e}",
            report.max_rel_err, report.max_grad_sum, worst_shift
        ),
    )
}

fn propositions() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let mut forms = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=20);
        let k = rng.random_range(1..n);
        let cfg = LossConfig::new(k).with_alpha(rng.random_range(0.0..2.0));
        let s = uniform(&mut rng, n, -5.0, 5.0);
        let y = rng.random_range(0..n);
        forms = forms.max((hard_loss(&s, y, &cfg)? - hard_loss_reformulated(&s, y, &cfg)?).abs());
    }

    // scores on a grid with spacing at least 0.1, so no near-ties
    let tau = 1e-3;
    let mut converge_ok = true;
    let mut worst_slack = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let k = rng.random_range(1..n);
        let spacing = rng.random_range(0.1..0.5);
        let mut ranks: Vec<usize> = (0..n).collect();
        for a in (1..n).rev() {
            ranks.swap(a, rng.random_range(0..=a));
        }
        let s: Vec<f64> = ranks.iter().map(|&r| r as f64 * spacing - 2.0).collect();
        let y = rng.random_range(0..n);
        for alpha in [0.0, 1.0] {
            let cfg = LossConfig::new(k).with_tau(tau).with_alpha(alpha);
            let bound = tau * (binomial(n, k).ln() + binomial(n - 1, k - 1).ln());
            let diff = (smooth_loss(&s, y, &cfg)? - hard_loss(&s, y, &cfg)?).abs();
            converge_ok &= diff <= bound;
            worst_slack = worst_slack.min(bound - diff);
        }
    }

    let mut upper_ok = true;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=20);
        let cfg = LossConfig::new(1).with_tau(rng.random_range(0.01..2.0)).with_alpha(rng.random_range(0.0..2.0));
        let s = uniform(&mut rng, n, -5.0, 5.0);
        let y = rng.random_range(0..n);
        upper_ok &= smooth_loss(&s, y, &cfg)? >= hard_loss(&s, y, &cfg)? - 1e-12;
    }
    let beta = 10.0;
    let cfg2 = LossConfig::new(2);
    let counter = [0.0, beta, beta];
    let (l_smooth, l_hard) = (smooth_loss(&counter, 0, &cfg2)?, hard_loss(&counter, 0, &cfg2)?);
    let violated = l_smooth < l_hard;

    let mut lower_ok = true;
    for _ in 0..10_000 {
        let k = [2, 5][rng.random_range(0..2)];
        let tau = [0.1, 1.0][rng.random_range(0..2)];
        let n = rng.random_range(k + 1..=20);
        let cfg = LossConfig::new(k).with_tau(tau);
        let s = uniform(&mut rng, n, -5.0, 5.0);
        let y = rng.random_range(0..n);
        let lambda = task_loss(&s, y, k)? as f64;
        lower_ok &= smooth_loss(&s, y, &cfg)? >= (1.0 - tau * (k as f64).ln()) * lambda - 1e-12;
    }

    outcome(
        forms <= 1e-12 && converge_ok && upper_ok && violated && lower_ok,
        format!(
            "forms {forms:.1e}, convergence {} (min slack {worst_slack:.2e}), k=1 bound {}, \
             k=2 counterexample L={l_smooth:.4} < l={l_hard:.4} {}, lower bound {}",
            ok(converge_ok),
            ok(upper_ok),
            ok(violated),
            ok(lower_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

fn cross_entropy_reduction() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = LossConfig::new(1).with_tau(1.0).with_alpha(0.0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=100);
        let s = uniform(&mut rng, n, -10.0, 10.0);
        let y = rng.random_range(0..n);
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let neg_log_softmax = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - s[y];
        let l = smooth_loss(&s, y, &cfg)?;
        worst = worst.max((l - neg_log_softmax).abs()).max((l - cross_entropy(&s, y)?).abs());
    }
    outcome(worst <= 1e-10, format!("max abs err {worst:.2e}"))
}

fn stability_sweep() -> Result<Outcome> {
    let batch = random_batch(1000, 128, 20.0, 8)?;
    let mut log_ok = true;
    let mut unstable_log = Vec::new();
    for tau in [10.0, 1.0, 1e-1, 1e-2, 1e-3, 1e-4] {
        let cfg = LossConfig::new(5).with_tau(tau).with_precision(Precision::F32);
        if !stability_check(&batch, &cfg, false)?.stable() {
            log_ok = false;
            unstable_log.push(tau);
        }
    }
    let cfg = LossConfig::new(5).with_tau(1e-2).with_precision(Precision::F32);
    let linear = stability_check(&batch, &cfg, true)?;
    outcome(
        log_ok && !linear.stable(),
        format!(
            "log-space 32-bit unstable at {unstable_log:?}, linear 32-bit non-finite outputs at tau=0.01: {}",
            linear.nonfinite
        ),
    )
}

fn scaling() -> Result<Outcome> {
    let start = Instant::now();
    let t = |n| time_forward(n, 5, 20, 5, ForwardAlgo::Dc, 9).map(|t| t.mean_ms);
    let (t3, t4, t5) = (t(1_000)?, t(10_000)?, t(100_000)?);
    let (r1, r2) = (t4 / t3, t5 / t4);
    let (fast, secs) = within(Duration::from_secs(120), start);
    outcome(
        r1 <= 15.0 && r2 <= 15.0 && fast,
        format!("t(1e4)/t(1e3) = {r1:.2}, t(1e5)/t(1e4) = {r2:.2}, {secs:.1} s"),
    )
}

fn marginals() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut softmax, mut uniform_err, mut enumeration) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(1..=50);
        let s = uniform(&mut rng, n, -10.0, 10.0);
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
        for (p, v) in topk_marginals(&s, 1)?.probs.iter().zip(&s) {
            softmax = softmax.max((p - (v - m).exp() / z).abs());
        }
        let n = rng.random_range(1..=30);
        let s = uniform(&mut rng, n, -10.0, 10.0);
        for p in topk_marginals(&s, n)?.probs {
            uniform_err = uniform_err.max((p - 1.0 / n as f64).abs());
        }
        let n = rng.random_range(1..=12);
        let k = rng.random_range(1..=n);
        let s = uniform(&mut rng, n, -5.0, 5.0);
        for (p, q) in topk_marginals(&s, k)?.probs.iter().zip(brute_marginals(&s, k)?) {
            enumeration = enumeration.max((p - q).abs());
        }
    }
    outcome(
        softmax <= 1e-12 && uniform_err <= 1e-12 && enumeration <= 1e-10,
        format!("k=1 {softmax:.2e}, k=n {uniform_err:.2e}, enumeration {enumeration:.2e}"),
    )
}

fn margin_equivalence() -> Result<Outcome> {
    let start = Instant::now();
    let spec = NoisySpec { coarse: 2, fine_per_coarse: 3, dim: 6, samples: 100, seed: 11, ..NoisySpec::default() };
    let data = generate_dataset(&spec)?;
    let report = margin_equivalence_check(&data.train, &data.test, 0.1, 3.0, 1, 1e-2)?;
    let gap = report.scaled.gap().max(report.reference.gap());
    let (fast, secs) = within(Duration::from_secs(60), start);
    outcome(
        report.within_tol && report.predictions_agree && gap <= 1e-6 && fast,
        format!(
            "{:?}, rel diff {:.2e}, predictions agree {}, duality gap {gap:.1e}, {secs:.2} s",
            report.status, report.relative_diff, report.predictions_agree
        ),
    )
}

struct Run {
    test_top1: f64,
    test_topk: f64,
    train_topk: f64,
}

fn toy_run(noise: f64, seed: u64, loss: LossKind, tau: f64) -> Result<Run> {
    let spec = NoisySpec { noise, seed, ..NoisySpec::default() };
    let data = generate_dataset(&spec)?;
    let mut model = LinearModel::zeros(spec.dim, spec.n_classes(), 1e-4)?;
    let mut cfg = TrainConfig { seed, ..TrainConfig::new(loss, 5) };
    cfg.loss_cfg.tau = tau;
    let report = train(&mut model, &data, &cfg)?;
    let last = report.epochs.last().expect("at least one epoch");
    Ok(Run { test_top1: report.test_top1, test_topk: report.test_topk, train_topk: last.train_topk })
}

fn noise_robustness() -> Result<Outcome> {
    let start = Instant::now();
    let seeds = 0..5u64;
    let runs: Vec<Result<(Run, Run, Run, Run)>> = thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .map(|seed| {
                scope.spawn(move || {
                    Ok((
                        toy_run(0.8, seed, LossKind::CrossEntropy, 1.0)?,
                        toy_run(0.8, seed, LossKind::SmoothTopk, 1.0)?,
                        toy_run(0.0, seed, LossKind::CrossEntropy, 1.0)?,
                        toy_run(0.0, seed, LossKind::SmoothTopk, 1.0)?,
                    ))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let (mut noisy_wins, mut clean_wins) = (0, 0);
    for r in runs {
        let (ce_noisy, sm_noisy, ce_clean, sm_clean) = r?;
        noisy_wins += usize::from(sm_noisy.test_topk >= ce_noisy.test_topk);
        clean_wins += usize::from(ce_clean.test_top1 >= sm_clean.test_top1);
    }
    let (fast, secs) = within(Duration::from_secs(600), start);
    outcome(
        noisy_wins >= 3 && clean_wins >= 3 && fast,
        format!(
            "noise 0.8: smooth top-5 >= ce in {noisy_wins}/5 seeds; clean: ce top-1 >= smooth in {clean_wins}/5; {secs:.1} s"
        ),
    )
}

fn temperature_effect() -> Result<Outcome> {
    let warm = toy_run(0.0, 0, LossKind::SmoothTopk, 1.0)?;
    let cold = toy_run(0.0, 0, LossKind::SmoothTopk, 1e-5)?;
    let ratio = cold.train_topk / warm.train_topk;
    outcome(
        ratio < 0.5,
        format!(
            "train top-5 {:.4} at tau=1e-5 vs {:.4} at tau=1, ratio {ratio:.3} (needs < 0.5)",
            cold.train_topk, warm.train_topk
        ),
    )
}

fn main() -> ExitCode {
    let checks: [Check; 13] = [
        ("A1", "forward passes vs enumeration", esp_oracle),
        ("A2", "backward pass vs enumeration", backward_oracle),
        ("A3", "approximation error identity", approximation_error),
        ("A4", "smooth loss vs enumeration", loss_oracle),
        ("A5", "gradient check", gradient_check),
        ("A6", "loss properties", propositions),
        ("A7", "cross-entropy reduction", cross_entropy_reduction),
        ("A8", "stability sweep", stability_sweep),
        ("A9", "forward scaling", scaling),
        ("A10", "top-k marginals", marginals),
        ("A11", "margin and regularization equivalence", margin_equivalence),
        ("A12", "noise robustness", noise_robustness),
        ("A13", "temperature effect", temperature_effect),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let (pass, detail) = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(Ok(o)) => (o.pass, o.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        failed += usize::from(!pass);
        println!("{id} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
