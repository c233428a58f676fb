//! Subcommand bodies. Each returns its full output text and whether the
//! run passed; printing and exit codes are left to `main`.

use std::fmt::Write;

use smooth_topk::train::{generate_dataset, train, LinearModel, LossKind, NoisySpec, TrainConfig};
use smooth_topk::{
    aggregate_crops, gradcheck, hard_loss, smooth_loss_grad, stability_check, task_loss, time_forward, topk_marginals,
    ForwardAlgo, LossConfig, Precision, Result,
};

use crate::scorefile::ScoreFile;

/// Shortest round-trip form, switching to exponent notation for very small
/// or very large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub struct Output {
    pub text: String,
    pub ok: bool,
}

impl Output {
    fn pass(text: String) -> Self {
        Output { text, ok: true }
    }
}

pub fn loss(file: &ScoreFile, cfg: &LossConfig, hard: bool) -> Result<Output> {
    let batch = &file.batch;
    let losses: Vec<f64> = if hard {
        batch.rows().map(|(s, y)| hard_loss(s, y, cfg)).collect::<Result<_>>()?
    } else {
        smooth_loss_grad(batch, cfg)?.losses
    };
    let errors: Vec<u8> = batch.rows().map(|(s, y)| task_loss(s, y, cfg.k)).collect::<Result<_>>()?;

    let mut out = String::new();
    writeln!(out, "loss={}", if hard { "hard" } else { "smooth" }).unwrap();
    writeln!(out, "k={}", cfg.k).unwrap();
    if !hard {
        writeln!(out, "tau={}", cfg.tau).unwrap();
        writeln!(out, "precision={}", cfg.precision).unwrap();
    }
    writeln!(out, "alpha={}", cfg.alpha).unwrap();
    writeln!(out, "samples={}", batch.len()).unwrap();
    writeln!(out, "sample,label,loss,topk_error").unwrap();
    for (r, ((l, e), y)) in losses.iter().zip(&errors).zip(batch.labels()).enumerate() {
        writeln!(out, "{r},{y},{},{e}", num(*l)).unwrap();
    }
    let m = batch.len() as f64;
    writeln!(out, "mean_loss={}", num(losses.iter().sum::<f64>() / m)).unwrap();
    writeln!(out, "topk_error_rate={}", num(errors.iter().map(|&e| f64::from(e)).sum::<f64>() / m)).unwrap();
    Ok(Output::pass(out))
}

pub fn gradcheck_cmd(n: usize, cfg: &LossConfig, trials: usize, seed: u64, h: f64, tol: f64) -> Result<Output> {
    let r = gradcheck(n, cfg, trials, seed, h)?;
    let ok = r.max_rel_err <= tol && (trials == 0 || tol > 0.0);
    let mut out = String::new();
    writeln!(out, "n={n}\nk={}\ntau={}\nalpha={}", cfg.k, cfg.tau, cfg.alpha).unwrap();
    writeln!(out, "trials={trials}\nseed={seed}\nh={h}\ntol={tol}").unwrap();
    writeln!(out, "max_rel_err={}", num(r.max_rel_err)).unwrap();
    writeln!(out, "max_grad_sum={}", num(r.max_grad_sum)).unwrap();
    writeln!(out, "status={}", if ok { "pass" } else { "fail" }).unwrap();
    Ok(Output { text: out, ok })
}

#[allow(clippy::too_many_arguments)]
pub fn stability(
    n: usize,
    k: usize,
    taus: &[f64],
    precision: Precision,
    range: f64,
    batch_size: usize,
    seed: u64,
    linear: bool,
) -> Result<Output> {
    let batch = smooth_topk::harness::random_batch(n, batch_size, range, seed)?;
    let mut out = String::new();
    writeln!(out, "n={n}\nk={k}\nbatch={batch_size}\nscore_range={range}\nseed={seed}").unwrap();
    writeln!(out, "tau,precision,mode,stable,nonfinite").unwrap();
    for &tau in taus {
        let cfg = LossConfig::new(k).with_tau(tau).with_precision(precision);
        let row = stability_check(&batch, &cfg, linear)?;
        let mode = if linear { "linear" } else { "log" };
        let flag = if row.stable() { "yes" } else { "no" };
        writeln!(out, "{tau},{precision},{mode},{flag},{}", row.nonfinite).unwrap();
    }
    Ok(Output::pass(out))
}

pub fn bench(ns: &[usize], k: usize, batch: usize, repeats: usize, algos: &[ForwardAlgo], seed: u64) -> Result<Output> {
    let mut out = String::from("n,algo,mean_ms,std_ms\n");
    for &n in ns {
        for &algo in algos {
            let t = time_forward(n, k, batch, repeats, algo, seed)?;
            writeln!(out, "{},{},{:.4},{:.4}", t.n, t.algo.name(), t.mean_ms, t.std_ms).unwrap();
        }
    }
    Ok(Output::pass(out))
}

pub fn proba(file: &ScoreFile, k: usize, aggregate: bool) -> Result<Output> {
    let batch = &file.batch;
    let n = batch.n_classes();
    let mut out = String::new();
    writeln!(out, "k={k}\nsamples={}", batch.len()).unwrap();
    let header: Vec<String> = (0..n).map(|j| format!("p_{j}")).collect();
    writeln!(out, "row,{}", header.join(",")).unwrap();
    let fmt = |probs: &[f64]| probs.iter().map(|&p| num(p)).collect::<Vec<_>>().join(",");
    if aggregate {
        let rows: Vec<Vec<f64>> = batch.rows().map(|(s, _)| s.to_vec()).collect();
        writeln!(out, "aggregate,{}", fmt(&aggregate_crops(&rows, k)?.probs)).unwrap();
    } else {
        for (r, (s, _)) in batch.rows().enumerate() {
            writeln!(out, "{r},{}", fmt(&topk_marginals(s, k)?.probs)).unwrap();
        }
    }
    Ok(Output::pass(out))
}

pub fn train_toy(spec: &NoisySpec, cfg: &TrainConfig, lambda: f64) -> Result<Output> {
    let data = generate_dataset(spec)?;
    let mut model = LinearModel::zeros(spec.dim, spec.n_classes(), lambda)?;
    let report = train(&mut model, &data, cfg)?;
    let mut out = String::new();
    writeln!(out, "coarse={}\nfine_per_coarse={}\ndim={}", spec.coarse, spec.fine_per_coarse, spec.dim).unwrap();
    writeln!(out, "samples={}\nnoise={}\nseed={}", spec.samples, spec.noise, spec.seed).unwrap();
    let lc = &cfg.loss_cfg;
    writeln!(out, "loss={}\nk={}", cfg.loss, lc.k).unwrap();
    if cfg.loss == LossKind::SmoothTopk {
        writeln!(out, "tau={}\nalpha={}", lc.tau, lc.alpha).unwrap();
    }
    writeln!(out, "epochs={}\nlr={}\nlr_decay={}", cfg.epochs, cfg.lr, cfg.lr_decay).unwrap();
    writeln!(out, "batch={}\nlambda={lambda}", cfg.batch_size).unwrap();
    writeln!(out, "epoch,loss,train_top1,train_topk,val_top1,val_topk").unwrap();
    for e in &report.epochs {
        writeln!(
            out,
            "{},{:.6},{:.4},{:.4},{:.4},{:.4}",
            e.epoch, e.loss, e.train_top1, e.train_topk, e.val_top1, e.val_topk
        )
        .unwrap();
    }
    writeln!(out, "test_top1={:.4}\ntest_topk={:.4}", report.test_top1, report.test_topk).unwrap();
    Ok(Output::pass(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, 1.5, -2.25, 4.539889921686465e-5, 1e-300, 3e20, 1.3322787280490398] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.5), "1.5");
        assert_eq!(num(4.5e-5), "4.5e-5");
    }
}
