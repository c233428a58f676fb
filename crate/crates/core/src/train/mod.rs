//! Linear classifiers trained with mini-batch SGD on the toy data.

pub mod data;
pub mod margin;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::LossConfig;
use crate::error::{usage, Error, Result};
use crate::loss::{cross_entropy_grad, smooth_loss_grad, topk_prediction, ScoreBatch};

pub use data::{class_means, generate_dataset, Dataset, NoisySpec, Splits};
pub use margin::{margin_equivalence_check, solve_top1_svm, MarginReport, MarginStatus, SvmSolution};

/// Scores `wᵀx` with `w` stored row-major as `dim × n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub dim: usize,
    pub n_classes: usize,
    pub lambda: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize, n_classes: usize, lambda: f64) -> Result<Self> {
        if dim == 0 || n_classes < 2 {
            return usage(format!("model needs dim >= 1 and at least 2 classes, got {dim} x {n_classes}"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return usage(format!("regularization must be nonnegative, got {lambda}"));
        }
        Ok(LinearModel { weights: vec![0.0; dim * n_classes], dim, n_classes, lambda })
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_classes];
        for (f, &xf) in x.iter().enumerate() {
            let row = &self.weights[f * self.n_classes..(f + 1) * self.n_classes];
            for (sc, w) in s.iter_mut().zip(row) {
                *sc += xf * w;
            }
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Top-1 and top-k accuracy against `labels`.
    pub fn accuracy(&self, data: &Dataset, labels: &[usize], k: usize) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Ok((0.0, 0.0));
        }
        let (mut top1, mut topk) = (0usize, 0usize);
        for (i, &y) in labels.iter().enumerate() {
            let s = self.scores(data.sample(i));
            top1 += usize::from(topk_prediction(&s, 1)?[0] == y);
            topk += usize::from(topk_prediction(&s, k)?.contains(&y));
        }
        let n = data.len() as f64;
        Ok((top1 as f64 / n, topk as f64 / n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    SmoothTopk,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" | "cross-entropy" | "cross_entropy" => Ok(LossKind::CrossEntropy),
            "smooth" | "smooth-topk" | "smooth_topk" => Ok(LossKind::SmoothTopk),
            _ => usage(format!("unknown loss '{s}' (expected ce or smooth)")),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "ce",
            LossKind::SmoothTopk => "smooth",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// `k` is also the rank used for top-k accuracy.
    pub loss_cfg: LossConfig,
    pub epochs: usize,
    pub lr: f64,
    /// Step size at epoch `t` is `lr / (1 + lr_decay * t)`.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(loss: LossKind, k: usize) -> Self {
        TrainConfig { loss, loss_cfg: LossConfig::new(k), epochs: 30, lr: 0.1, lr_decay: 0.1, batch_size: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training objective (loss plus regularizer) over the epoch's batches.
    pub loss: f64,
    pub train_top1: f64,
    pub train_topk: f64,
    pub val_top1: f64,
    pub val_topk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub k: usize,
    pub epochs: Vec<EpochStats>,
    /// Test accuracy against clean labels.
    pub test_top1: f64,
    pub test_topk: f64,
}

/// Per-sample losses and score gradients for one batch.
fn batch_grads(
    model: &LinearModel,
    data: &Dataset,
    idx: &[usize],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.n_classes;
    let mut scores = Vec::with_capacity(idx.len() * n);
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        scores.extend(model.scores(data.sample(i)));
        labels.push(data.labels[i]);
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { epoch, reason: "non-finite scores".into() });
    }
    match cfg.loss {
        LossKind::SmoothTopk => {
            let out = smooth_loss_grad(&ScoreBatch::new(scores, n, labels)?, &cfg.loss_cfg)?;
            Ok((out.losses, out.grads))
        }
        LossKind::CrossEntropy => {
            let mut losses = Vec::with_capacity(idx.len());
            let mut grads = Vec::with_capacity(idx.len() * n);
            for (row, &y) in scores.chunks(n).zip(&labels) {
                let (l, g) = cross_entropy_grad(row, y)?;
                losses.push(l);
                grads.extend(g);
            }
            Ok((losses, grads))
        }
    }
}

/// Mini-batch SGD on `λ/2 ‖w‖² + mean loss`, updating `model` in place.
pub fn train(model: &mut LinearModel, data: &Splits, cfg: &TrainConfig) -> Result<TrainReport> {
    let train_set = &data.train;
    if train_set.dim != model.dim || train_set.n_classes != model.n_classes {
        return usage(format!(
            "model is {} x {} but data is {} x {}",
            model.dim, model.n_classes, train_set.dim, train_set.n_classes
        ));
    }
    if cfg.batch_size == 0 {
        return usage("batch size must be positive");
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite() && cfg.lr_decay >= 0.0) {
        return usage(format!("invalid learning rate {} / decay {}", cfg.lr, cfg.lr_decay));
    }
    let k = cfg.loss_cfg.k;
    if k < 1 || k >= model.n_classes {
        return usage(format!("k = {k} out of range for {} classes", model.n_classes));
    }
    let (d, n) = (model.dim, model.n_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport { k, epochs: Vec::with_capacity(cfg.epochs), test_top1: 0.0, test_topk: 0.0 };
    let mut wgrad = vec![0.0; d * n];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let step = cfg.lr / (1.0 + cfg.lr_decay * epoch as f64);
        let (mut total, mut batches) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let (losses, grads) = batch_grads(model, train_set, idx, cfg, epoch)?;
            let mean = losses.iter().sum::<f64>() / idx.len() as f64;
            let objective = mean + 0.5 * model.lambda * model.norm_sq();
            if !objective.is_finite() {
                return Err(Error::Diverged { epoch, reason: format!("training objective became {objective}") });
            }
            total += objective;
            batches += 1;

            wgrad.iter_mut().zip(&model.weights).for_each(|(g, w)| *g = model.lambda * w);
            let scale = 1.0 / idx.len() as f64;
            for (&i, gs) in idx.iter().zip(grads.chunks(n)) {
                for (f, &xf) in train_set.sample(i).iter().enumerate() {
                    let row = &mut wgrad[f * n..(f + 1) * n];
                    for (wg, g) in row.iter_mut().zip(gs) {
                        *wg += scale * xf * g;
                    }
                }
            }
            model.weights.iter_mut().zip(&wgrad).for_each(|(w, g)| *w -= step * g);
            if model.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Diverged { epoch, reason: "non-finite weights".into() });
            }
        }
        let (train_top1, train_topk) = model.accuracy(train_set, &train_set.labels, k)?;
        let (val_top1, val_topk) = model.accuracy(&data.val, &data.val.labels, k)?;
        report.epochs.push(EpochStats {
            epoch,
            loss: if batches > 0 { total / batches as f64 } else { 0.0 },
            train_top1,
            train_topk,
            val_top1,
            val_topk,
        });
    }
    let (test_top1, test_topk) = model.accuracy(&data.test, &data.test.clean_labels, k)?;
    report.test_top1 = test_top1;
    report.test_topk = test_topk;
    Ok(report)
}
