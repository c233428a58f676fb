//! Synthetic coarse/fine classification data with within-coarse label noise.
//!
//! Class `c = coarse * g + fine` has mean `R e_coarse + σ e_{G + fine}`: the
//! coarse centres are `6σ` apart and the fine offsets are orthogonal with
//! norm `σ`, so fine classes of one coarse class overlap heavily while the
//! coarse class is easy. All means have the same norm, so a linear score
//! `wᵀx` without bias is enough to represent the nearest-mean rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{usage, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoisySpec {
    pub coarse: usize,
    pub fine_per_coarse: usize,
    pub dim: usize,
    pub samples: usize,
    /// Probability of replacing a training label by a uniform fine label of
    /// the same coarse class (possibly itself).
    pub noise: f64,
    pub seed: u64,
    /// Within-class standard deviation.
    pub sigma: f64,
}

impl Default for NoisySpec {
    fn default() -> Self {
        NoisySpec { coarse: 10, fine_per_coarse: 5, dim: 20, samples: 5000, noise: 0.0, seed: 0, sigma: 1.0 }
    }
}

impl NoisySpec {
    pub fn n_classes(&self) -> usize {
        self.coarse * self.fine_per_coarse
    }

    fn validate(&self) -> Result<()> {
        if self.fine_per_coarse < 2 {
            return usage(format!("need at least 2 fine labels per coarse label, got {}", self.fine_per_coarse));
        }
        if self.samples < 10 {
            return usage(format!("need at least 10 samples, got {}", self.samples));
        }
        if self.coarse < 1 {
            return usage("need at least one coarse label");
        }
        if self.dim < self.coarse + self.fine_per_coarse {
            return usage(format!(
                "feature dimension {} is below coarse + fine = {}",
                self.dim,
                self.coarse + self.fine_per_coarse
            ));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return usage(format!("noise must lie in [0, 1], got {}", self.noise));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return usage(format!("sigma must be positive, got {}", self.sigma));
        }
        Ok(())
    }
}

/// Row-major features with training labels and the labels before noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub labels: Vec<usize>,
    pub clean_labels: Vec<usize>,
    pub dim: usize,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, labels: Vec<usize>, dim: usize, n_classes: usize) -> Result<Self> {
        if dim == 0 || x.len() != labels.len() * dim {
            return usage(format!("{} features do not match {} samples of dimension {dim}", x.len(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return usage(format!("label {bad} out of range for {n_classes} classes"));
        }
        Ok(Dataset { clean_labels: labels.clone(), x, labels, dim, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    fn subset(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            x: self.x[range.start * self.dim..range.end * self.dim].to_vec(),
            labels: self.labels[range.clone()].to_vec(),
            clean_labels: self.clean_labels[range].to_vec(),
            dim: self.dim,
            n_classes: self.n_classes,
        }
    }
}

/// 70/15/15 split. Train and validation carry noisy labels; test labels are clean.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Class means as a row-major `n_classes × dim` matrix.
pub fn class_means(spec: &NoisySpec) -> Vec<f64> {
    let (g, d) = (spec.fine_per_coarse, spec.dim);
    let radius = 6.0 * spec.sigma / std::f64::consts::SQRT_2;
    let mut means = vec![0.0; spec.n_classes() * d];
    for c in 0..spec.n_classes() {
        means[c * d + c / g] = radius;
        means[c * d + spec.coarse + c % g] = spec.sigma;
    }
    means
}

pub fn generate_dataset(spec: &NoisySpec) -> Result<Splits> {
    spec.validate()?;
    let (n, g, d) = (spec.n_classes(), spec.fine_per_coarse, spec.dim);
    let means = class_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = Vec::with_capacity(spec.samples * d);
    let mut clean = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let c = rng.random_range(0..n);
        for f in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x.push(means[c * d + f] + spec.sigma * z);
        }
        clean.push(c);
    }
    let mut all = Dataset::new(x, clean, d, n)?;
    let n_train = spec.samples * 70 / 100;
    let n_val = spec.samples * 15 / 100;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x05ee_d0f0_015e);
    for y in &mut all.labels[..n_train + n_val] {
        if noise_rng.random::<f64>() < spec.noise {
            *y = (*y / g) * g + noise_rng.random_range(0..g);
        }
    }
    Ok(Splits {
        train: all.subset(0..n_train),
        val: all.subset(n_train..n_train + n_val),
        test: all.subset(n_train + n_val..spec.samples),
    })
}
