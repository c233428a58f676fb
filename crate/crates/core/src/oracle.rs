//! Brute-force references.
//!
//! Everything here enumerates subsets directly in 64-bit arithmetic and
//! shares no code with the fast paths, so it can serve as ground truth in
//! tests, the acceptance suite and the `gradcheck` command. Exponential
//! cost; size guards keep callers honest.

use crate::config::LossConfig;
use crate::error::{usage, Result};

/// Largest input length accepted by [`brute_sigma`].
pub const MAX_BRUTE_N: usize = 25;
/// Largest number of k-subsets accepted by [`brute_smooth_loss`].
pub const MAX_BRUTE_SUBSETS: u64 = 1_000_000;

/// All k-subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct SubsetIterator {
    n: usize,
    current: Option<Vec<usize>>,
}

impl SubsetIterator {
    pub fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        SubsetIterator { n, current }
    }
}

impl Iterator for SubsetIterator {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        // rightmost position that can still move
        let mut pos = k;
        while pos > 0 && next[pos - 1] == self.n - k + pos - 1 {
            pos -= 1;
        }
        if pos > 0 {
            next[pos - 1] += 1;
            for q in pos..k {
                next[q] = next[q - 1] + 1;
            }
            self.current = Some(next);
        }
        Some(out)
    }
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `σ_j(e)` by summing the products of all j-subsets.
pub fn brute_sigma(e: &[f64], j: usize) -> Result<f64> {
    if e.len() > MAX_BRUTE_N {
        return usage(format!("brute-force σ limited to n <= {MAX_BRUTE_N}, got {}", e.len()));
    }
    Ok(SubsetIterator::new(e.len(), j)
        .map(|sub| sub.iter().map(|&q| e[q]).product::<f64>())
        .sum())
}

/// `δ_{j,i} = σ_{j-1}(e without e_i)`.
pub fn brute_delta(e: &[f64], j: usize, i: usize) -> Result<f64> {
    if j < 1 || i >= e.len() {
        return usage(format!("brute_delta needs j >= 1 and i < n, got j = {j}, i = {i}"));
    }
    let rest: Vec<f64> = e.iter().enumerate().filter(|(q, _)| *q != i).map(|(_, &v)| v).collect();
    brute_sigma(&rest, j - 1)
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Smooth loss by enumerating every k-tuple:
///
/// `τ ln Σ_Y exp((α[y∉Y] + Σ_Y s/k)/τ) - τ ln Σ_{Y∋y} exp(Σ_Y s/(kτ))`.
pub fn brute_smooth_loss(s: &[f64], y: usize, cfg: &LossConfig) -> Result<f64> {
    let (n, k, tau) = (s.len(), cfg.k, cfg.tau);
    if binomial(n, k) > MAX_BRUTE_SUBSETS as f64 {
        return usage(format!("C({n}, {k}) tuples exceed the enumeration limit"));
    }
    if k < 1 || k >= n || y >= n || !(tau > 0.0) {
        return usage("brute_smooth_loss needs 1 <= k < n, y < n and tau > 0");
    }
    let kf = k as f64;
    let mut all = Vec::new();
    let mut with_y = Vec::new();
    for sub in SubsetIterator::new(n, k) {
        let mean = sub.iter().map(|&q| s[q]).sum::<f64>() / kf;
        if sub.contains(&y) {
            all.push(mean / tau);
            with_y.push(mean / tau);
        } else {
            all.push((cfg.alpha + mean) / tau);
        }
    }
    Ok(tau * (lse(&all) - lse(&with_y)))
}

/// Top-k marginal of every label by enumerating the k-subsets that contain it.
pub fn brute_marginals(s: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = s.len();
    if binomial(n, k) > MAX_BRUTE_SUBSETS as f64 {
        return usage(format!("C({n}, {k}) tuples exceed the enumeration limit"));
    }
    let mut acc = vec![0.0; n];
    for sub in SubsetIterator::new(n, k) {
        let w = sub.iter().map(|&q| s[q]).sum::<f64>().exp();
        for &q in &sub {
            acc[q] += w;
        }
    }
    let total: f64 = acc.iter().sum();
    Ok(acc.into_iter().map(|v| v / total).collect())
}

/// Central finite differences `(f(s + h e_j) - f(s - h e_j)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, s: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = s.to_vec();
    (0..s.len())
        .map(|j| {
            x[j] = s[j] + h;
            let up = f(&x);
            x[j] = s[j] - h;
            let down = f(&x);
            x[j] = s[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_j |a_j - b_j| / max(max_j |b_j|, floor)`: error relative to the
/// scale of the reference gradient.
pub fn max_relative_error(a: &[f64], reference: &[f64], floor: f64) -> f64 {
    let scale = reference.iter().fold(floor, |m, v| m.max(v.abs()));
    a.iter().zip(reference).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
