//! Estimators and reference laws: ECDF and Kolmogorov-Smirnov distances,
//! Gaussian and Brownian-supremum CDFs, Hill tail indices, variance-ratio
//! scans and covariance diagnostics for path ensembles.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, mean, sample_covariance, sample_variance};

/// IQR of the standard normal.
const NORMAL_IQR: f64 = 1.348_979_500_392_163_5;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(&bad) = sample.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        sample.sort_by(f64::total_cmp);
        Ok(Self { sorted: sample })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{x_i <= x} / m`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Linear-interpolation quantile (type 7).
    pub fn quantile(&self, p: f64) -> f64 {
        let m = self.len();
        let h = (m - 1) as f64 * p.clamp(0.0, 1.0);
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(m - 1);
        self.sorted[lo] + (h - lo as f64) * (self.sorted[hi] - self.sorted[lo])
    }

    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let m = self.len() as f64;
        self.sorted.iter().enumerate().fold(0.0, |acc, (i, &x)| {
            let f = cdf(x);
            acc.max(((i + 1) as f64 / m - f).abs()).max((i as f64 / m - f).abs())
        })
    }

    /// Gaussian-equivalent variance from the interquartile range.
    pub fn robust_variance(&self) -> f64 {
        let iqr = self.quantile(0.75) - self.quantile(0.25);
        (iqr / NORMAL_IQR).powi(2)
    }
}

pub fn ecdf_eval(dist: &EmpiricalDistribution, x: f64) -> f64 {
    dist.ecdf(x)
}

pub fn ks_distance(dist: &EmpiricalDistribution, cdf: impl Fn(f64) -> f64) -> f64 {
    dist.ks_distance(cdf)
}

/// `Phi(x / sigma)`.
pub fn gaussian_cdf(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(std_normal_cdf(x / sigma))
}

#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal quantile by Newton refinement of a rational start.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // Tukey lambda start, then Newton on erfc
    let mut z = 4.91 * (p.powf(0.14) - (1.0 - p).powf(0.14));
    for _ in 0..6 {
        let f = std_normal_cdf(z) - p;
        let d = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if d == 0.0 {
            break;
        }
        z -= f / d;
    }
    z
}

/// Law of `sup_{t <= 1} sigma W(t)`: `2 Phi(x / sigma) - 1` for `x >= 0`.
pub fn brownian_sup_cdf(x: f64, sigma: f64) -> Result<f64> {
    let p = gaussian_cdf(x, sigma)?;
    Ok(if x < 0.0 { 0.0 } else { 2.0 * p - 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIndexEstimate {
    pub gamma: f64,
    pub k: usize,
    pub tail_index: f64,
}

/// Hill estimator on the top `k` order statistics.
pub fn hill_estimator(dist: &EmpiricalDistribution, k: usize) -> Result<TailIndexEstimate> {
    let m = dist.len();
    if k < 1 || k >= m {
        return Err(Error::InvalidParameter(format!("Hill window k = {k} needs 1 <= k < m = {m}")));
    }
    let x = dist.sorted();
    let threshold = x[m - k - 1];
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!("non-positive order statistic {threshold} in Hill window")));
    }
    let lt = threshold.ln();
    let gamma = x[m - k..].iter().map(|v| v.ln() - lt).sum::<f64>() / k as f64;
    Ok(TailIndexEstimate { gamma, k, tail_index: 1.0 / gamma })
}

pub fn default_hill_k(m: usize) -> usize {
    (((m as f64).powf(0.6) + 1e-9).floor() as usize).clamp(1, m.saturating_sub(1).max(1))
}

/// Hill estimates on a logarithmic grid of `k` in `[m^0.4, m^0.8]`.
pub fn hill_sweep(dist: &EmpiricalDistribution, points: usize) -> Result<Vec<TailIndexEstimate>> {
    let m = dist.len() as f64;
    let (lo, hi) = (m.powf(0.4), m.powf(0.8));
    let mut ks: Vec<usize> = (0..points.max(2))
        .map(|i| (lo * (hi / lo).powf(i as f64 / (points.max(2) - 1) as f64)).round() as usize)
        .filter(|&k| k >= 1 && k < dist.len())
        .collect();
    ks.dedup();
    ks.into_iter().map(|k| hill_estimator(dist, k)).collect()
}

/// `x^alpha P(X > x)` at the `k`-th largest observation: the tail constant
/// `C` in `P(X > x) ~ C x^-alpha`.
pub fn tail_constant(dist: &EmpiricalDistribution, alpha: f64, k: usize) -> Result<f64> {
    let m = dist.len();
    if k < 1 || k >= m {
        return Err(Error::InvalidParameter(format!("tail window k = {k} needs 1 <= k < m = {m}")));
    }
    let x = dist.sorted();
    let u = x[m - k - 1];
    let above = m - x.partition_point(|&v| v <= u);
    Ok(u.powf(alpha) * above as f64 / m as f64)
}

/// Median of the tail constant over a geometric sweep of `k` in
/// `[m^0.4, m^0.7]`.
pub fn tail_constant_estimate(dist: &EmpiricalDistribution, alpha: f64) -> Result<f64> {
    let m = dist.len() as f64;
    let (lo, hi) = (m.powf(0.4), m.powf(0.7));
    let mut cs = Vec::new();
    for i in 0..9 {
        let k = (lo * (hi / lo).powf(i as f64 / 8.0)).round() as usize;
        if k >= 1 && k < dist.len() {
            cs.push(tail_constant(dist, alpha, k)?);
        }
    }
    if cs.is_empty() {
        return Err(Error::InsufficientData("sample too small for a tail fit".into()));
    }
    cs.sort_by(f64::total_cmp);
    Ok(cs[cs.len() / 2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n: u64,
    pub members: usize,
    pub variance: f64,
    pub robust_variance: f64,
    pub ratio_n: f64,
    pub ratio_n_log_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceScan {
    pub rows: Vec<VarianceRow>,
    /// Least-squares slope of `ln Var(S_n)` against `ln n`.
    pub slope: Option<f64>,
    pub degenerate: bool,
}

/// Variances of ensemble sums over an ascending grid of `n`.
pub fn variance_ratio_scan(sums: &[(u64, Vec<f64>)]) -> Result<VarianceScan> {
    let mut rows = Vec::with_capacity(sums.len());
    for (n, s) in sums {
        if s.len() < 100 {
            return Err(Error::InsufficientData(format!("{} ensemble members at n = {n}, need >= 100", s.len())));
        }
        let variance = sample_variance(s);
        let nf = *n as f64;
        rows.push(VarianceRow {
            n: *n,
            members: s.len(),
            variance,
            robust_variance: EmpiricalDistribution::new(s.clone())?.robust_variance(),
            ratio_n: variance / nf,
            ratio_n_log_n: variance / (nf * nf.ln()),
        });
    }
    let degenerate = rows.iter().any(|r| !(r.variance > 0.0));
    let slope = if degenerate || rows.len() < 2 {
        None
    } else {
        let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.variance.ln()).collect();
        Some(linear_fit(&xs, &ys).0)
    };
    Ok(VarianceScan { rows, slope, degenerate })
}

/// IQR-based scale, matched to the normal standard deviation.
fn robust_scale(xs: &[f64]) -> Result<f64> {
    Ok(EmpiricalDistribution::new(xs.to_vec())?.robust_variance().sqrt())
}

/// Spearman rank correlation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    correlation(&ranks(xs), &ranks(ys))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let mid = 0.5 * (i + j) as f64;
        for &k in &idx[i..=j] {
            r[k] = mid;
        }
        i = j + 1;
    }
    r
}

/// Gaussian-consistent correlation from ranks: `2 sin(pi rho_S / 6)`.
pub fn robust_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData("robust correlation needs two equal samples of size >= 2".into()));
    }
    Ok(2.0 * (std::f64::consts::PI * spearman(xs, ys) / 6.0).sin())
}

/// Robust covariance: IQR scales combined with the rank correlation.
pub fn robust_covariance(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (sx, sy) = (robust_scale(xs)?, robust_scale(ys)?);
    Ok(sx * sy * robust_correlation(xs, ys)?)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let d = (sample_variance(xs) * sample_variance(ys)).sqrt();
    if d == 0.0 {
        0.0
    } else {
        sample_covariance(xs, ys) / d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub grid: Vec<f64>,
    pub paths: usize,
    /// Robust (IQR) variance of the final value.
    pub sigma2_hat: f64,
    /// Sample variance of the final value.
    pub sample_sigma2: f64,
    pub covariance: Vec<Vec<f64>>,
    pub robust_covariance: Vec<Vec<f64>>,
    /// `max |robust Cov(s, t) - sigma2_hat min(s, t)| / sigma2_hat`.
    pub max_rel_deviation: f64,
    pub sample_max_rel_deviation: f64,
    pub increment_correlation: f64,
    pub robust_increment_correlation: f64,
}

/// Covariance structure of path snapshots: `snapshots[p][i]` is path `p` at
/// `grid[i]`. The grid must contain 0.5 and end at 1.
pub fn covariance_increments_report(snapshots: &[Vec<f64>], grid: &[f64]) -> Result<CovarianceReport> {
    if snapshots.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 paths".into()));
    }
    if grid.is_empty() || grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidParameter("time grid must lie in (0, 1]".into()));
    }
    let g = grid.len();
    let cols: Vec<Vec<f64>> = (0..g).map(|i| snapshots.iter().map(|p| p[i]).collect()).collect();
    let last = &cols[g - 1];
    let sigma2_hat = EmpiricalDistribution::new(last.clone())?.robust_variance();
    let sample_sigma2 = sample_variance(last);
    let mut cov = vec![vec![0.0; g]; g];
    let mut rcov = vec![vec![0.0; g]; g];
    let mut dev: f64 = 0.0;
    let mut sdev: f64 = 0.0;
    for i in 0..g {
        for j in 0..g {
            cov[i][j] = sample_covariance(&cols[i], &cols[j]);
            rcov[i][j] = robust_covariance(&cols[i], &cols[j])?;
            let m = grid[i].min(grid[j]);
            dev = dev.max((rcov[i][j] - sigma2_hat * m).abs() / sigma2_hat);
            sdev = sdev.max((cov[i][j] - sample_sigma2 * m).abs() / sample_sigma2);
        }
    }
    let half = grid
        .iter()
        .position(|&t| (t - 0.5).abs() < 1e-12)
        .ok_or_else(|| Error::InvalidParameter("time grid must contain 0.5".into()))?;
    let first: Vec<f64> = cols[half].clone();
    let second: Vec<f64> = last.iter().zip(&cols[half]).map(|(a, b)| a - b).collect();
    Ok(CovarianceReport {
        grid: grid.to_vec(),
        paths: snapshots.len(),
        sigma2_hat,
        sample_sigma2,
        covariance: cov,
        robust_covariance: rcov,
        max_rel_deviation: dev,
        sample_max_rel_deviation: sdev,
        increment_correlation: correlation(&first, &second),
        robust_increment_correlation: robust_correlation(&first, &second)?,
    })
}

/// Mean and standard error of a sample.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (sample_variance(xs) / xs.len() as f64).sqrt())
}
