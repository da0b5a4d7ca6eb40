//! Error, density and timing metrics for the online studies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::two_norm;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sample count mismatch: {left} vs {right}")]
    SampleMismatch { left: usize, right: usize },
    #[error("reference norms vanish, relative error undefined")]
    ZeroReference,
    #[error("density bin layouts differ")]
    BinMismatch,
    #[error("empty sample set")]
    Empty,
}

/// Mean relative Euclidean error over a sample set:
/// eps = (1/N) sum_n ||u_n - ref_n|| / ||ref_n||.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n_samples: usize,
    pub mean_relative: f64,
    pub max_relative: f64,
    pub per_sample: Vec<f64>,
}

pub fn relative_mean_error(
    approx: &[Vec<f64>],
    reference: &[Vec<f64>],
) -> Result<ErrorReport, MetricsError> {
    if approx.len() != reference.len() {
        return Err(MetricsError::SampleMismatch { left: approx.len(), right: reference.len() });
    }
    if approx.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut per_sample = Vec::with_capacity(approx.len());
    for (u, r) in approx.iter().zip(reference) {
        if u.len() != r.len() {
            return Err(MetricsError::SampleMismatch { left: u.len(), right: r.len() });
        }
        let denom = two_norm(r);
        if denom < 1e-300 {
            return Err(MetricsError::ZeroReference);
        }
        let diff: Vec<f64> = u.iter().zip(r).map(|(a, b)| a - b).collect();
        per_sample.push(two_norm(&diff) / denom);
    }
    let mean_relative = mean(&per_sample);
    let max_relative = per_sample.iter().cloned().fold(0.0, f64::max);
    Ok(ErrorReport { n_samples: per_sample.len(), mean_relative, max_relative, per_sample })
}

/// Compensated (Kahan) mean.
pub fn mean(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum / values.len() as f64
}

/// Monte Carlo mean of vector-valued samples, compensated per component.
pub fn mc_mean(samples: &[Vec<f64>]) -> Result<Vec<f64>, MetricsError> {
    let first = samples.first().ok_or(MetricsError::Empty)?;
    let n = first.len();
    let mut sum = vec![0.0; n];
    let mut comp = vec![0.0; n];
    for s in samples {
        if s.len() != n {
            return Err(MetricsError::SampleMismatch { left: s.len(), right: n });
        }
        for (k, &v) in s.iter().enumerate() {
            let y = v - comp[k];
            let t = sum[k] + y;
            comp[k] = (t - sum[k]) - y;
            sum[k] = t;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    Ok(sum.iter().map(|v| v * inv).collect())
}

/// Normalized histogram of scalar samples. Bin masses sum to one; samples
/// outside the given range are clamped into the end bins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
    /// probability mass per bin (not a density value; divide by bin width)
    pub masses: Vec<f64>,
}

impl DensityEstimate {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.bin_width()
    }
}

pub fn histogram_density(
    values: &[f64],
    lo: f64,
    hi: f64,
    n_bins: usize,
) -> Result<DensityEstimate, MetricsError> {
    if values.is_empty() || n_bins == 0 || !(lo < hi) {
        return Err(MetricsError::Empty);
    }
    let mut masses = vec![0.0; n_bins];
    let w = (hi - lo) / n_bins as f64;
    for &v in values {
        let k = (((v - lo) / w).floor() as isize).clamp(0, n_bins as isize - 1) as usize;
        masses[k] += 1.0;
    }
    let inv = 1.0 / values.len() as f64;
    for m in &mut masses {
        *m *= inv;
    }
    Ok(DensityEstimate { lo, hi, n_bins, masses })
}

/// Histograms two sample sets on a shared range pooled from both.
pub fn paired_densities(
    a: &[f64],
    b: &[f64],
    n_bins: usize,
) -> Result<(DensityEstimate, DensityEstimate), MetricsError> {
    let pooled_lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let pooled_hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    // widen a degenerate range so a constant signal still bins cleanly
    let (lo, hi) = if pooled_lo < pooled_hi {
        (pooled_lo, pooled_hi)
    } else {
        (pooled_lo - 0.5, pooled_lo + 0.5)
    };
    Ok((histogram_density(a, lo, hi, n_bins)?, histogram_density(b, lo, hi, n_bins)?))
}

/// L1 distance between two histogram densities on the same bins, integrated
/// over the range: sum_k |p_k - q_k| (masses already integrate the density
/// over each bin, so no width factor is needed).
pub fn l1_density_distance(
    p: &DensityEstimate,
    q: &DensityEstimate,
) -> Result<f64, MetricsError> {
    if p.n_bins != q.n_bins || p.lo != q.lo || p.hi != q.hi {
        return Err(MetricsError::BinMismatch);
    }
    Ok(p.masses.iter().zip(&q.masses).map(|(a, b)| (a - b).abs()).sum())
}

/// Gaussian kernel density estimate at given points, Silverman bandwidth.
pub fn kde_gaussian(values: &[f64], points: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::Empty);
    }
    let n = values.len() as f64;
    let mu = mean(values);
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let h = if sd > 0.0 { 1.06 * sd * n.powf(-0.2) } else { 1.0 };
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(points
        .iter()
        .map(|&x| {
            values
                .iter()
                .map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// Wall-clock accounting of one run, in seconds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TimingReport {
    pub offline_s: f64,
    pub online_total_s: f64,
    pub online_per_sample_s: f64,
    pub reference_total_s: f64,
    pub reference_per_sample_s: f64,
}

impl TimingReport {
    /// online cost relative to the reference, per sample
    pub fn speed_ratio(&self) -> Option<f64> {
        if self.reference_per_sample_s > 0.0 {
            Some(self.online_per_sample_s / self.reference_per_sample_s)
        } else {
            None
        }
    }
}
