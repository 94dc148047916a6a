use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::rng::{lane, stream_rng};
use crate::stats::{mean, quantile_sorted, variance};

const CUTOFF: f64 = 8.0;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `1.06 σ̂ N^{−1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    1.06 * variance(samples).sqrt() * (samples.len() as f64).powf(-0.2)
}

/// One-dimensional Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct Kde {
    sorted: Vec<f64>,
    bandwidth: f64,
    mean: f64,
    sd: f64,
}

impl Kde {
    pub fn silverman(samples: &[f64]) -> Result<Self> {
        Self::with_bandwidth(samples, silverman_bandwidth(samples))
    }

    pub fn with_bandwidth(samples: &[f64], bandwidth: f64) -> Result<Self> {
        if samples.len() < 2 {
            return domain("a density estimate needs at least two samples");
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return domain(format!("bandwidth must be positive, got {bandwidth} (degenerate samples?)"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { mean: mean(samples), sd: variance(samples).sqrt(), sorted, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, z: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&v| v < z - CUTOFF * h);
        let hi = self.sorted.partition_point(|&v| v <= z + CUTOFF * h);
        let s: f64 = self.sorted[lo..hi]
            .iter()
            .map(|&v| {
                let u = (z - v) / h;
                (-0.5 * u * u).exp()
            })
            .sum();
        s * INV_SQRT_2PI / (h * self.sorted.len() as f64)
    }

    pub fn eval_grid(&self, zs: &[f64]) -> Vec<f64> {
        zs.par_iter().map(|&z| self.eval(z)).collect()
    }

    /// `n` equispaced points over `center ± 5σ̂`.
    pub fn grid(&self, center: f64, n: usize) -> Vec<f64> {
        let half = 5.0 * self.sd;
        (0..n).map(|i| center - half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
    }
}

/// Half-width of the bootstrap `level` band of the KDE at each `z`.
///
/// Each replicate resamples the data with replacement; replicates are
/// linearly binned onto `bins` cells before smoothing, which keeps 200
/// replicates of 10⁵ samples cheap. The band at `z` is
/// `(q_{1−a} − q_a) / 2` with `a = (1 − level)/2` over replicates.
pub fn bootstrap_band(kde: &Kde, zs: &[f64], replicates: usize, level: f64, bins: usize, seed: u64) -> Result<Vec<f64>> {
    if replicates < 2 || !(level > 0.0 && level < 1.0) || bins < 2 {
        return domain("bootstrap needs ≥ 2 replicates, level in (0, 1) and ≥ 2 bins");
    }
    let data = kde.samples();
    let n = data.len();
    let (lo, hi) = (data[0], data[n - 1]);
    let width = (hi - lo).max(f64::MIN_POSITIVE) / (bins - 1) as f64;
    let h = kde.bandwidth();
    // binning position of every sample, shared by all replicates
    let slots: Vec<(usize, f64)> = data
        .iter()
        .map(|&v| {
            let p = ((v - lo) / width).min((bins - 1) as f64);
            let i = (p.floor() as usize).min(bins - 2);
            (i, p - i as f64)
        })
        .collect();
    let curves: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, lane::BOOTSTRAP, r as u64);
            let mut w = vec![0.0; bins];
            for _ in 0..n {
                let (i, f) = slots[rng.random_range(0..n)];
                w[i] += 1.0 - f;
                w[i + 1] += f;
            }
            let reach = (CUTOFF * h / width).ceil() as isize;
            zs.iter()
                .map(|&z| {
                    let c = ((z - lo) / width).round() as isize;
                    let (a, b) = ((c - reach).max(0), (c + reach).min(bins as isize - 1));
                    let mut s = 0.0;
                    for j in a..=b {
                        let u = (z - (lo + j as f64 * width)) / h;
                        s += w[j as usize] * (-0.5 * u * u).exp();
                    }
                    s * INV_SQRT_2PI / (h * n as f64)
                })
                .collect()
        })
        .collect();
    let a = 0.5 * (1.0 - level);
    Ok((0..zs.len())
        .map(|k| {
            let mut col: Vec<f64> = curves.iter().map(|c| c[k]).collect();
            col.sort_by(f64::total_cmp);
            0.5 * (quantile_sorted(&col, 1.0 - a) - quantile_sorted(&col, a))
        })
        .collect())
}

/// Two-dimensional product-Gaussian KDE with Scott's rule `σ̂_i N^{−1/6}`.
#[derive(Debug, Clone)]
pub struct Kde2d {
    /// Sorted by the first coordinate.
    points: Vec<[f64; 2]>,
    bandwidth: [f64; 2],
}

impl Kde2d {
    pub fn new(points: &[[f64; 2]]) -> Result<Self> {
        if points.len() < 2 {
            return domain("a density estimate needs at least two samples");
        }
        let factor = (points.len() as f64).powf(-1.0 / 6.0);
        let bw = |i: usize| variance(&points.iter().map(|p| p[i]).collect::<Vec<_>>()).sqrt() * factor;
        let bandwidth = [bw(0), bw(1)];
        if !(bandwidth[0] > 0.0 && bandwidth[1] > 0.0) {
            return domain("degenerate two-dimensional samples");
        }
        let mut points = points.to_vec();
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Ok(Self { points, bandwidth })
    }

    pub fn bandwidth(&self) -> [f64; 2] {
        self.bandwidth
    }

    pub fn eval(&self, z: [f64; 2]) -> f64 {
        let [h0, h1] = self.bandwidth;
        let lo = self.points.partition_point(|p| p[0] < z[0] - CUTOFF * h0);
        let hi = self.points.partition_point(|p| p[0] <= z[0] + CUTOFF * h0);
        let s: f64 = self.points[lo..hi]
            .iter()
            .map(|p| {
                let u = (z[0] - p[0]) / h0;
                let v = (z[1] - p[1]) / h1;
                (-0.5 * (u * u + v * v)).exp()
            })
            .sum();
        s / (2.0 * std::f64::consts::PI * h0 * h1 * self.points.len() as f64)
    }
}
