use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::covariance::fgn_autocovariance;
use super::kernel::{kernel_integral, kernel_normalization};
use super::{gram_matrix, validate_hurst, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::io::csv_table;
use crate::rng::StreamSeed;
use crate::tolerances::CIRCULANT_NEGATIVE_EIGEN;

/// Path generation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cholesky,
    Circulant,
    /// Discretised Volterra representation; a validation route only.
    Volterra,
}

impl Method {
    /// Largest grid on which Cholesky is the default.
    pub const CHOLESKY_LIMIT: usize = 1024;

    pub fn default_for(n_steps: usize) -> Self {
        if n_steps <= Self::CHOLESKY_LIMIT {
            Method::Cholesky
        } else {
            Method::Circulant
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cholesky => "cholesky",
            Method::Circulant => "circulant",
            Method::Volterra => "volterra",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Method::Cholesky),
            "circulant" => Ok(Method::Circulant),
            "volterra" => Ok(Method::Volterra),
            other => domain(format!("unknown sampling method `{other}`")),
        }
    }
}

/// Decisions taken while building a sampler, recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerNote {
    Fallback { from: Method, to: Method, reason: String },
    ClippedEigenvalues { count: usize, most_negative: f64 },
}

/// A sampled fBm path on a uniform grid, `values[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmPath {
    grid: TimeGrid,
    hurst: f64,
    values: Vec<f64>,
    seed: StreamSeed,
    method: Method,
}

impl FbmPath {
    /// Wraps externally produced values; checks length and the origin.
    pub fn from_values(grid: TimeGrid, hurst: f64, values: Vec<f64>, seed: StreamSeed, method: Method) -> Result<Self> {
        validate_hurst(hurst)?;
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if values[0] != 0.0 {
            return domain("fBm paths start at zero");
        }
        Ok(Self { grid, hurst, values, seed, method })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn seed(&self) -> StreamSeed {
        self.seed
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Keeps every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Ok(Self { grid, values, ..self.clone() })
    }

    /// CSV with header `t,value`.
    pub fn to_csv(&self) -> String {
        csv_table(
            &["t", "value"],
            self.grid.nodes().into_iter().zip(&self.values).map(|(t, v)| vec![t, *v]),
        )
    }
}

enum Kind {
    /// Packed lower-triangular rows of the Cholesky factor.
    Cholesky { lower: Vec<f64> },
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>>, step_scale: f64 },
    /// Packed rows of cell weights; row `k` spans `(k+1)·fine` cells.
    Volterra { weights: Vec<f64>, fine: usize, inv_sqrt_cell: f64 },
}

/// Precomputed factorisation, reusable across an ensemble.
pub struct FbmSampler {
    grid: TimeGrid,
    hurst: f64,
    method: Method,
    kind: Kind,
    notes: Vec<SamplerNote>,
}

impl fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbmSampler")
            .field("grid", &self.grid)
            .field("hurst", &self.hurst)
            .field("method", &self.method)
            .field("notes", &self.notes)
            .finish()
    }
}

/// Fine Volterra cells targeted over the whole horizon.
const VOLTERRA_TARGET_CELLS: usize = 4096;

impl FbmSampler {
    pub fn new(grid: TimeGrid, hurst: f64, method: Method) -> Result<Self> {
        validate_hurst(hurst)?;
        let mut notes = Vec::new();
        let (method, kind) = match method {
            Method::Cholesky => (Method::Cholesky, cholesky_kind(&grid, hurst)?),
            Method::Circulant => match circulant_kind(&grid, hurst) {
                Ok((kind, clipped)) => {
                    notes.extend(clipped);
                    (Method::Circulant, kind)
                }
                Err(reason) => {
                    notes.push(SamplerNote::Fallback { from: Method::Circulant, to: Method::Cholesky, reason });
                    (Method::Cholesky, cholesky_kind(&grid, hurst)?)
                }
            },
            Method::Volterra => {
                let fine = VOLTERRA_TARGET_CELLS.div_ceil(grid.n_steps()).max(1);
                (Method::Volterra, volterra_kind(&grid, hurst, fine)?)
            }
        };
        Ok(Self { grid, hurst, method, kind, notes })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// The method actually used (after any fallback).
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn notes(&self) -> &[SamplerNote] {
        &self.notes
    }

    pub fn sample(&self, seed: StreamSeed) -> FbmPath {
        let mut rng = seed.rng();
        let n = self.grid.n_steps();
        let mut values = vec![0.0; n + 1];
        match &self.kind {
            Kind::Cholesky { lower } => {
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let mut offset = 0;
                for k in 0..n {
                    let row = &lower[offset..offset + k + 1];
                    values[k + 1] = row.iter().zip(&z).map(|(l, z)| l * z).sum();
                    offset += k + 1;
                }
            }
            Kind::Circulant { sqrt_eig, fft, step_scale } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                let mut acc = 0.0;
                for k in 0..n {
                    acc += buf[k].re * step_scale;
                    values[k + 1] = acc;
                }
            }
            Kind::Volterra { weights, fine, inv_sqrt_cell } => {
                let z: Vec<f64> = (0..n * fine).map(|_| rng.sample(StandardNormal)).collect();
                let mut offset = 0;
                for k in 0..n {
                    let len = (k + 1) * fine;
                    let row = &weights[offset..offset + len];
                    values[k + 1] = inv_sqrt_cell * row.iter().zip(&z).map(|(a, z)| a * z).sum::<f64>();
                    offset += len;
                }
            }
        }
        FbmPath { grid: self.grid, hurst: self.hurst, values, seed, method: self.method }
    }

    /// Paths `first..first + count` of the ensemble rooted at `base`, in
    /// index order regardless of scheduling.
    pub fn sample_ensemble(&self, base: u64, first: u64, count: usize) -> Vec<FbmPath> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.sample(StreamSeed::path(base, first + i)))
            .collect()
    }
}

/// Builds a sampler and draws a single path.
pub fn sample_fbm(grid: &TimeGrid, hurst: f64, seed: StreamSeed, method: Method) -> Result<FbmPath> {
    Ok(FbmSampler::new(*grid, hurst, method)?.sample(seed))
}

fn cholesky_kind(grid: &TimeGrid, hurst: f64) -> Result<Kind> {
    let n = grid.n_steps();
    let gram = gram_matrix(grid, hurst)?;
    let l = gram.cholesky().ok_or(Error::NotPositiveDefinite { n })?.unpack();
    let mut lower = Vec::with_capacity(n * (n + 1) / 2);
    for k in 0..n {
        for j in 0..=k {
            lower.push(l[(k, j)]);
        }
    }
    Ok(Kind::Cholesky { lower })
}

/// Eigenvalues of the minimal circulant embedding of unit-step fGn.
pub(crate) fn circulant_eigenvalues(n: usize, hurst: f64) -> Vec<f64> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex::new(fgn_autocovariance(lag, hurst), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

/// Zeroes tiny negative eigenvalues; rejects significant ones.
pub(crate) fn clip_eigenvalues(eig: &mut [f64]) -> std::result::Result<Option<SamplerNote>, String> {
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min < -CIRCULANT_NEGATIVE_EIGEN * max {
        return Err(format!("circulant embedding has eigenvalue {min:e} (max {max:e})"));
    }
    let count = eig.iter().filter(|&&l| l < 0.0).count();
    eig.iter_mut().for_each(|l| *l = l.max(0.0));
    Ok((count > 0).then_some(SamplerNote::ClippedEigenvalues { count, most_negative: min }))
}

fn circulant_kind(grid: &TimeGrid, hurst: f64) -> std::result::Result<(Kind, Option<SamplerNote>), String> {
    let n = grid.n_steps();
    let m = 2 * n;
    let mut eig = circulant_eigenvalues(n, hurst);
    let note = clip_eigenvalues(&mut eig)?;
    let sqrt_eig = eig.iter().map(|l| (l / m as f64).sqrt()).collect();
    let fft = FftPlanner::new().plan_fft_forward(m);
    let step_scale = grid.dt().powf(hurst);
    Ok((Kind::Circulant { sqrt_eig, fft, step_scale }, note))
}

fn volterra_kind(grid: &TimeGrid, hurst: f64, fine: usize) -> Result<Kind> {
    if hurst < 0.5 {
        return Err(Error::Unsupported(format!(
            "Volterra sampling for H < 1/2 needs an unspecified normalisation (H = {hurst})"
        )));
    }
    let n = grid.n_steps();
    let cell = grid.dt() / fine as f64;
    let nodes = grid.nodes();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let t = nodes[k + 1];
            let cells = (k + 1) * fine;
            if hurst == 0.5 {
                return vec![cell; cells];
            }
            // product midpoint rule: the s^{½−H} factor is integrated exactly
            // over each cell, the smooth remainder is taken at the midpoint
            let c = kernel_normalization(hurst).expect("H > 1/2");
            let q = 1.5 - hurst;
            (0..cells)
                .map(|j| {
                    let a = j as f64 * cell;
                    let b = if j + 1 == cells { t } else { (j + 1) as f64 * cell };
                    let power = (b.powf(q) - a.powf(q)) / q;
                    c * kernel_integral(t, 0.5 * (a + b), hurst) * power
                })
                .collect()
        })
        .collect();
    Ok(Kind::Volterra { weights: rows.concat(), fine, inv_sqrt_cell: 1.0 / cell.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed_and_method() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        for method in [Method::Cholesky, Method::Circulant, Method::Volterra] {
            let a = sample_fbm(&grid, 0.7, StreamSeed::path(3, 5), method).unwrap();
            let b = sample_fbm(&grid, 0.7, StreamSeed::path(3, 5), method).unwrap();
            let c = sample_fbm(&grid, 0.7, StreamSeed::path(3, 6), method).unwrap();
            assert_eq!(a.values(), b.values());
            assert_ne!(a.values(), c.values());
            assert_eq!(a.values()[0], 0.0);
            assert_eq!(a.method(), method);
        }
    }

    #[test]
    fn brownian_marginal_variance() {
        let grid = TimeGrid::new(0.7, 1).unwrap();
        let sampler = FbmSampler::new(grid, 0.5, Method::Cholesky).unwrap();
        let x: Vec<f64> = (0..100_000).map(|i| sampler.sample(StreamSeed::path(11, i)).value(1)).collect();
        let var = crate::stats::variance(&x);
        let se = crate::stats::variance_standard_error(&x);
        assert!((var - 0.7).abs() < 3.0 * se, "var {var} se {se}");
    }

    #[test]
    fn circulant_embedding_is_nonnegative() {
        for h in [0.1, 0.3, 0.5, 0.75, 0.95] {
            let mut eig = circulant_eigenvalues(256, h);
            assert!(clip_eigenvalues(&mut eig).is_ok());
            assert!(eig.iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn eigenvalue_clipping_policy() {
        let mut eig = vec![1.0, -1e-14, 0.5];
        let note = clip_eigenvalues(&mut eig).unwrap();
        assert_eq!(eig, vec![1.0, 0.0, 0.5]);
        assert!(matches!(note, Some(SamplerNote::ClippedEigenvalues { count: 1, .. })));
        let mut eig = vec![1.0, -1e-6];
        assert!(clip_eigenvalues(&mut eig).is_err());
        let mut eig = vec![1.0, 0.0];
        assert_eq!(clip_eigenvalues(&mut eig).unwrap(), None);
    }

    #[test]
    fn default_method_by_size() {
        assert_eq!(Method::default_for(1024), Method::Cholesky);
        assert_eq!(Method::default_for(1025), Method::Circulant);
        assert_eq!("volterra".parse::<Method>().unwrap(), Method::Volterra);
        assert!("davies".parse::<Method>().is_err());
    }

    #[test]
    fn volterra_rejects_rough_paths() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        assert!(matches!(FbmSampler::new(grid, 0.3, Method::Volterra), Err(Error::Unsupported(_))));
    }

    #[test]
    fn csv_export() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = sample_fbm(&grid, 0.6, StreamSeed::path(1, 0), Method::Cholesky).unwrap();
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,value");
        assert_eq!(lines.len(), 6);
        let last: Vec<f64> = lines[5].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last, vec![1.0, p.value(4)]);
    }

    #[test]
    fn from_values_checks() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let s = StreamSeed::path(0, 0);
        assert!(FbmPath::from_values(grid, 0.5, vec![0.0, 1.0, 2.0], s, Method::Cholesky).is_ok());
        assert!(FbmPath::from_values(grid, 0.5, vec![0.0, 1.0], s, Method::Cholesky).is_err());
        assert!(FbmPath::from_values(grid, 0.5, vec![1.0, 1.0, 2.0], s, Method::Cholesky).is_err());
    }
}
