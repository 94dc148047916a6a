use serde::{Deserialize, Serialize};

use super::{FbmPath, FbmSampler, HurstVector, Method, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::StreamSeed;

/// `d` independent fBm components on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmVectorPath {
    components: Vec<FbmPath>,
    hurst: HurstVector,
}

impl FbmVectorPath {
    pub fn new(components: Vec<FbmPath>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::Domain("no components".into()))?;
        if components.iter().any(|c| c.grid() != first.grid()) {
            return Err(Error::GridMismatch("components must share one grid".into()));
        }
        let hurst = HurstVector::new(components.iter().map(|c| c.hurst()).collect())?;
        Ok(Self { components, hurst })
    }

    pub fn from_scalar(path: FbmPath) -> Self {
        Self::new(vec![path]).expect("single component is valid")
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.components[0].grid()
    }

    pub fn hurst(&self) -> &HurstVector {
        &self.hurst
    }

    pub fn components(&self) -> &[FbmPath] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &FbmPath {
        &self.components[i]
    }

    /// Writes `B^H(t_k)` into `out`.
    #[inline]
    pub fn node_into(&self, k: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.value(k);
        }
    }

    pub fn node(&self, k: usize) -> Vec<f64> {
        self.components.iter().map(|c| c.value(k)).collect()
    }

    /// Componentwise OU coupling with an independent fresh path.
    pub fn ou_couple(&self, fresh: &FbmVectorPath, theta: f64) -> Result<Self> {
        if fresh.dim() != self.dim() {
            return Err(Error::GridMismatch("dimension mismatch in coupling".into()));
        }
        let components = self
            .components
            .iter()
            .zip(&fresh.components)
            .map(|(p, f)| super::ou_couple(p, f, theta))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        Self::new(self.components.iter().map(|c| c.coarsen(factor)).collect::<Result<Vec<_>>>()?)
    }
}

/// One cached sampler per component.
#[derive(Debug)]
pub struct VectorSampler {
    samplers: Vec<FbmSampler>,
    hurst: HurstVector,
}

impl VectorSampler {
    pub fn new(grid: TimeGrid, hurst: &HurstVector, method: Method) -> Result<Self> {
        let mut samplers: Vec<FbmSampler> = Vec::with_capacity(hurst.dim());
        for &h in hurst.components() {
            // components with equal H share the same factorisation cost only once
            samplers.push(FbmSampler::new(grid, h, method)?);
        }
        Ok(Self { samplers, hurst: hurst.clone() })
    }

    pub fn dim(&self) -> usize {
        self.samplers.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.samplers[0].grid()
    }

    pub fn hurst(&self) -> &HurstVector {
        &self.hurst
    }

    pub fn samplers(&self) -> &[FbmSampler] {
        &self.samplers
    }

    /// Component `i` is drawn from `seed.component(i)`.
    pub fn sample(&self, seed: StreamSeed) -> FbmVectorPath {
        let components = self
            .samplers
            .iter()
            .enumerate()
            .map(|(i, s)| s.sample(seed.component(i)))
            .collect();
        FbmVectorPath { components, hurst: self.hurst.clone() }
    }
}

/// Independent components from split seeds.
pub fn sample_fbm_vector(grid: &TimeGrid, hurst: &HurstVector, seed: StreamSeed, method: Method) -> Result<FbmVectorPath> {
    Ok(VectorSampler::new(*grid, hurst, method)?.sample(seed))
}
