use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform grid `t_k = k·t_end/n_steps`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return domain(format!("grid horizon must be positive and finite, got {t_end}"));
        }
        if n_steps == 0 {
            return domain("grid needs at least one step");
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n_steps);
        if k == self.n_steps {
            self.t_end
        } else {
            k as f64 * self.t_end / self.n_steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.node(k)).collect()
    }

    /// Index of the node equal to `t` (up to 1e-9 of a step), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt()).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        ((self.node(k) - t).abs() <= 1e-9 * self.dt()).then_some(k)
    }

    /// Same horizon with `n_steps / factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return domain(format!("cannot coarsen {} steps by {factor}", self.n_steps));
        }
        Self::new(self.t_end, self.n_steps / factor)
    }
}

/// Hurst indices of a multi-component fBm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstVector(Vec<f64>);

impl HurstVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return domain("Hurst vector needs at least one component");
        }
        for &h in &components {
            super::validate_hurst(h)?;
        }
        Ok(Self(components))
    }

    pub fn uniform(h: f64, dim: usize) -> Result<Self> {
        Self::new(vec![h; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.len(), 5);
        assert_eq!(g.index_of(1.5), Some(3));
        assert_eq!(g.index_of(1.4), None);
        assert_eq!(g.coarsen(2).unwrap().n_steps(), 2);
        assert!(g.coarsen(3).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        let g = TimeGrid::new(1.0, 3).unwrap();
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.node(3), 1.0);
    }

    #[test]
    fn hurst_vector_domain() {
        assert!(HurstVector::new(vec![0.5, 0.9]).is_ok());
        assert!(HurstVector::new(vec![]).is_err());
        assert!(HurstVector::new(vec![0.5, 1.0]).is_err());
        assert!(HurstVector::new(vec![0.0]).is_err());
    }
}
