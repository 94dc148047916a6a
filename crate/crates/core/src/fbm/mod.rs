//! Fractional Brownian motion on uniform grids.

mod covariance;
mod grid;
mod kernel;
mod ou;
mod sampler;
mod vector;

pub use covariance::{covariance, fgn_autocovariance, gram_matrix, validate_hurst};
pub use grid::{HurstVector, TimeGrid};
pub use kernel::{kernel_k, kernel_normalization};
pub use ou::ou_couple;
pub use sampler::{sample_fbm, FbmPath, FbmSampler, Method, SamplerNote};
pub use vector::{sample_fbm_vector, FbmVectorPath, VectorSampler};
