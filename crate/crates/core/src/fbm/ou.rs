use super::FbmPath;
use crate::error::{domain, Error, Result};

/// Ornstein–Uhlenbeck interpolation `e^{−θ}·path + √(1 − e^{−2θ})·fresh`.
///
/// `fresh` must be drawn from a stream independent of `path`; the result has
/// the same law as `path` for every `θ ≥ 0`. `θ = +∞` returns `fresh`.
pub fn ou_couple(path: &FbmPath, fresh: &FbmPath, theta: f64) -> Result<FbmPath> {
    if !(theta >= 0.0) {
        return domain(format!("OU parameter must be nonnegative, got {theta}"));
    }
    if path.grid() != fresh.grid() {
        return Err(Error::GridMismatch("coupled paths must share a grid".into()));
    }
    if path.hurst() != fresh.hurst() {
        return domain(format!("Hurst mismatch: {} vs {}", path.hurst(), fresh.hurst()));
    }
    let a = (-theta).exp();
    let b = (-(-2.0 * theta).exp_m1()).sqrt();
    let values = path
        .values()
        .iter()
        .zip(fresh.values())
        .map(|(p, f)| a * p + b * f)
        .collect();
    FbmPath::from_values(*path.grid(), path.hurst(), values, path.seed(), path.method())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{FbmSampler, Method, TimeGrid};
    use crate::rng::{lane, StreamSeed};

    fn pair(i: u64) -> (FbmPath, FbmPath) {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let s = FbmSampler::new(grid, 0.7, Method::Cholesky).unwrap();
        let seed = StreamSeed::path(21, i);
        (s.sample(seed), s.sample(seed.with_lane(lane::FRESH)))
    }

    #[test]
    fn limits() {
        let (p, f) = pair(0);
        assert_eq!(ou_couple(&p, &f, 0.0).unwrap().values(), p.values());
        assert_eq!(ou_couple(&p, &f, f64::INFINITY).unwrap().values(), f.values());
        assert!(ou_couple(&p, &f, -1.0).is_err());
        assert!(ou_couple(&p, &f, f64::NAN).is_err());
    }

    #[test]
    fn mismatched_inputs() {
        let (p, _) = pair(0);
        let other = FbmSampler::new(TimeGrid::new(1.0, 8).unwrap(), 0.7, Method::Cholesky)
            .unwrap()
            .sample(StreamSeed::path(1, 1));
        assert!(matches!(ou_couple(&p, &other, 1.0), Err(Error::GridMismatch(_))));
        let other = FbmSampler::new(*p.grid(), 0.6, Method::Cholesky).unwrap().sample(StreamSeed::path(1, 1));
        assert!(ou_couple(&p, &other, 1.0).is_err());
    }

    #[test]
    fn coupled_variance_is_preserved() {
        let n = 10_000;
        for theta in [0.1, 1.0, 3.0] {
            let mut at_end = Vec::with_capacity(n);
            let mut at_mid = Vec::with_capacity(n);
            for i in 0..n as u64 {
                let (p, f) = pair(i);
                let c = ou_couple(&p, &f, theta).unwrap();
                at_end.push(c.value(16));
                at_mid.push(c.value(8));
            }
            for (x, t) in [(&at_end, 1.0f64), (&at_mid, 0.5)] {
                let var = crate::stats::variance(x);
                let se = crate::stats::variance_standard_error(x);
                assert!((var - t.powf(1.4)).abs() < 3.0 * se, "θ={theta} var={var} se={se}");
            }
        }
    }
}
