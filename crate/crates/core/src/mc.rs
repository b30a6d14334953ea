//! Path-parallel Monte Carlo helpers.

use rayon::prelude::*;

/// Runs `f` for every path index in parallel, returning results in path
/// order. Aggregating the returned vector sequentially keeps every estimate
/// independent of the worker count.
pub fn map_paths<T, F>(n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n_paths).into_par_iter().map(f).collect()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let se = if n > 1 {
            let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (nf - 1.0) / nf).sqrt()
        } else {
            f64::INFINITY
        };
        Self { mean, se, n }
    }

    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if diff == 0.0 {
            0.0
        } else {
            diff / self.se
        }
    }

    /// |mean - target| ≤ k·SE.
    pub fn within(&self, target: f64, k: f64) -> bool {
        self.z_score(target).abs() <= k
    }
}

/// Paired means: per-path differences keep common random numbers.
pub fn paired_difference(a: &[f64], b: &[f64]) -> MeanEstimate {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    MeanEstimate::from_samples(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_zero_spread() {
        let e = MeanEstimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.se, 0.0);
        assert_eq!(e.z_score(2.0), 0.0);
        assert!(e.within(2.0, 3.0));
    }

    #[test]
    fn standard_error_of_two_points() {
        let e = MeanEstimate::from_samples(&[0.0, 2.0]);
        assert_eq!(e.mean, 1.0);
        assert!((e.se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn map_preserves_order() {
        let v = map_paths(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
