//! Centered sample moments with batch-means standard errors.

use crate::{Error, Result};
use serde::Serialize;

/// Fewest samples [`empirical_moments`] accepts.
pub const MIN_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalMoments {
    pub m_max: u32,
    pub count: usize,
    pub mean: f64,
    /// Standard error of `mean`.
    pub mean_se: f64,
    /// Centered moments `rho^(2..=m_max)` about the sample mean.
    pub moments: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub batches: usize,
}

impl EmpiricalMoments {
    /// `(estimate, standard error)` of `rho^(m)`.
    pub fn get(&self, m: u32) -> (f64, f64) {
        let i = m as usize - 2;
        (self.moments[i], self.std_errors[i])
    }
}

fn centered(xs: &[f64], mean: f64, m_max: u32) -> Vec<f64> {
    let mut acc = vec![0.0; m_max as usize - 1];
    for &x in xs {
        let d = x - mean;
        let mut p = d * d;
        for a in acc.iter_mut() {
            *a += p;
            p *= d;
        }
    }
    acc.iter().map(|a| a / xs.len() as f64).collect()
}

fn batch_se(estimates: &[f64]) -> f64 {
    let k = estimates.len() as f64;
    let m = estimates.iter().sum::<f64>() / k;
    let var = estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// Sample moments of `samples`. Standard errors come from `floor(sqrt N)`
/// contiguous batches of equal size, each centered at the global mean.
pub fn empirical_moments(samples: &[f64], m_max: u32) -> Result<EmpiricalMoments> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: n, min: MIN_SAMPLES });
    }
    if m_max < 2 {
        return Err(Error::InvalidParams(format!("m_max must be >= 2, got {m_max}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let moments = centered(samples, mean, m_max);
    let batches = (n as f64).sqrt() as usize;
    let size = n / batches;
    let per_batch: Vec<(f64, Vec<f64>)> = samples
        .chunks_exact(size)
        .take(batches)
        .map(|c| (c.iter().sum::<f64>() / size as f64, centered(c, mean, m_max)))
        .collect();
    let mean_se = batch_se(&per_batch.iter().map(|b| b.0).collect::<Vec<_>>());
    let std_errors = (0..moments.len())
        .map(|i| batch_se(&per_batch.iter().map(|b| b.1[i]).collect::<Vec<_>>()))
        .collect();
    Ok(EmpiricalMoments { m_max, count: n, mean, mean_se, moments, std_errors, batches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_samples() {
        let e = empirical_moments(&[2.5; 400], 4).unwrap();
        assert_eq!(e.mean, 2.5);
        assert!(e.moments.iter().chain(&e.std_errors).all(|&v| v == 0.0));
        assert_eq!(e.batches, 20);
    }

    #[test]
    fn too_few() {
        assert!(matches!(empirical_moments(&[1.0; 99], 2), Err(Error::TooFewSamples { got: 99, min: 100 })));
    }

    #[test]
    fn gaussian_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = empirical_moments(&xs, 4).unwrap();
        for (m, want) in [(2, 1.0), (3, 0.0), (4, 3.0)] {
            let (v, se) = e.get(m);
            assert!((v - want).abs() < 4.0 * se, "m={m}: {v} +- {se}");
        }
        assert!(e.mean.abs() < 4.0 * e.mean_se);
    }
}
