//! Synthetic Gaussian-mixture classification task.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Pairwise distance between class means.
    pub separation: f64,
    /// Standard deviation of the isotropic within-class noise.
    pub noise_std: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 3,
            feature_dim: 8,
            train_samples: 3000,
            test_samples: 1500,
            separation: 2.0,
            noise_std: 1.0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.feature_dim + 1 < self.num_classes {
            return Err(Error::Config(format!(
                "{} classes need a feature dimension of at least {}",
                self.num_classes,
                self.num_classes - 1
            )));
        }
        if self.train_samples < self.num_classes || self.test_samples == 0 {
            return Err(Error::Config("too few samples".into()));
        }
        if !(self.separation >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Config("separation and noise_std must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Vertices of a regular simplex with the given pairwise distance, centred
/// at the origin and embedded in the first `K - 1` of `dim` coordinates.
pub fn simplex_means(num_classes: usize, dim: usize, separation: f64) -> Result<Vec<Vec<f64>>> {
    if num_classes < 2 || dim + 1 < num_classes {
        return Err(Error::InvalidInput("simplex needs K >= 2 and dim >= K - 1".into()));
    }
    let k = num_classes;
    // Helmert basis of the sum-zero subspace: row r (1-based) is
    // (1, ..., 1, -r, 0, ...) / sqrt(r (r + 1)) with r ones.
    let mut means = vec![vec![0.0; dim]; k];
    for r in 1..k {
        let norm = ((r * (r + 1)) as f64).sqrt();
        for (j, mean) in means.iter_mut().enumerate() {
            let v = match j.cmp(&r) {
                std::cmp::Ordering::Less => 1.0,
                std::cmp::Ordering::Equal => -(r as f64),
                std::cmp::Ordering::Greater => 0.0,
            };
            // coordinate of e_j in the basis; e_j - 1/K has pairwise distance sqrt(2)
            mean[r - 1] = v / norm * separation / std::f64::consts::SQRT_2;
        }
    }
    Ok(means)
}

/// Balanced labels (`i mod K`, shuffled) with features `μ_y + σ z`.
pub fn synthesize<R: Rng + ?Sized>(spec: &DatasetSpec, samples: usize, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let means = simplex_means(spec.num_classes, spec.feature_dim, spec.separation)?;
    let mut labels: Vec<usize> = (0..samples).map(|i| i % spec.num_classes).collect();
    labels.shuffle(rng);
    let features = labels
        .iter()
        .map(|&y| {
            means[y]
                .iter()
                .map(|m| m + spec.noise_std * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect()
        })
        .collect();
    Dataset::new(features, labels, spec.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn simplex_is_regular_and_centred() {
        for k in 2..7 {
            let m = simplex_means(k, k + 2, 4.0).unwrap();
            for a in 0..k {
                for b in a + 1..k {
                    assert!((dist(&m[a], &m[b]) - 4.0).abs() < 1e-12);
                }
            }
            for d in 0..k + 2 {
                assert!(m.iter().map(|v| v[d]).sum::<f64>().abs() < 1e-12);
            }
            assert!(m.iter().all(|v| v[k - 1..].iter().all(|x| *x == 0.0)));
        }
    }

    #[test]
    fn labels_are_balanced_and_reproducible() {
        let spec = DatasetSpec::default();
        let a = synthesize(&spec, 300, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = synthesize(&spec, 300, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![100; 3]);
    }

    #[test]
    fn too_small_feature_dimension() {
        let spec = DatasetSpec {
            num_classes: 5,
            feature_dim: 3,
            ..DatasetSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
