//! Splitting a dataset across devices.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::DatasetPartition;
use crate::learner::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    Dirichlet { concentration: f64 },
}

/// Sample indices owned by every device, with the resulting count table.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub indices: Vec<Vec<usize>>,
    pub partition: DatasetPartition,
}

const MAX_RESAMPLES: usize = 1000;

/// One draw from `Dir(ψ 1_M)`.
pub fn dirichlet_proportions<R: Rng + ?Sized>(m: usize, concentration: f64, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidInput(format!("Dirichlet concentration {concentration}: {e}")))?;
    loop {
        let g: Vec<f64> = (0..m).map(|_| gamma.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 {
            return Ok(g.into_iter().map(|v| v / s).collect());
        }
    }
}

fn by_class<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Vec<Vec<usize>> {
    let mut classes = vec![Vec::new(); data.num_classes];
    for (i, &y) in data.labels.iter().enumerate() {
        classes[y].push(i);
    }
    for c in &mut classes {
        c.shuffle(rng);
    }
    classes
}

/// IID: samples of each class are dealt round-robin, continuing where the
/// previous class stopped, so device sizes differ by at most one.
/// Dirichlet: each class is split by proportions drawn from `Dir(ψ 1_M)`;
/// draws that leave a device empty are redrawn.
pub fn partition<R: Rng + ?Sized>(data: &Dataset, mode: PartitionMode, m: usize, rng: &mut R) -> Result<Assignment> {
    if m == 0 || data.len() < m {
        return Err(Error::InvalidInput(format!("{} samples cannot cover {m} devices", data.len())));
    }
    let classes = by_class(data, rng);
    let mut indices = vec![Vec::new(); m];
    match mode {
        PartitionMode::Iid => {
            let mut next = 0;
            for c in &classes {
                for &s in c {
                    indices[next % m].push(s);
                    next += 1;
                }
            }
        }
        PartitionMode::Dirichlet { concentration } => {
            let mut attempt = 0;
            loop {
                indices.iter_mut().for_each(Vec::clear);
                for c in &classes {
                    let p = dirichlet_proportions(m, concentration, rng)?;
                    let mut cum = 0.0;
                    let mut start = 0;
                    for (i, pi) in p.iter().enumerate() {
                        cum += pi;
                        let end = if i + 1 == m { c.len() } else { ((cum * c.len() as f64).round() as usize).min(c.len()) };
                        indices[i].extend_from_slice(&c[start..end.max(start)]);
                        start = end.max(start);
                    }
                }
                if indices.iter().all(|v| !v.is_empty()) {
                    break;
                }
                attempt += 1;
                if attempt >= MAX_RESAMPLES {
                    return Err(Error::InvalidInput(format!(
                        "Dirichlet({concentration}) left a device empty in {MAX_RESAMPLES} draws"
                    )));
                }
            }
        }
    }
    for v in &mut indices {
        v.sort_unstable();
    }
    let counts = indices
        .iter()
        .map(|v| {
            let mut row = vec![0; data.num_classes];
            for &s in v {
                row[data.labels[s]] += 1;
            }
            row
        })
        .collect();
    let dirichlet = match mode {
        PartitionMode::Iid => None,
        PartitionMode::Dirichlet { concentration } => Some(concentration),
    };
    Ok(Assignment {
        partition: DatasetPartition::from_counts(counts, dirichlet)?,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::dataset::{synthesize, DatasetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize) -> Dataset {
        synthesize(&DatasetSpec::default(), n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn iid_sizes_are_equal() {
        let d = data(600);
        let a = partition(&d, PartitionMode::Iid, 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!((0..10).all(|i| a.partition.wd_total(i) == 60));
        assert!(a.partition.counts().iter().flatten().all(|&c| c == 20));
    }

    #[test]
    fn every_sample_is_assigned_once() {
        let d = data(500);
        let a = partition(&d, PartitionMode::Dirichlet { concentration: 0.3 }, 7, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut all: Vec<usize> = a.indices.concat();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
        assert!(a.indices.iter().all(|v| !v.is_empty()));
    }

    #[test]
    fn huge_concentration_approaches_iid() {
        let d = data(3000);
        let a = partition(&d, PartitionMode::Dirichlet { concentration: 1e6 }, 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for i in 0..10 {
            for k in 0..3 {
                let share = a.partition.count(i, k) as f64 / 1000.0;
                assert!((share - 0.1).abs() < 0.01);
            }
        }
    }
}
