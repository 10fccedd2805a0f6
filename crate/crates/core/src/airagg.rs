//! Analog multiple-access aggregation at the server.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::knowledge::{device_signal, DatasetPartition, KnowledgeSet, TransmitPlan};

/// Receive beamformer and linear-estimator scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverPlan {
    pub beamformer: DVector<Complex64>,
    /// `λ^k`, one per class.
    pub denormalizers: Vec<f64>,
    /// `a_i^k`, `M × K`.
    pub offsets: Vec<Vec<f64>>,
}

impl ReceiverPlan {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn validate(&self) -> Result<()> {
        let norm = self.beamformer.norm();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::PlanDegeneracy(format!("beamformer norm {norm} is not 1")));
        }
        if let Some(k) = self.denormalizers.iter().position(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::PlanDegeneracy(format!(
                "denormalizer of class {k} is {}",
                self.denormalizers[k]
            )));
        }
        Ok(())
    }
}

/// Server-side estimate of the global knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedKnowledge {
    pub complex_estimates: Vec<Vec<Complex64>>,
    /// Real parts of `complex_estimates`; this is what devices train on.
    pub real_view: Vec<Vec<f64>>,
}

impl EstimatedKnowledge {
    pub fn from_complex(complex_estimates: Vec<Vec<Complex64>>) -> Self {
        let real_view = complex_estimates.iter().map(|v| v.iter().map(|c| c.re).collect()).collect();
        Self {
            complex_estimates,
            real_view,
        }
    }

    pub fn from_real(real: Vec<Vec<f64>>) -> Self {
        let complex_estimates = real.iter().map(|v| v.iter().map(|&x| Complex64::from(x)).collect()).collect();
        Self {
            complex_estimates,
            real_view: real,
        }
    }
}

/// `ŷ[d] = Σ_i w^H h_i x̂_i[d] + w^H n[d]` for every channel use `d`.
pub fn superpose_and_combine(
    signals: &[Vec<Complex64>],
    channel: &ChannelState,
    beamformer: &DVector<Complex64>,
    noise: &[DVector<Complex64>],
) -> Result<Vec<Complex64>> {
    if signals.len() != channel.num_wds() {
        return Err(Error::DimensionMismatch(format!(
            "{} signals for {} devices",
            signals.len(),
            channel.num_wds()
        )));
    }
    if beamformer.len() != channel.num_antennas() {
        return Err(Error::DimensionMismatch("beamformer length differs from antenna count".into()));
    }
    let slots = signals.first().map_or(0, Vec::len);
    if signals.iter().any(|s| s.len() != slots) {
        return Err(Error::DimensionMismatch("signals differ in length".into()));
    }
    if noise.len() != slots || noise.iter().any(|n| n.len() != beamformer.len()) {
        return Err(Error::DimensionMismatch("one noise vector per channel use required".into()));
    }
    let gains: Vec<Complex64> = (0..channel.num_wds()).map(|i| channel.effective_gain(beamformer, i)).collect();
    Ok((0..slots)
        .map(|d| {
            let signal: Complex64 = gains.iter().zip(signals).map(|(g, s)| g * s[d]).sum();
            signal + beamformer.dotc(&noise[d])
        })
        .collect())
}

/// Split the `K²` combined symbols into `K` class blocks of length `K`.
pub fn class_blocks(combined: &[Complex64], num_classes: usize) -> Result<Vec<Vec<Complex64>>> {
    if combined.len() != num_classes * num_classes {
        return Err(Error::DimensionMismatch(format!(
            "{} symbols for {num_classes} classes",
            combined.len()
        )));
    }
    Ok(combined.chunks(num_classes).map(<[Complex64]>::to_vec).collect())
}

/// Linear estimator `r̂^k = r^k / λ^k + Σ_i a_i^k q̄_i^k 1`.
pub fn estimate_global(
    blocks: &[Vec<Complex64>],
    plan: &ReceiverPlan,
    knowledge: &KnowledgeSet,
) -> Result<EstimatedKnowledge> {
    let k = knowledge.num_classes;
    if blocks.len() != k || plan.denormalizers.len() != k || plan.offsets.len() != knowledge.num_wds() {
        return Err(Error::DimensionMismatch("estimator inputs disagree on sizes".into()));
    }
    if let Some(c) = plan.denormalizers.iter().position(|l| !(*l > 0.0)) {
        return Err(Error::PlanDegeneracy(format!("nonpositive denormalizer for class {c}")));
    }
    let estimates = blocks
        .iter()
        .enumerate()
        .map(|(c, r)| {
            let offset: f64 = (0..knowledge.num_wds()).map(|i| plan.offsets[i][c] * knowledge.mean(i, c)).sum();
            r.iter().map(|v| v / plan.denormalizers[c] + offset).collect()
        })
        .collect();
    Ok(EstimatedKnowledge::from_complex(estimates))
}

/// Full over-the-air round: assemble every device's signal, superpose over
/// the (true) channel, combine, and estimate.
pub fn aggregate_over_the_air(
    knowledge: &KnowledgeSet,
    transmit: &TransmitPlan,
    receive: &ReceiverPlan,
    channel: &ChannelState,
    noise: &[DVector<Complex64>],
) -> Result<EstimatedKnowledge> {
    transmit.validate()?;
    let signals = (0..knowledge.num_wds())
        .map(|i| device_signal(knowledge, transmit, i))
        .collect::<Result<Vec<_>>>()?;
    let combined = superpose_and_combine(&signals, channel, &receive.beamformer, noise)?;
    let blocks = class_blocks(&combined, knowledge.num_classes)?;
    estimate_global(&blocks, receive, knowledge)
}

/// Error-free aggregation, `r̂^k = q^k`.
pub fn aggregate_error_free(knowledge: &KnowledgeSet, partition: &DatasetPartition) -> Result<EstimatedKnowledge> {
    Ok(EstimatedKnowledge::from_real(crate::knowledge::global_target(knowledge, partition)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_in_zero_out() {
        let ch = ChannelState::new(vec![DVector::from_element(2, c(0.3, -0.1)); 2], 0).unwrap();
        let w = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let y = superpose_and_combine(&vec![vec![c(0.0, 0.0); 4]; 2], &ch, &w, &vec![DVector::zeros(2); 4]).unwrap();
        assert!(y.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn identity_channel_passes_signal() {
        let ch = ChannelState::new(vec![DVector::from_element(1, c(1.0, 0.0))], 0).unwrap();
        let w = DVector::from_element(1, c(1.0, 0.0));
        let x = vec![c(0.5, -0.2), c(-1.0, 0.0), c(0.0, 2.0), c(3.0, 1.0)];
        let y = superpose_and_combine(std::slice::from_ref(&x), &ch, &w, &vec![DVector::zeros(1); 4]).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let ch = ChannelState::new(vec![DVector::from_element(2, c(1.0, 0.0))], 0).unwrap();
        let w = DVector::from_element(3, c(1.0, 0.0));
        let r = superpose_and_combine(&[vec![c(1.0, 0.0)]], &ch, &w, &[DVector::zeros(3)]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn offset_only_estimate() {
        let part = DatasetPartition::from_counts(vec![vec![1, 3], vec![3, 1]], None).unwrap();
        let ks = KnowledgeSet::new(
            vec![
                vec![Some(vec![0.9, 0.1]), Some(vec![0.2, 0.8])],
                vec![Some(vec![0.6, 0.4]), Some(vec![0.3, 0.7])],
            ],
            &part,
            0,
        )
        .unwrap();
        let plan = ReceiverPlan {
            beamformer: DVector::from_element(1, c(1.0, 0.0)),
            denormalizers: vec![2.0, 5.0],
            offsets: (0..2).map(|i| (0..2).map(|k| part.class_weight(i, k)).collect()).collect(),
        };
        let est = estimate_global(&vec![vec![c(0.0, 0.0); 2]; 2], &plan, &ks).unwrap();
        for k in 0..2 {
            let expect: f64 = (0..2).map(|i| part.class_weight(i, k) * ks.mean(i, k)).sum();
            for v in &est.complex_estimates[k] {
                assert!((v - c(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn nonpositive_denormalizer_is_rejected() {
        let part = DatasetPartition::from_counts(vec![vec![1, 1]], None).unwrap();
        let ks = KnowledgeSet::new(vec![vec![Some(vec![0.9, 0.1]), Some(vec![0.2, 0.8])]], &part, 0).unwrap();
        let plan = ReceiverPlan {
            beamformer: DVector::from_element(1, c(1.0, 0.0)),
            denormalizers: vec![1.0, 0.0],
            offsets: vec![vec![1.0, 1.0]],
        };
        let r = estimate_global(&vec![vec![c(0.0, 0.0); 2]; 2], &plan, &ks);
        assert!(matches!(r, Err(Error::PlanDegeneracy(_))));
    }

    #[test]
    fn real_view_is_real_part() {
        let e = EstimatedKnowledge::from_complex(vec![vec![c(0.25, 3.0), c(-1.0, -2.0)]]);
        assert_eq!(e.real_view, vec![vec![0.25, -1.0]]);
    }
}
