//! Error functionals of the convergence bound, beamforming objectives and
//! the per-round CSV record.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, ChannelState};
use crate::error::{Error, Result};
use crate::knowledge::{DatasetPartition, KnowledgeSet};
use crate::learner::{lr_schedule, LearnerConfig};
use crate::transceiver::{build_sdp_problem, TransceiverPlan};

/// Smoothness constants used only for reporting the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConfig {
    /// Lipschitz constant of the loss gradients.
    pub l1: f64,
    /// Lipschitz constant of the model mapping.
    pub l2: f64,
    /// Bound on the gradient norm.
    pub s: f64,
    /// Bound on the local loss.
    pub f_max: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            s: 1.0,
            f_max: 1.0,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.l1, self.l2, self.s, self.f_max].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("bound constants must be positive".into()));
        }
        Ok(())
    }

    /// `A₁ = 6 γ η₀ L₂`
    pub fn a1(&self, gamma: f64, eta0: f64) -> f64 {
        6.0 * gamma * eta0 * self.l2
    }

    /// `A₂ = 6 η₀ γ² L₂² L₁`
    pub fn a2(&self, gamma: f64, eta0: f64) -> f64 {
        6.0 * eta0 * gamma * gamma * self.l2 * self.l2 * self.l1
    }
}

/// Signal misalignment of each device, evaluated on the channel the signals
/// actually traverse.
pub fn phi1(
    plan: &TransceiverPlan,
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
) -> Result<Vec<f64>> {
    let (m, k) = (channel.num_wds(), knowledge.num_classes);
    partition.check_shape(m, k)?;
    if knowledge.num_wds() != m || plan.transmit.equalizers.len() != m {
        return Err(Error::DimensionMismatch("plan, channel and knowledge disagree on M".into()));
    }
    let w = &plan.receive.beamformer;
    // class residual norms are shared by every device
    let residual: Vec<f64> = (0..k)
        .map(|c| {
            let lambda = plan.receive.denormalizers[c];
            let mut v = vec![Complex64::new(0.0, 0.0); k];
            for j in 0..m {
                let Some(cell) = knowledge.cell(j, c) else { continue };
                let eff = channel.effective_gain(w, j) * plan.transmit.equalizers[j][c] / (lambda * cell.std);
                let mis = eff - partition.class_weight(j, c);
                let off = plan.receive.offsets[j][c] - eff;
                for (d, q) in cell.q.iter().enumerate() {
                    v[d] += mis * q + off * cell.mean;
                }
            }
            v.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
        })
        .collect();
    Ok((0..m)
        .map(|i| (0..k).map(|c| partition.local_share(i, c) * residual[c]).sum())
        .collect())
}

/// `Φ₂² = Σ_k (B_i^k/B_i) K σ_n² / (λ^k)²` for every device; exact for a
/// unit-norm beamformer.
pub fn phi2_sq_analytic(denormalizers: &[f64], partition: &DatasetPartition, noise_variance: f64) -> Result<Vec<f64>> {
    let k = partition.num_classes();
    if denormalizers.len() != k {
        return Err(Error::DimensionMismatch("one denormalizer per class required".into()));
    }
    if let Some(c) = denormalizers.iter().position(|l| !(*l > 0.0)) {
        return Err(Error::PlanDegeneracy(format!("nonpositive denormalizer for class {c}")));
    }
    Ok((0..partition.num_wds())
        .map(|i| {
            (0..k)
                .map(|c| partition.local_share(i, c) * k as f64 * noise_variance / denormalizers[c].powi(2))
                .sum()
        })
        .collect())
}

/// Monte-Carlo estimate of `Φ₂²` with its standard error, per device.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Average `Σ_k (B_i^k/B_i) ‖ŵ^H n^k / λ^k‖²` over `draws` fresh noise
/// realizations of all `K²` channel uses.
pub fn phi2_sq_monte_carlo<R: Rng + ?Sized>(
    plan: &TransceiverPlan,
    partition: &DatasetPartition,
    noise_variance: f64,
    draws: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    let (m, k) = (partition.num_wds(), partition.num_classes());
    let w = &plan.receive.beamformer;
    if plan.receive.denormalizers.len() != k || draws < 2 {
        return Err(Error::InvalidInput("need one denormalizer per class and at least two draws".into()));
    }
    let n = w.len();
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut class_energy = vec![0.0; k];
    for _ in 0..draws {
        for (c, e) in class_energy.iter_mut().enumerate() {
            let mut acc = 0.0;
            for _ in 0..k {
                let noise = DVector::from_fn(n, |_, _| complex_gaussian(rng, noise_variance));
                acc += w.dotc(&noise).norm_sqr();
            }
            *e = acc / plan.receive.denormalizers[c].powi(2);
        }
        for i in 0..m {
            let v: f64 = (0..k).map(|c| partition.local_share(i, c) * class_energy[c]).sum();
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let d = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / d).collect();
    let std_error = mean
        .iter()
        .zip(&sum_sq)
        .map(|(mu, s2)| ((s2 / d - mu * mu).max(0.0) * d / (d - 1.0) / d).sqrt())
        .collect();
    Ok(MonteCarloEstimate { mean, std_error })
}

/// Noise part of the per-round objective as a function of `w` alone:
/// `Σ_i A₂ K σ_n² Σ_k B_i^k max_j [B_j^k q̂_j^k / (B^k |w^H h_j| √P_j)] / (B_i √T)`.
/// Infinite when an active device is nulled.
#[allow(clippy::too_many_arguments)]
pub fn p2_objective(
    w: &DVector<Complex64>,
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
    noise_variance: f64,
    a2: f64,
    rounds: usize,
) -> Result<f64> {
    let (m, k) = (channel.num_wds(), knowledge.num_classes);
    partition.check_shape(m, k)?;
    if peak_powers.len() != m || w.len() != channel.num_antennas() {
        return Err(Error::DimensionMismatch("beamformer or powers do not match the channel".into()));
    }
    let worst: Vec<f64> = (0..k)
        .map(|c| {
            (0..m)
                .filter(|&j| partition.is_active(j, c))
                .map(|j| {
                    let g = channel.effective_gain(w, j).norm();
                    partition.count(j, c) as f64 * knowledge.std(j, c)
                        / (partition.class_total(c) as f64 * g * peak_powers[j].sqrt())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let scale = a2 * k as f64 * noise_variance / (rounds as f64).sqrt();
    Ok((0..m)
        .map(|i| {
            let inner: f64 = (0..k).map(|c| partition.count(i, c) as f64 * worst[c]).sum();
            scale * inner / partition.wd_total(i) as f64
        })
        .sum())
}

/// `Σ_k c_k e_k` at `W = w w^H` with each slack at its smallest feasible value.
pub fn p4_objective(
    w: &DVector<Complex64>,
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
) -> Result<f64> {
    Ok(build_sdp_problem(channel, knowledge, partition, peak_powers)?.beamformer_objective(w))
}

/// Per-round inputs to the bound for one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub grad_norm: f64,
    pub phi1: f64,
    pub phi2_sq: f64,
}

/// Right-hand side of the expected-gradient-norm bound over a history of
/// `T = history.len()` rounds, with `η_t` from the learner's schedule.
pub fn theorem1_bound(history: &[BoundSample], bound: &BoundConfig, learner: &LearnerConfig) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::InvalidInput("bound needs at least one round".into()));
    }
    let t = history.len() as f64;
    let (gamma, eta0) = (learner.distill_weight, learner.init_lr);
    let t32 = t.powf(1.5);
    let a1 = bound.a1(gamma, eta0);
    let a2 = bound.a2(gamma, eta0);
    let mut total = 3.0 * bound.f_max / (eta0 * t.sqrt()) + 8.0 * gamma * bound.l2 * bound.s;
    for (r, h) in history.iter().enumerate() {
        let eta = lr_schedule(r, learner);
        total += a1 * (bound.l1 * eta + 1.0) / eta * h.grad_norm * h.phi1 / t32;
        total += a2 * (h.phi1 * h.phi1 + h.phi2_sq) / t32;
    }
    Ok(total)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub trial: usize,
    pub round: usize,
    pub plan_tag: String,
    pub antennas: usize,
    pub wds: usize,
    pub classes: usize,
    pub zeta: f64,
    pub phi1: Vec<f64>,
    pub phi2_sq: Vec<f64>,
    pub phi2_sq_monte_carlo: Option<Vec<f64>>,
    pub p2_objective: Option<f64>,
    pub p4_objective: Option<f64>,
    pub eigenvalues: Option<(f64, f64)>,
    pub power_utilization: Vec<Vec<f64>>,
    pub stragglers: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub distill_loss: Vec<f64>,
    pub test_accuracy: Option<Vec<f64>>,
    pub wall_ms: f64,
}

pub const CSV_HEADER: &str = "trial,round,plan_tag,N,M,K,zeta,phi1_max,phi1_mean,phi2_sq_mean,p2_obj,p4_obj,eig1,eig2,train_loss_mean,test_acc_mean,wall_ms";

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

impl RoundMetrics {
    pub fn phi1_max(&self) -> f64 {
        self.phi1.iter().copied().fold(0.0, f64::max)
    }

    pub fn train_loss_mean(&self) -> f64 {
        mean(&self.train_loss)
    }

    pub fn distill_loss_mean(&self) -> f64 {
        mean(&self.distill_loss)
    }

    pub fn test_accuracy_mean(&self) -> Option<f64> {
        self.test_accuracy.as_deref().map(mean)
    }

    /// Row matching [`CSV_HEADER`]; absent values are empty fields.
    pub fn csv_row(&self) -> String {
        let phi = |v: &[f64]| if v.is_empty() { String::new() } else { format!("{:e}", mean(v)) };
        [
            self.trial.to_string(),
            self.round.to_string(),
            self.plan_tag.clone(),
            self.antennas.to_string(),
            self.wds.to_string(),
            self.classes.to_string(),
            format!("{}", self.zeta),
            if self.phi1.is_empty() { String::new() } else { format!("{:e}", self.phi1_max()) },
            phi(&self.phi1),
            phi(&self.phi2_sq),
            opt(self.p2_objective),
            opt(self.p4_objective),
            opt(self.eigenvalues.map(|e| e.0)),
            opt(self.eigenvalues.map(|e| e.1)),
            format!("{:e}", self.train_loss_mean()),
            opt(self.test_accuracy_mean()),
            format!("{}", self.wall_ms),
        ]
        .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transceiver::{complete_plan, PlanTag};
    use rand::SeedableRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn setup() -> (ChannelState, KnowledgeSet, DatasetPartition) {
        let ch = ChannelState::new(
            vec![DVector::from_vec(vec![c(1.0, 0.5), c(0.2, -0.3)]), DVector::from_vec(vec![c(-0.4, 0.1), c(0.9, 0.9)])],
            0,
        )
        .unwrap();
        let part = DatasetPartition::from_counts(vec![vec![3, 1], vec![1, 2]], None).unwrap();
        let ks = KnowledgeSet::new(
            vec![vec![Some(vec![0.8, 0.2]), Some(vec![0.35, 0.65])], vec![Some(vec![0.6, 0.4]), Some(vec![0.1, 0.9])]],
            &part,
            0,
        )
        .unwrap();
        (ch, ks, part)
    }

    #[test]
    fn closed_form_plan_has_no_misalignment() {
        let (ch, ks, part) = setup();
        let w = DVector::from_vec(vec![c(0.8, 0.0), c(0.0, -0.6)]);
        let plan = complete_plan(&w, &ch, &ks, &part, &[1.0, 1.0], PlanTag::Custom).unwrap();
        assert!(phi1(&plan, &ch, &ks, &part).unwrap().iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn hand_built_mismatch() {
        let (ch, ks, part) = setup();
        let w = DVector::from_vec(vec![c(0.8, 0.0), c(0.0, -0.6)]);
        let mut plan = complete_plan(&w, &ch, &ks, &part, &[1.0, 1.0], PlanTag::Custom).unwrap();
        // halve device 1's class-0 equalizer: its effective gain drops from
        // 1/4 to 1/8 while the offset stays at 1/4
        plan.transmit.equalizers[1][0] *= 0.5;
        let q = [0.6_f64, 0.4];
        let mean = 0.5_f64;
        let residual: f64 = q.iter().map(|v| (-0.125 * v + 0.125 * mean).powi(2)).sum::<f64>().sqrt();
        let got = phi1(&plan, &ch, &ks, &part).unwrap();
        assert!((got[0] - 0.75 * residual).abs() < 1e-14);
        assert!((got[1] - 1.0 / 3.0 * residual).abs() < 1e-14);
    }

    #[test]
    fn phi2_single_term() {
        let part = DatasetPartition::from_counts(vec![vec![2, 0], vec![0, 2]], None).unwrap();
        let v = phi2_sq_analytic(&[1.0, 2.0], &part, 0.3).unwrap();
        assert!((v[0] - 2.0 * 0.3).abs() < 1e-15);
        assert!((v[1] - 2.0 * 0.3 / 4.0).abs() < 1e-15);
        assert_eq!(phi2_sq_analytic(&[1.0, 2.0], &part, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn phi2_monte_carlo_agrees() {
        let (ch, ks, part) = setup();
        let w = DVector::from_vec(vec![c(0.8, 0.0), c(0.0, -0.6)]);
        let plan = complete_plan(&w, &ch, &ks, &part, &[1.0, 1.0], PlanTag::Custom).unwrap();
        let exact = phi2_sq_analytic(&plan.receive.denormalizers, &part, 0.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mc = phi2_sq_monte_carlo(&plan, &part, 0.5, 20_000, &mut rng).unwrap();
        for i in 0..2 {
            assert!((mc.mean[i] - exact[i]).abs() < 4.0 * mc.std_error[i]);
        }
    }

    #[test]
    fn p2_equals_inverse_denormalizers() {
        let (ch, ks, part) = setup();
        let w = DVector::from_vec(vec![c(0.6, 0.0), c(0.8, 0.0)]);
        let plan = complete_plan(&w, &ch, &ks, &part, &[1.0, 2.0], PlanTag::Custom).unwrap();
        let got = p2_objective(&w, &ch, &ks, &part, &[1.0, 2.0], 0.1, 3.0, 4).unwrap();
        let mut expect = 0.0;
        for i in 0..2 {
            for k in 0..2 {
                expect += part.local_share(i, k) / plan.receive.denormalizers[k];
            }
        }
        expect *= 3.0 * 2.0 * 0.1 / 2.0;
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn bound_without_errors() {
        let cfg = LearnerConfig {
            distill_weight: 0.5,
            init_lr: 0.1,
            ..LearnerConfig::default()
        };
        let b = BoundConfig {
            l1: 2.0,
            l2: 3.0,
            s: 4.0,
            f_max: 5.0,
        };
        let hist = vec![
            BoundSample {
                grad_norm: 1.0,
                phi1: 0.0,
                phi2_sq: 0.0
            };
            16
        ];
        let got = theorem1_bound(&hist, &b, &cfg).unwrap();
        assert!((got - (3.0 * 5.0 / (0.1 * 4.0) + 8.0 * 0.5 * 3.0 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn csv_row_has_every_column() {
        let m = RoundMetrics {
            trial: 0,
            round: 3,
            plan_tag: "optimal".into(),
            antennas: 5,
            wds: 2,
            classes: 2,
            zeta: 1.0,
            phi1: vec![0.0, 1.0],
            phi2_sq: vec![2.0, 4.0],
            phi2_sq_monte_carlo: None,
            p2_objective: Some(1.5),
            p4_objective: None,
            eigenvalues: None,
            power_utilization: vec![],
            stragglers: vec![],
            train_loss: vec![1.0],
            distill_loss: vec![0.0],
            test_accuracy: None,
            wall_ms: 0.0,
        };
        let row = m.csv_row();
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(row.starts_with("0,3,optimal,5,2,2,1,1e0,5e-1,3e0,1.5e0,,,,1e0,,0"));
    }
}
