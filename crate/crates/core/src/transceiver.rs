//! Per-round transceiver design: the beamformer from the relaxed program,
//! closed-form equalizers and estimator scalars, and two baselines.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::airagg::{EstimatedKnowledge, ReceiverPlan};
use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::knowledge::{DatasetPartition, KnowledgeSet, TransmitPlan};
use crate::sdp::{self, extract_principal_eigenpair, SdpProblem, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanTag {
    Optimal,
    Uniform,
    Custom,
}

impl PlanTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanTag::Optimal => "optimal",
            PlanTag::Uniform => "uniform",
            PlanTag::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    /// Per class, the device attaining the minimum in the denormalizer
    /// expression (lowest index on ties).
    pub stragglers: Vec<usize>,
    /// Relaxed objective `Σ_k c_k e_k` and its dual bound.
    pub sdp_objective: Option<f64>,
    pub sdp_dual_bound: Option<f64>,
    /// Same objective evaluated at the recovered `w w^H`.
    pub rank_one_objective: Option<f64>,
    /// Two largest eigenvalues of the relaxed solution.
    pub eigenvalues: Option<(f64, f64)>,
    pub degenerate_rank: bool,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransceiverPlan {
    pub transmit: TransmitPlan,
    pub receive: ReceiverPlan,
    pub tag: PlanTag,
    pub diagnostics: PlanDiagnostics,
}

impl TransceiverPlan {
    pub fn validate(&self) -> Result<()> {
        self.transmit.validate()?;
        self.receive.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("plan dump: {e}")))
    }
}

/// Denormalizers `λ^k`, offsets `a_i^k` and stragglers for a fixed `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Postprocessing {
    pub denormalizers: Vec<f64>,
    pub offsets: Vec<Vec<f64>>,
    pub stragglers: Vec<usize>,
}

fn check_inputs(
    w: &DVector<Complex64>,
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
) -> Result<()> {
    let (m, k) = (channel.num_wds(), knowledge.num_classes);
    partition.check_shape(m, k)?;
    if knowledge.num_wds() != m || peak_powers.len() != m {
        return Err(Error::DimensionMismatch("channel, knowledge and powers disagree on M".into()));
    }
    if w.len() != channel.num_antennas() {
        return Err(Error::DimensionMismatch("beamformer length differs from antenna count".into()));
    }
    if let Some(i) = peak_powers.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::InvalidInput(format!("peak power of device {i} must be positive")));
    }
    Ok(())
}

fn active_gain(channel: &ChannelState, w: &DVector<Complex64>, wd: usize, class: usize) -> Result<Complex64> {
    let g = channel.effective_gain(w, wd);
    if g.norm() == 0.0 {
        return Err(Error::PlanDegeneracy(format!(
            "device {wd} is nulled by the beamformer but holds class {class}"
        )));
    }
    Ok(g)
}

/// `λ^k = min_i B^k |w^H h_i| √P_i / (B_i^k q̂_i^k)` over active devices and
/// `a_i^k = B_i^k / B^k`.
pub fn optimal_postprocessing(
    w: &DVector<Complex64>,
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
) -> Result<Postprocessing> {
    check_inputs(w, channel, knowledge, partition, peak_powers)?;
    let (m, k) = (channel.num_wds(), knowledge.num_classes);
    let mut denormalizers = Vec::with_capacity(k);
    let mut stragglers = Vec::with_capacity(k);
    for c in 0..k {
        let mut best = (f64::INFINITY, usize::MAX);
        for i in (0..m).filter(|&i| partition.is_active(i, c)) {
            let g = active_gain(channel, w, i, c)?;
            let value = partition.class_total(c) as f64 * g.norm() * peak_powers[i].sqrt()
                / (partition.count(i, c) as f64 * knowledge.std(i, c));
            if value < best.0 {
                best = (value, i);
            }
        }
        denormalizers.push(best.0);
        stragglers.push(best.1);
    }
    let offsets = (0..m).map(|i| (0..k).map(|c| partition.class_weight(i, c)).collect()).collect();
    Ok(Postprocessing {
        denormalizers,
        offsets,
        stragglers,
    })
}

/// `P_i^k = B_i^k λ^k q̂_i^k (w^H h_i)^* / (B^k |w^H h_i|²)`; zero where the
/// device holds no class-`k` samples.
pub fn optimal_equalizers(
    w: &DVector<Complex64>,
    channel: &ChannelState,
    denormalizers: &[f64],
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
) -> Result<Vec<Vec<Complex64>>> {
    let (m, k) = (channel.num_wds(), knowledge.num_classes);
    if denormalizers.len() != k {
        return Err(Error::DimensionMismatch("one denormalizer per class required".into()));
    }
    (0..m)
        .map(|i| {
            (0..k)
                .map(|c| {
                    if !partition.is_active(i, c) {
                        return Ok(Complex64::new(0.0, 0.0));
                    }
                    let g = active_gain(channel, w, i, c)?;
                    let scale = partition.count(i, c) as f64 * denormalizers[c] * knowledge.std(i, c)
                        / (partition.class_total(c) as f64 * g.norm_sqr());
                    Ok(g.conj() * scale)
                })
                .collect()
        })
        .collect()
}

/// Complete a unit-norm beamformer into a full plan with the closed-form
/// equalizers and estimator scalars.
pub fn complete_plan(
    w: &DVector<Complex64>,
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
    tag: PlanTag,
) -> Result<TransceiverPlan> {
    let post = optimal_postprocessing(w, channel, knowledge, partition, peak_powers)?;
    let equalizers = optimal_equalizers(w, channel, &post.denormalizers, knowledge, partition)?;
    Ok(TransceiverPlan {
        transmit: TransmitPlan {
            equalizers,
            peak_powers: peak_powers.to_vec(),
        },
        receive: ReceiverPlan {
            beamformer: w.clone(),
            denormalizers: post.denormalizers,
            offsets: post.offsets,
        },
        tag,
        diagnostics: PlanDiagnostics {
            stragglers: post.stragglers,
            ..PlanDiagnostics::default()
        },
    })
}

/// Relaxed beamforming instance with `ĥ_j^k = √P_j h_j / (B_j^k q̂_j^k)`.
pub fn build_sdp_problem(
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
) -> Result<SdpProblem> {
    let (m, k) = (channel.num_wds(), knowledge.num_classes);
    partition.check_shape(m, k)?;
    if knowledge.num_wds() != m || peak_powers.len() != m {
        return Err(Error::DimensionMismatch("channel, knowledge and powers disagree on M".into()));
    }
    let weights = (0..k).map(|c| partition.objective_weight(c)).collect();
    let factors = (0..k)
        .map(|c| {
            (0..m)
                .map(|j| {
                    partition.is_active(j, c).then(|| {
                        let s = peak_powers[j].sqrt() / (partition.count(j, c) as f64 * knowledge.std(j, c));
                        &channel.coefficients[j] * Complex64::from(s)
                    })
                })
                .collect()
        })
        .collect();
    SdpProblem::new(channel.num_antennas(), weights, factors)
}

/// Solve the relaxed program, take the principal eigenvector as `w`, and
/// complete it with the closed forms. `channel` is whatever the server
/// believes, possibly an imperfect estimate.
pub fn optimize_round(
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
    options: &SolverOptions,
) -> Result<TransceiverPlan> {
    let problem = build_sdp_problem(channel, knowledge, partition, peak_powers)?;
    let n = channel.num_antennas();
    let (w, mut diagnostics) = if n == 1 {
        let w = DVector::from_element(1, Complex64::new(1.0, 0.0));
        let obj = problem.beamformer_objective(&w);
        let diag = PlanDiagnostics {
            sdp_objective: Some(obj),
            sdp_dual_bound: Some(obj),
            rank_one_objective: Some(obj),
            eigenvalues: Some((1.0, 0.0)),
            ..PlanDiagnostics::default()
        };
        (w, diag)
    } else {
        let solution = sdp::solve(&problem, options)?;
        let pair = extract_principal_eigenpair(&solution.w);
        if pair.degenerate {
            log::warn!(
                "round {}: relaxed solution is not rank one (eigenvalues {:.3e}, {:.3e})",
                channel.round,
                pair.value,
                pair.second_value
            );
        }
        let diag = PlanDiagnostics {
            sdp_objective: Some(solution.objective),
            sdp_dual_bound: Some(solution.dual_bound),
            rank_one_objective: Some(problem.beamformer_objective(&pair.vector)),
            eigenvalues: Some((pair.value, pair.second_value)),
            degenerate_rank: pair.degenerate,
            solver_iterations: solution.diagnostics.iterations,
            ..PlanDiagnostics::default()
        };
        (pair.vector, diag)
    };
    let mut plan = complete_plan(&w, channel, knowledge, partition, peak_powers, PlanTag::Optimal)?;
    diagnostics.stragglers = std::mem::take(&mut plan.diagnostics.stragglers);
    plan.diagnostics = diagnostics;
    Ok(plan)
}

/// Equal-weight combining `w = 1/√N`, full-power phase-aligned transmission,
/// and `λ^k` set to the class mean of the per-device gain expression.
pub fn uniform_baseline(
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
) -> Result<TransceiverPlan> {
    let n = channel.num_antennas();
    let w = DVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
    check_inputs(&w, channel, knowledge, partition, peak_powers)?;
    let (m, k) = (channel.num_wds(), knowledge.num_classes);
    let gains: Vec<Complex64> = (0..m).map(|i| channel.effective_gain(&w, i)).collect();
    let equalizers = (0..m)
        .map(|i| {
            let unit = if gains[i].norm() > 0.0 {
                gains[i].conj() / gains[i].norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            (0..k)
                .map(|c| {
                    if partition.is_active(i, c) {
                        unit * peak_powers[i].sqrt()
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut denormalizers = Vec::with_capacity(k);
    let mut stragglers = Vec::with_capacity(k);
    for c in 0..k {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut best = (f64::INFINITY, usize::MAX);
        for i in (0..m).filter(|&i| partition.is_active(i, c)) {
            let value = partition.class_total(c) as f64 * gains[i].norm() * peak_powers[i].sqrt()
                / (partition.count(i, c) as f64 * knowledge.std(i, c));
            sum += value;
            count += 1;
            if value < best.0 {
                best = (value, i);
            }
        }
        let mean = sum / count as f64;
        if !(mean > 0.0) {
            return Err(Error::PlanDegeneracy(format!("uniform combining nulls every device of class {c}")));
        }
        denormalizers.push(mean);
        stragglers.push(best.1);
    }
    let offsets = (0..m).map(|i| (0..k).map(|c| partition.class_weight(i, c)).collect()).collect();
    Ok(TransceiverPlan {
        transmit: TransmitPlan {
            equalizers,
            peak_powers: peak_powers.to_vec(),
        },
        receive: ReceiverPlan {
            beamformer: w,
            denormalizers,
            offsets,
        },
        tag: PlanTag::Uniform,
        diagnostics: PlanDiagnostics {
            stragglers,
            ..PlanDiagnostics::default()
        },
    })
}

/// Orthogonal-channel aggregation: each device sends its `K²` normalized
/// symbols on its own resource, received with maximum-ratio combining
/// `w_i = h_i/‖h_i‖` at full phase-aligned power. The server inverts each
/// link, denormalizes per device and applies the ideal weights `B_i^k/B^k`.
/// `noise[i]` holds the `K²` noise vectors of device `i`'s link.
pub fn orthogonal_baseline(
    channel: &ChannelState,
    knowledge: &KnowledgeSet,
    partition: &DatasetPartition,
    peak_powers: &[f64],
    noise: &[Vec<DVector<Complex64>>],
) -> Result<EstimatedKnowledge> {
    let (m, k) = (channel.num_wds(), knowledge.num_classes);
    partition.check_shape(m, k)?;
    if knowledge.num_wds() != m || peak_powers.len() != m || noise.len() != m {
        return Err(Error::DimensionMismatch("channel, knowledge, powers and noise disagree on M".into()));
    }
    let mut estimates = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    for i in 0..m {
        if noise[i].len() != k * k {
            return Err(Error::DimensionMismatch(format!("device {i} needs {} noise vectors", k * k)));
        }
        let h = &channel.coefficients[i];
        let norm = h.norm();
        if norm == 0.0 {
            return Err(Error::PlanDegeneracy(format!("device {i} has a zero channel")));
        }
        let w = h / Complex64::from(norm);
        // w^H h = ‖h‖, so the phase-aligned equalizer is real
        let link = norm * peak_powers[i].sqrt();
        for c in 0..k {
            let Some(cell) = knowledge.cell(i, c) else { continue };
            let weight = partition.class_weight(i, c);
            for (d, x) in cell.normalized().into_iter().enumerate() {
                let y = Complex64::from(link * x) + w.dotc(&noise[i][c * k + d]);
                let q = y / link * cell.std + cell.mean;
                estimates[c][d] += q * weight;
            }
        }
    }
    Ok(EstimatedKnowledge::from_complex(estimates))
}
