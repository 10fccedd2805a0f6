//! Local knowledge: per-class averaged soft predictions, their
//! normalization statistics, the analog transmit signal, and the ideal
//! global aggregate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations at or below this value are clamped before normalizing.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-device, per-class sample counts `B_i^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPartition {
    counts: Vec<Vec<usize>>,
    class_totals: Vec<usize>,
    wd_totals: Vec<usize>,
    dirichlet: Option<f64>,
}

impl DatasetPartition {
    /// Build from an `M × K` count table. Every class and every device must
    /// own at least one sample.
    pub fn from_counts(counts: Vec<Vec<usize>>, dirichlet: Option<f64>) -> Result<Self> {
        let k = counts.first().map(|r| r.len()).unwrap_or(0);
        if counts.is_empty() || k == 0 {
            return Err(Error::InvalidInput("partition needs at least one device and one class".into()));
        }
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("ragged count table".into()));
        }
        let class_totals: Vec<usize> = (0..k).map(|c| counts.iter().map(|r| r[c]).sum()).collect();
        let wd_totals: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
        if let Some(c) = class_totals.iter().position(|&b| b == 0) {
            return Err(Error::Consistency(format!("class {c} has no samples")));
        }
        if let Some(i) = wd_totals.iter().position(|&b| b == 0) {
            return Err(Error::Consistency(format!("device {i} has no samples")));
        }
        Ok(Self {
            counts,
            class_totals,
            wd_totals,
            dirichlet,
        })
    }

    pub fn num_wds(&self) -> usize {
        self.counts.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_totals.len()
    }

    pub fn count(&self, wd: usize, class: usize) -> usize {
        self.counts[wd][class]
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn class_total(&self, class: usize) -> usize {
        self.class_totals[class]
    }

    pub fn wd_total(&self, wd: usize) -> usize {
        self.wd_totals[wd]
    }

    pub fn dirichlet(&self) -> Option<f64> {
        self.dirichlet
    }

    pub fn is_active(&self, wd: usize, class: usize) -> bool {
        self.counts[wd][class] > 0
    }

    /// Aggregation weight `B_i^k / B^k`.
    pub fn class_weight(&self, wd: usize, class: usize) -> f64 {
        self.counts[wd][class] as f64 / self.class_totals[class] as f64
    }

    /// Local share `B_i^k / B_i`.
    pub fn local_share(&self, wd: usize, class: usize) -> f64 {
        self.counts[wd][class] as f64 / self.wd_totals[wd] as f64
    }

    /// `c_k = (1/B^k) Σ_i B_i^k / B_i`, the weight of class `k` in the
    /// beamforming objective.
    pub fn objective_weight(&self, class: usize) -> f64 {
        (0..self.num_wds()).map(|i| self.local_share(i, class)).sum::<f64>() / self.class_totals[class] as f64
    }

    pub(crate) fn check_shape(&self, wds: usize, classes: usize) -> Result<()> {
        if self.num_wds() != wds || self.num_classes() != classes {
            return Err(Error::DimensionMismatch(format!(
                "partition is {}x{}, expected {wds}x{classes}",
                self.num_wds(),
                self.num_classes()
            )));
        }
        Ok(())
    }
}

/// Statistics of one local-averaged soft prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeStats {
    pub mean: f64,
    pub std: f64,
}

/// Knowledge of one device for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassKnowledge {
    pub q: Vec<f64>,
    pub mean: f64,
    /// Standard deviation after clamping to [`STD_FLOOR`].
    pub std: f64,
    /// True when the raw standard deviation was at or below the floor.
    pub clamped: bool,
}

impl ClassKnowledge {
    pub fn new(q: Vec<f64>) -> Self {
        let stats = knowledge_stats(&q);
        let clamped = stats.std <= STD_FLOOR;
        Self {
            q,
            mean: stats.mean,
            std: stats.std.max(STD_FLOOR),
            clamped,
        }
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.q.iter().map(|v| (v - self.mean) / self.std).collect()
    }
}

/// Knowledge of all devices in one round; `None` where `B_i^k = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSet {
    pub cells: Vec<Vec<Option<ClassKnowledge>>>,
    pub num_classes: usize,
    pub round: u64,
}

impl KnowledgeSet {
    /// Assemble from per-device knowledge vectors. Cells must be present
    /// exactly where the partition is active.
    pub fn new(q: Vec<Vec<Option<Vec<f64>>>>, partition: &DatasetPartition, round: u64) -> Result<Self> {
        let k = partition.num_classes();
        if q.len() != partition.num_wds() {
            return Err(Error::DimensionMismatch("one knowledge row per device required".into()));
        }
        let mut cells = Vec::with_capacity(q.len());
        for (i, row) in q.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch(format!("device {i} has {} classes", row.len())));
            }
            let mut out = Vec::with_capacity(k);
            for (c, cell) in row.into_iter().enumerate() {
                match (cell, partition.is_active(i, c)) {
                    (Some(v), true) => {
                        if v.len() != k {
                            return Err(Error::DimensionMismatch(format!(
                                "knowledge of device {i}, class {c} has length {}",
                                v.len()
                            )));
                        }
                        out.push(Some(ClassKnowledge::new(v)));
                    }
                    (None, false) => out.push(None),
                    (Some(_), false) => {
                        return Err(Error::Consistency(format!("device {i} has no samples of class {c}")))
                    }
                    (None, true) => {
                        return Err(Error::Consistency(format!("missing knowledge for device {i}, class {c}")))
                    }
                }
            }
            cells.push(out);
        }
        Ok(Self {
            cells,
            num_classes: k,
            round,
        })
    }

    pub fn num_wds(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, wd: usize, class: usize) -> Option<&ClassKnowledge> {
        self.cells[wd][class].as_ref()
    }

    pub fn mean(&self, wd: usize, class: usize) -> f64 {
        self.cell(wd, class).map_or(0.0, |c| c.mean)
    }

    pub fn std(&self, wd: usize, class: usize) -> f64 {
        self.cell(wd, class).map_or(0.0, |c| c.std)
    }

    /// Number of cells whose standard deviation was clamped.
    pub fn clamped_cells(&self) -> usize {
        self.cells.iter().flatten().flatten().filter(|c| c.clamped).count()
    }
}

/// Transmit equalization factors `P_i^k` and peak powers `P_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitPlan {
    pub equalizers: Vec<Vec<Complex64>>,
    pub peak_powers: Vec<f64>,
}

impl TransmitPlan {
    /// Relative slack allowed when checking `|P|² ≤ P_i`.
    pub const POWER_TOL: f64 = 1e-9;

    pub fn validate(&self) -> Result<()> {
        if self.equalizers.len() != self.peak_powers.len() {
            return Err(Error::DimensionMismatch("one equalizer row per device required".into()));
        }
        for (i, (row, &peak)) in self.equalizers.iter().zip(&self.peak_powers).enumerate() {
            for (k, p) in row.iter().enumerate() {
                let power = p.norm_sqr();
                if !(power <= peak * (1.0 + Self::POWER_TOL)) {
                    return Err(Error::PowerViolation {
                        wd: i,
                        class: k,
                        power,
                        peak,
                    });
                }
            }
        }
        Ok(())
    }

    /// `|P_i^k|² / P_i`.
    pub fn utilization(&self, wd: usize, class: usize) -> f64 {
        self.equalizers[wd][class].norm_sqr() / self.peak_powers[wd]
    }
}

/// Per-class average of soft predictions. `groups[k]` holds the outputs of
/// the device's class-`k` samples and `counts[k]` is `B_i^k`.
pub fn local_knowledge(groups: &[Vec<Vec<f64>>], counts: &[usize]) -> Result<Vec<Option<Vec<f64>>>> {
    if groups.len() != counts.len() {
        return Err(Error::DimensionMismatch("one sample group per class required".into()));
    }
    let k = groups.len();
    groups
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (group, &count))| {
            if count == 0 {
                return Ok(None);
            }
            if group.len() != count {
                return Err(Error::Consistency(format!(
                    "class {c} has {} outputs but {count} samples",
                    group.len()
                )));
            }
            let mut acc = vec![0.0; k];
            for p in group {
                if p.len() != k {
                    return Err(Error::DimensionMismatch(format!("soft prediction of length {}", p.len())));
                }
                acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
            }
            acc.iter_mut().for_each(|a| *a /= count as f64);
            Ok(Some(acc))
        })
        .collect()
}

/// Population mean and standard deviation over the `K` entries.
pub fn knowledge_stats(q: &[f64]) -> KnowledgeStats {
    let k = q.len() as f64;
    let mean = q.iter().sum::<f64>() / k;
    let var = q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    KnowledgeStats { mean, std: var.sqrt() }
}

/// Zero-mean, unit-power version `(q - q̄) / q̂`.
pub fn normalize_knowledge(q: &[f64], mean: f64, std: f64) -> Result<Vec<f64>> {
    if !(std >= STD_FLOOR) {
        return Err(Error::DegenerateKnowledge { wd: 0, class: 0, std });
    }
    Ok(q.iter().map(|v| (v - mean) / std).collect())
}

/// Concatenate `P_i^k x_i^k` over classes into the `K²` transmit symbols.
pub fn assemble_transmit_signal(blocks: &[Vec<f64>], equalizers: &[Complex64], peak_power: f64) -> Result<Vec<Complex64>> {
    if blocks.len() != equalizers.len() {
        return Err(Error::DimensionMismatch("one equalizer per class block required".into()));
    }
    let mut out = Vec::with_capacity(blocks.iter().map(Vec::len).sum());
    for (k, (block, &p)) in blocks.iter().zip(equalizers).enumerate() {
        let power = p.norm_sqr();
        if !(power <= peak_power * (1.0 + TransmitPlan::POWER_TOL)) {
            return Err(Error::PowerViolation {
                wd: 0,
                class: k,
                power,
                peak: peak_power,
            });
        }
        out.extend(block.iter().map(|&x| p * x));
    }
    Ok(out)
}

/// Transmit signal of device `wd`; classes without samples send zeros.
pub fn device_signal(knowledge: &KnowledgeSet, plan: &TransmitPlan, wd: usize) -> Result<Vec<Complex64>> {
    let k = knowledge.num_classes;
    let blocks: Vec<Vec<f64>> = (0..k)
        .map(|c| knowledge.cell(wd, c).map_or_else(|| vec![0.0; k], ClassKnowledge::normalized))
        .collect();
    assemble_transmit_signal(&blocks, &plan.equalizers[wd], plan.peak_powers[wd]).map_err(|e| match e {
        Error::PowerViolation { class, power, peak, .. } => Error::PowerViolation {
            wd,
            class,
            power,
            peak,
        },
        other => other,
    })
}

/// Ideal aggregate `q^k = Σ_i (B_i^k / B^k) q_i^k`.
pub fn global_target(knowledge: &KnowledgeSet, partition: &DatasetPartition) -> Result<Vec<Vec<f64>>> {
    let k = knowledge.num_classes;
    partition.check_shape(knowledge.num_wds(), k)?;
    Ok((0..k)
        .map(|c| {
            let mut acc = vec![0.0; k];
            for i in 0..knowledge.num_wds() {
                if let Some(cell) = knowledge.cell(i, c) {
                    let w = partition.class_weight(i, c);
                    acc.iter_mut().zip(&cell.q).for_each(|(a, v)| *a += w * v);
                }
            }
            acc
        })
        .collect())
}
