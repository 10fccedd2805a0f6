//! Randomized self-checks of the structural properties of the design,
//! run by the `verify` subcommand.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::airagg::aggregate_over_the_air;
use crate::channel::{path_loss, sample_channel, sample_distances, ChannelConfig, ChannelState};
use crate::error::Result;
use crate::knowledge::{global_target, DatasetPartition, KnowledgeSet};
use crate::learner::{loss_and_grad, softmax, Architecture, Dataset, ModelParams};
use crate::metrics::{phi1, phi2_sq_analytic, phi2_sq_monte_carlo};
use crate::sdp::{self, SdpProblem, SolverOptions, RANK_ONE_RATIO};
use crate::transceiver::{build_sdp_problem, optimize_round};

/// One random round: channel, knowledge, partition and powers.
#[derive(Debug, Clone)]
pub struct RandomRound {
    pub channel: ChannelState,
    pub knowledge: KnowledgeSet,
    pub partition: DatasetPartition,
    pub peak_powers: Vec<f64>,
    /// Large-scale power gain of every device.
    pub path_loss: Vec<f64>,
}

/// Draw a round with `m` devices, `n` antennas and `k` classes using the
/// path-loss model of `base`. Cells are empty with probability `sparsity`
/// (every device and class keeps at least one sample); knowledge vectors
/// are softmaxes of random logits.
pub fn random_round<R: Rng + ?Sized>(
    rng: &mut R,
    base: &ChannelConfig,
    m: usize,
    n: usize,
    k: usize,
    sparsity: f64,
) -> Result<RandomRound> {
    let cfg = ChannelConfig {
        num_wds: m,
        num_antennas: n,
        ..base.clone()
    };
    let distances = sample_distances(&cfg, rng);
    let channel = sample_channel(&cfg, &distances, 0, rng)?;
    let path_loss = distances.iter().map(|&d| path_loss(d, &cfg)).collect::<Result<_>>()?;
    let mut counts: Vec<Vec<usize>> = (0..m)
        .map(|_| (0..k).map(|_| if rng.random::<f64>() < sparsity { 0 } else { rng.random_range(1..=20) }).collect())
        .collect();
    for (i, row) in counts.iter_mut().enumerate() {
        if row.iter().all(|&c| c == 0) {
            row[i % k] = rng.random_range(1..=20);
        }
    }
    for c in 0..k {
        if counts.iter().all(|r| r[c] == 0) {
            counts[c % m][c] = rng.random_range(1..=20);
        }
    }
    let partition = DatasetPartition::from_counts(counts, None)?;
    let q = (0..m)
        .map(|i| {
            (0..k)
                .map(|c| {
                    partition.is_active(i, c).then(|| {
                        let z: Vec<f64> = (0..k).map(|_| 1.5 * Distribution::<f64>::sample(&StandardNormal, rng)).collect();
                        softmax(&z)
                    })
                })
                .collect()
        })
        .collect();
    let knowledge = KnowledgeSet::new(q, &partition, 0)?;
    Ok(RandomRound {
        peak_powers: cfg.peak_powers(),
        path_loss,
        channel,
        knowledge,
        partition,
    })
}

/// Maximum of `Σ_k c_k min_j tr(W H_j^k)` over two-dimensional density
/// matrices, by a grid over the Bloch ball followed by local zooming.
/// Returns the value in the sign convention of the solver's objective
/// (i.e. negated).
pub fn bloch_ball_optimum(problem: &SdpProblem, grid: usize) -> f64 {
    assert_eq!(problem.dim(), 2, "the Bloch-ball oracle needs N = 2");
    // tr(W h h^H) = (a + r·b) / 2 with W = (I + r·σ) / 2
    let terms: Vec<Vec<(f64, [f64; 3])>> = problem
        .factors()
        .iter()
        .map(|fam| {
            fam.iter()
                .flatten()
                .map(|h| {
                    let z = h[0].conj() * h[1];
                    let a = h[0].norm_sqr() + h[1].norm_sqr();
                    (a, [2.0 * z.re, 2.0 * z.im, h[0].norm_sqr() - h[1].norm_sqr()])
                })
                .collect()
        })
        .collect();
    let weights = problem.class_weights();
    let value = |r: [f64; 3]| -> f64 {
        terms
            .iter()
            .zip(weights)
            .map(|(fam, c)| {
                c * fam
                    .iter()
                    .map(|(a, b)| 0.5 * (a + r[0] * b[0] + r[1] * b[1] + r[2] * b[2]))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    let project = |r: [f64; 3]| {
        let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if n > 1.0 {
            [r[0] / n, r[1] / n, r[2] / n]
        } else {
            r
        }
    };
    let g = grid.max(4);
    let step = 2.0 / g as f64;
    let mut starts: Vec<(f64, [f64; 3])> = Vec::new();
    for i in 0..=g {
        for j in 0..=g {
            for l in 0..=g {
                let r = [-1.0 + i as f64 * step, -1.0 + j as f64 * step, -1.0 + l as f64 * step];
                if r[0] * r[0] + r[1] * r[1] + r[2] * r[2] <= 1.0 + 1e-12 {
                    starts.push((value(r), r));
                }
            }
        }
    }
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    // zoom with a randomly rotated stencil so ridges of the piecewise-linear
    // objective that are not axis-aligned cannot stall the search
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut best = starts[0].0;
    for &(v0, r0) in starts.iter().take(8) {
        let (mut v, mut r) = (v0, r0);
        let mut h = step;
        let mut misses = 0;
        while h > 1e-12 {
            let q = nalgebra::Rotation3::from_scaled_axis(nalgebra::Vector3::new(
                rng.random_range(-3.2..3.2),
                rng.random_range(-1.6..1.6),
                rng.random_range(-3.2..3.2),
            ));
            let mut improved = false;
            for di in -3i32..=3 {
                for dj in -3i32..=3 {
                    for dl in -3i32..=3 {
                        let d = q * nalgebra::Vector3::new(di as f64, dj as f64, dl as f64) * (h / 3.0);
                        let cand = project([r[0] + d[0], r[1] + d[1], r[2] + d[2]]);
                        let cv = value(cand);
                        if cv > v {
                            v = cv;
                            r = cand;
                            improved = true;
                        }
                    }
                }
            }
            if improved {
                misses = 0;
            } else {
                misses += 1;
                if misses >= 3 {
                    h *= 0.5;
                    misses = 0;
                }
            }
        }
        best = best.max(v);
    }
    -best
}

/// Best rank-one value over a `grid × grid` phase-quotiented sweep of the
/// unit sphere in `C²`, `w = (cos(θ/2), e^{iφ} sin(θ/2))`, negated like
/// the solver's objective.
pub fn unit_sphere_grid_optimum(problem: &SdpProblem, grid: usize) -> f64 {
    assert_eq!(problem.dim(), 2, "the sphere grid needs N = 2");
    let mut best = f64::INFINITY;
    for i in 0..grid {
        let theta = std::f64::consts::PI * i as f64 / (grid - 1) as f64;
        let (s, c) = (0.5 * theta).sin_cos();
        for j in 0..grid {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / grid as f64;
            let w = DVector::from_vec(vec![Complex64::new(c, 0.0), Complex64::from_polar(s, phi)]);
            best = best.min(problem.beamformer_objective(&w));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Run every self-check on `instances` random rounds drawn from `seed`.
pub fn run_verify(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let base = ChannelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SolverOptions::default();
    let mut checks = Vec::new();

    let (mut worst_phi1, mut worst_exact, mut saturation_failures, mut rank_one) = (0.0f64, 0.0f64, 0usize, 0usize);
    for _ in 0..instances {
        let m = rng.random_range(1..=10);
        let n = rng.random_range(1..=6);
        let k = rng.random_range(2..=5);
        let r = random_round(&mut rng, &base, m, n, k, 0.2)?;
        let plan = optimize_round(&r.channel, &r.knowledge, &r.partition, &r.peak_powers, &opts)?;
        worst_phi1 = phi1(&plan, &r.channel, &r.knowledge, &r.partition)?.into_iter().fold(worst_phi1, f64::max);
        let noise = vec![DVector::zeros(n); k * k];
        let est = aggregate_over_the_air(&r.knowledge, &plan.transmit, &plan.receive, &r.channel, &noise)?;
        let target = global_target(&r.knowledge, &r.partition)?;
        for c in 0..k {
            for d in 0..k {
                worst_exact = worst_exact.max((est.complex_estimates[c][d] - target[c][d]).norm());
            }
        }
        for c in 0..k {
            let s = plan.diagnostics.stragglers[c];
            for i in (0..m).filter(|&i| r.partition.is_active(i, c)) {
                let u = plan.transmit.utilization(i, c);
                let ok = if i == s { (u - 1.0).abs() <= 1e-9 } else { u < 1.0 };
                saturation_failures += usize::from(!ok);
            }
        }
        let (l1, l2) = plan.diagnostics.eigenvalues.unwrap_or((1.0, 0.0));
        rank_one += usize::from(l2 <= RANK_ONE_RATIO * l1);
    }
    checks.push(Check {
        name: "zero-misalignment",
        passed: worst_phi1 <= 1e-9,
        detail: format!("max misalignment {worst_phi1:.3e} over {instances} rounds"),
    });
    checks.push(Check {
        name: "noiseless-exactness",
        passed: worst_exact <= 1e-9,
        detail: format!("max estimate error {worst_exact:.3e}"),
    });
    checks.push(Check {
        name: "straggler-saturation",
        passed: saturation_failures == 0,
        detail: format!("{saturation_failures} device/class pairs off the expected power level"),
    });
    checks.push(Check {
        name: "rank-one-relaxation",
        passed: rank_one == instances,
        detail: format!("{rank_one}/{instances} relaxed solutions have eigenvalue ratio <= {RANK_ONE_RATIO:e}"),
    });

    let mc_instances = instances.clamp(1, 5);
    let mut worst_z = 0.0f64;
    for _ in 0..mc_instances {
        let r = random_round(&mut rng, &base, 4, 3, 3, 0.0)?;
        let plan = optimize_round(&r.channel, &r.knowledge, &r.partition, &r.peak_powers, &opts)?;
        let var = 1e-20;
        let exact = phi2_sq_analytic(&plan.receive.denormalizers, &r.partition, var)?;
        let mc = phi2_sq_monte_carlo(&plan, &r.partition, var, 20_000, &mut rng)?;
        for i in 0..exact.len() {
            worst_z = worst_z.max((mc.mean[i] - exact[i]).abs() / mc.std_error[i]);
        }
    }
    checks.push(Check {
        name: "noise-term-formula",
        passed: worst_z <= 4.0,
        detail: format!("largest deviation {worst_z:.2} standard errors"),
    });

    let arch = Architecture::new(5, 8, 3)?;
    let mut model = ModelParams::random(arch, &mut rng);
    let features: Vec<Vec<f64>> = (0..12).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let data = Dataset::new(features, (0..12).map(|i| i % 3).collect(), 3)?;
    let know: Vec<Vec<f64>> = (0..3).map(|_| softmax(&[rng.random(), rng.random(), rng.random()])).collect();
    let idx: Vec<usize> = (0..12).collect();
    let lg = loss_and_grad(&model, &data, &idx, Some(&know), 0.8)?;
    let mut worst_rel = 0.0f64;
    for j in 0..model.dim() {
        let orig = model.theta[j];
        let h = 1e-6;
        model.theta[j] = orig + h;
        let up = loss_and_grad(&model, &data, &idx, Some(&know), 0.8)?.loss;
        model.theta[j] = orig - h;
        let down = loss_and_grad(&model, &data, &idx, Some(&know), 0.8)?.loss;
        model.theta[j] = orig;
        let fd = (up - down) / (2.0 * h);
        worst_rel = worst_rel.max((fd - lg.grad[j]).abs() / fd.abs().max(lg.grad[j].abs()).max(1e-6));
    }
    checks.push(Check {
        name: "gradient",
        passed: worst_rel <= 1e-4,
        detail: format!("max relative finite-difference error {worst_rel:.2e} over {} parameters", model.dim()),
    });

    let mut worst_gap = 0.0f64;
    for _ in 0..instances.clamp(1, 10) {
        let m = rng.random_range(1..=5);
        let k = rng.random_range(1..=3).max(2);
        let r = random_round(&mut rng, &base, m, 2, k, 0.0)?;
        let problem = build_sdp_problem(&r.channel, &r.knowledge, &r.partition, &r.peak_powers)?;
        let sol = sdp::solve(&problem, &opts)?;
        let oracle = bloch_ball_optimum(&problem, 24);
        worst_gap = worst_gap.max((sol.objective - oracle).abs() / oracle.abs());
    }
    checks.push(Check {
        name: "relaxation-oracle",
        passed: worst_gap <= 1e-6,
        detail: format!("max relative gap to the Bloch-ball optimum {worst_gap:.2e}"),
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_rounds_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let r = random_round(&mut rng, &ChannelConfig::default(), 4, 3, 3, 0.5).unwrap();
            assert_eq!(r.channel.num_wds(), 4);
            assert_eq!(r.knowledge.num_classes, 3);
        }
    }

    #[test]
    fn ball_oracle_matches_matched_filter() {
        let h = DVector::from_vec(vec![Complex64::new(0.3, 0.4), Complex64::new(-1.2, 0.5)]);
        let p = SdpProblem::new(2, vec![2.0], vec![vec![Some(h.clone())]]).unwrap();
        let v = bloch_ball_optimum(&p, 12);
        assert!((v + 2.0 * h.norm_squared()).abs() < 1e-9);
        let s = unit_sphere_grid_optimum(&p, 400);
        assert!((s - v).abs() / v.abs() < 1e-3);
    }
}
