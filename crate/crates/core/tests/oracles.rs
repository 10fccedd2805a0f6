use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otafd::channel::ChannelConfig;
use otafd::experiment::{
    bloch_ball_optimum, dirichlet_proportions, partition, random_round, simplex_means, synthesize, DatasetSpec, PartitionMode,
};
use otafd::learner::{accuracy, train_round, Architecture, LearnerConfig, ModelParams};
use otafd::metrics::{p2_objective, phi2_sq_analytic, phi2_sq_monte_carlo};
use otafd::sdp::{self, extract_principal_eigenpair, SdpProblem, SolverOptions};
use otafd::transceiver::{build_sdp_problem, optimal_postprocessing, optimize_round};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn problem(weights: Vec<f64>, rows: Vec<Vec<Vec<Complex64>>>) -> SdpProblem {
    let dim = rows[0][0].len();
    let factors = rows.into_iter().map(|fam| fam.into_iter().map(|h| Some(DVector::from_vec(h))).collect()).collect();
    SdpProblem::new(dim, weights, factors).unwrap()
}

// Reference optima from an independent conic solver (two solvers agreed to 1e-9).
#[test]
fn matches_frozen_conic_solver_values() {
    let a = problem(
        vec![1.0, 0.5],
        vec![
            vec![
                vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.5)],
                vec![c(0.2, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), c(0.3, -0.4), c(1.0, 0.0)],
            ],
            vec![
                vec![c(0.7, 0.0), c(0.0, 0.7), c(0.0, 0.0)],
                vec![c(1.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0)],
                vec![c(0.1, 0.0), c(0.0, 0.0), c(0.9, 0.0)],
            ],
        ],
    );
    let b = problem(
        vec![0.3, 1.2],
        vec![
            vec![vec![c(2.0, 0.0), c(0.0, 1.0)], vec![c(0.5, 0.0), c(-1.0, 0.0)]],
            vec![
                vec![c(1.0, 1.0), c(0.2, 0.0)],
                vec![c(0.3, 0.0), c(0.0, 0.9)],
                vec![c(1.0, 0.0), c(1.0, 0.0)],
            ],
        ],
    );
    let opts = SolverOptions::default();
    for (p, reference) in [(a, -0.719_996_017_9), (b, -1.105_703_191_5)] {
        let sol = sdp::solve(&p, &opts).unwrap();
        assert!((sol.objective - reference).abs() <= 1e-7 * reference.abs(), "{} vs {reference}", sol.objective);
        assert!((sol.dual_bound - reference).abs() <= 1e-7 * reference.abs());
        sol.check(&p, 1e-7).unwrap();
        let pair = extract_principal_eigenpair(&sol.w);
        assert!(!pair.degenerate);
        assert!((p.beamformer_objective(&pair.vector) - reference).abs() <= 1e-6 * reference.abs());
    }
}

#[test]
fn relaxation_can_be_rank_two() {
    // max-min over three directions in C^4 whose optimum needs two eigenvectors
    let p = problem(
        vec![1.0],
        vec![vec![
            vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 3.0), c(-1.0, 0.0)],
            vec![c(0.0, 0.5), c(0.5, 0.0), c(-0.5, 0.0), c(1.0, 0.0)],
            vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)],
        ]],
    );
    let sol = sdp::solve(&p, &SolverOptions::default()).unwrap();
    assert!((sol.objective + 35.0 / 27.0).abs() <= 1e-7);
    let pair = extract_principal_eigenpair(&sol.w);
    assert!(pair.degenerate);
    assert!(p.beamformer_objective(&pair.vector) > sol.objective + 1e-3);
}

#[test]
fn relaxed_value_matches_bloch_ball_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let opts = SolverOptions::default();
    for _ in 0..20 {
        let (m, k) = (rng.random_range(1..=5), rng.random_range(2..=3));
        let r = random_round(&mut rng, &ChannelConfig::default(), m, 2, k, 0.0).unwrap();
        let p = build_sdp_problem(&r.channel, &r.knowledge, &r.partition, &r.peak_powers).unwrap();
        let sol = sdp::solve(&p, &opts).unwrap();
        let oracle = bloch_ball_optimum(&p, 24);
        assert!((sol.objective - oracle).abs() <= 1e-6 * oracle.abs(), "{} vs {oracle}", sol.objective);
    }
}

#[test]
fn denormalizers_match_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..50 {
        let (m, n, k) = (rng.random_range(1..=8), rng.random_range(1..=5), rng.random_range(2..=4));
        let r = random_round(&mut rng, &ChannelConfig::default(), m, n, k, 0.3).unwrap();
        let w = DVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).normalize();
        let post = optimal_postprocessing(&w, &r.channel, &r.knowledge, &r.partition, &r.peak_powers).unwrap();
        for class in 0..k {
            let mut best = f64::INFINITY;
            let mut who = usize::MAX;
            for i in 0..m {
                let bik = r.partition.counts()[i][class];
                if bik == 0 {
                    continue;
                }
                let total: usize = (0..m).map(|j| r.partition.counts()[j][class]).sum();
                let q = &r.knowledge.cells[i][class].as_ref().unwrap().q;
                let mean = q.iter().sum::<f64>() / k as f64;
                let std = (q.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64).sqrt();
                let gain: Complex64 = w.iter().zip(r.channel.coefficients[i].iter()).map(|(a, b)| a.conj() * b).sum();
                let v = total as f64 * gain.norm() * r.peak_powers[i].sqrt() / (bik as f64 * std);
                if v < best {
                    best = v;
                    who = i;
                }
            }
            assert!((post.denormalizers[class] - best).abs() <= 1e-12 * best);
            assert_eq!(post.stragglers[class], who);
        }
    }
}

#[test]
fn p2_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..50 {
        let (m, n, k) = (rng.random_range(1..=8), rng.random_range(1..=5), rng.random_range(2..=4));
        let r = random_round(&mut rng, &ChannelConfig::default(), m, n, k, 0.3).unwrap();
        let w = DVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).normalize();
        let (var, a2, rounds) = (rng.random_range(1e-21..1e-19), rng.random_range(0.1..10.0), 200);
        let ours = p2_objective(&w, &r.channel, &r.knowledge, &r.partition, &r.peak_powers, var, a2, rounds).unwrap();
        let post = optimal_postprocessing(&w, &r.channel, &r.knowledge, &r.partition, &r.peak_powers).unwrap();
        // with the optimal λ the objective is A2 K σ² / √T Σ_i Σ_k (B_i^k / B_i) / λ^k
        let mut reference = 0.0;
        for i in 0..m {
            let bi: usize = r.partition.counts()[i].iter().sum();
            for class in 0..k {
                reference += r.partition.counts()[i][class] as f64 / bi as f64 / post.denormalizers[class];
            }
        }
        reference *= a2 * k as f64 * var / (rounds as f64).sqrt();
        assert!((ours - reference).abs() <= 1e-12 * reference, "{ours} vs {reference}");
    }
}

#[test]
fn monte_carlo_noise_term_agrees_with_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..5 {
        let r = random_round(&mut rng, &ChannelConfig::default(), 5, 3, 3, 0.2).unwrap();
        let plan = optimize_round(&r.channel, &r.knowledge, &r.partition, &r.peak_powers, &SolverOptions::default()).unwrap();
        let exact = phi2_sq_analytic(&plan.receive.denormalizers, &r.partition, 1e-20).unwrap();
        let mc = phi2_sq_monte_carlo(&plan, &r.partition, 1e-20, 20_000, &mut rng).unwrap();
        for i in 0..exact.len() {
            assert!((mc.mean[i] - exact[i]).abs() <= 4.5 * mc.std_error[i], "{} vs {}", mc.mean[i], exact[i]);
        }
    }
}

#[test]
fn dirichlet_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let (m, draws) = (10, 10_000);
    let mut sum = vec![0.0; m];
    for _ in 0..draws {
        let p = dirichlet_proportions(m, 0.5, &mut rng).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        sum.iter_mut().zip(&p).for_each(|(s, v)| *s += v);
    }
    // Var = (1/M)(1 - 1/M) / (Mψ + 1)
    let se = ((0.1 * 0.9) / (10.0 * 0.5 + 1.0) / draws as f64).sqrt();
    for s in sum {
        assert!((s / draws as f64 - 0.1).abs() <= 4.0 * se);
    }
    let flat = dirichlet_proportions(m, 1e6, &mut rng).unwrap();
    assert!(flat.iter().all(|v| (v - 0.1).abs() <= 0.001));
}

#[test]
fn partitions_cover_every_sample_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let spec = DatasetSpec::default();
    let data = synthesize(&spec, 600, &mut rng).unwrap();
    for mode in [PartitionMode::Iid, PartitionMode::Dirichlet { concentration: 0.3 }] {
        let a = partition(&data, mode, 10, &mut rng).unwrap();
        let mut all: Vec<usize> = a.indices.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..600).collect::<Vec<_>>());
        assert!(a.indices.iter().all(|v| !v.is_empty()));
        for i in 0..10 {
            for class in 0..3 {
                let n = a.indices[i].iter().filter(|&&s| data.labels[s] == class).count();
                assert_eq!(n, a.partition.count(i, class));
            }
        }
        if mode == PartitionMode::Iid {
            assert!(a.indices.iter().all(|v| v.len() == 60));
        }
    }
}

#[test]
fn simplex_means_are_equidistant() {
    for (k, d, s) in [(2, 1, 1.0), (3, 8, 3.0), (5, 4, 2.5), (10, 20, 7.0)] {
        let means = simplex_means(k, d, s).unwrap();
        for a in 0..k {
            for b in a + 1..k {
                let dist: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!((dist - s).abs() < 1e-12);
            }
        }
    }
}

fn centralized_accuracy(separation: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let spec = DatasetSpec {
        separation,
        ..DatasetSpec::default()
    };
    let train = synthesize(&spec, 600, &mut rng).unwrap();
    let test = synthesize(&spec, 3000, &mut rng).unwrap();
    let cfg = LearnerConfig {
        distill_weight: 0.0,
        ..LearnerConfig::default()
    };
    let mut model = ModelParams::random(Architecture::new(spec.feature_dim, cfg.hidden, 3).unwrap(), &mut rng);
    let idx: Vec<usize> = (0..train.len()).collect();
    for t in 0..300 {
        train_round(&mut model, &train, &idx, None, &cfg, t, &mut rng).unwrap();
    }
    accuracy(&model, &test).unwrap()
}

#[test]
fn dataset_separation_controls_difficulty() {
    assert!((centralized_accuracy(0.0) - 1.0 / 3.0).abs() < 0.05);
    assert!(centralized_accuracy(10.0) > 0.95);
}
