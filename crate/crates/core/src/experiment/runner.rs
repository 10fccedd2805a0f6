//! The multi-round distillation loop for every method and trial.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::dataset::synthesize;
use super::partition::{partition, Assignment};
use crate::airagg::{aggregate_error_free, aggregate_over_the_air, EstimatedKnowledge};
use crate::channel::{path_loss, perturb_csi_scaled, sample_channel, sample_distances, sample_noise, ChannelState};
use crate::error::{Error, Result};
use crate::knowledge::{local_knowledge, KnowledgeSet};
use crate::learner::{accuracy, forward, train_round, Architecture, Dataset, ModelParams};
use crate::metrics::{p2_objective, p4_objective, phi1, phi2_sq_analytic, phi2_sq_monte_carlo, RoundMetrics, CSV_HEADER};
use crate::rng::{derive_seed, stream, Purpose};
use crate::sdp::SolverOptions;
use crate::transceiver::{optimize_round, orthogonal_baseline, uniform_baseline, TransceiverPlan};

/// Everything a trial shares across methods.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub seed: u64,
    pub train: Dataset,
    pub test: Dataset,
    pub assignment: Assignment,
    pub distances: Vec<f64>,
    pub path_loss: Vec<f64>,
    pub init: Vec<ModelParams>,
}

impl TrialSetup {
    pub fn new(cfg: &ExperimentConfig, trial: usize) -> Result<Self> {
        let seed = derive_seed(cfg.experiment.seed, Purpose::Trial, 0, trial as u64);
        let spec = &cfg.data.spec;
        let train = synthesize(spec, spec.train_samples, &mut stream(seed, Purpose::Dataset, 0, 0))?;
        let test = synthesize(spec, spec.test_samples, &mut stream(seed, Purpose::Dataset, 0, 1))?;
        let assignment = partition(
            &train,
            cfg.data.partition,
            cfg.channel.num_wds,
            &mut stream(seed, Purpose::Partition, 0, 0),
        )?;
        let distances = sample_distances(&cfg.channel, &mut stream(seed, Purpose::Placement, 0, 0));
        let path_loss = distances.iter().map(|&d| path_loss(d, &cfg.channel)).collect::<Result<_>>()?;
        let arch = Architecture::new(spec.feature_dim, cfg.learner.hidden, spec.num_classes)?;
        let init = (0..cfg.channel.num_wds)
            .map(|i| ModelParams::random(arch, &mut stream(seed, Purpose::ModelInit, 0, i as u64)))
            .collect();
        Ok(Self {
            seed,
            train,
            test,
            assignment,
            distances,
            path_loss,
            init,
        })
    }

    /// True channel and the server's estimate for round `t`.
    pub fn channels(&self, cfg: &ExperimentConfig, t: usize) -> Result<(ChannelState, ChannelState)> {
        let truth = sample_channel(&cfg.channel, &self.distances, t as u64, &mut stream(self.seed, Purpose::Fading, t as u64, 0))?;
        let scales = if cfg.experiment.scaled_csi_error {
            self.path_loss.clone()
        } else {
            vec![1.0; self.path_loss.len()]
        };
        let estimate = perturb_csi_scaled(
            &truth,
            cfg.channel.csi_quality,
            &scales,
            &mut stream(self.seed, Purpose::CsiError, t as u64, 0),
        )?;
        Ok((truth, estimate))
    }
}

/// Per-class averaged soft predictions of every device.
pub fn generate_knowledge(models: &[ModelParams], setup: &TrialSetup, round: u64) -> Result<KnowledgeSet> {
    let k = setup.train.num_classes;
    let rows = models
        .iter()
        .zip(&setup.assignment.indices)
        .map(|(model, idx)| {
            let mut groups = vec![Vec::new(); k];
            for &s in idx {
                groups[setup.train.labels[s]].push(forward(model, &setup.train.features[s])?);
            }
            let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
            local_knowledge(&groups, &counts)
        })
        .collect::<Result<Vec<_>>>()?;
    KnowledgeSet::new(rows, &setup.assignment.partition, round)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub method: Method,
    pub trial: usize,
    #[serde(skip)]
    pub rows: Vec<RoundMetrics>,
    pub final_accuracy: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub final_distill_loss: Option<f64>,
    /// Set when the trial aborted; rows hold the rounds completed before.
    pub error: Option<String>,
    #[serde(skip)]
    pub final_models: Vec<ModelParams>,
}

struct RoundPlan {
    estimate: EstimatedKnowledge,
    plan: Option<TransceiverPlan>,
    wall_ms: f64,
}

fn aggregate(
    cfg: &ExperimentConfig,
    setup: &TrialSetup,
    method: Method,
    t: usize,
    knowledge: &KnowledgeSet,
    truth: &ChannelState,
    estimate: &ChannelState,
) -> Result<RoundPlan> {
    let part = &setup.assignment.partition;
    let powers = cfg.channel.peak_powers();
    let (n, k) = (cfg.channel.num_antennas, knowledge.num_classes);
    let var = cfg.channel.noise_variance;
    let noise = |index: u64| sample_noise(n, k * k, var, &mut stream(setup.seed, Purpose::ReceiverNoise, t as u64, index));
    let start = Instant::now();
    let elapsed = |s: Instant| if cfg.experiment.record_wall_clock { s.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    match method {
        Method::Proposed | Method::Uniform => {
            let plan = if method == Method::Proposed {
                let opts = SolverOptions::with_tol(cfg.experiment.solver_tol);
                optimize_round(estimate, knowledge, part, &powers, &opts)?
            } else {
                uniform_baseline(estimate, knowledge, part, &powers)?
            };
            let wall_ms = elapsed(start);
            let est = aggregate_over_the_air(knowledge, &plan.transmit, &plan.receive, truth, &noise(0)?)?;
            Ok(RoundPlan {
                estimate: est,
                plan: Some(plan),
                wall_ms,
            })
        }
        Method::Orthogonal => {
            let links = (0..cfg.channel.num_wds).map(|i| noise(1 + i as u64)).collect::<Result<Vec<_>>>()?;
            let est = orthogonal_baseline(truth, knowledge, part, &powers, &links)?;
            Ok(RoundPlan {
                estimate: est,
                plan: None,
                wall_ms: elapsed(start),
            })
        }
        Method::ErrorFree => Ok(RoundPlan {
            estimate: aggregate_error_free(knowledge, part)?,
            plan: None,
            wall_ms: elapsed(start),
        }),
    }
}

fn is_eval_round(cfg: &ExperimentConfig, t: usize) -> bool {
    (t + 1) % cfg.experiment.eval_every == 0 || t + 1 == cfg.learner.rounds
}

fn run_rounds(
    cfg: &ExperimentConfig,
    setup: &TrialSetup,
    method: Method,
    trial: usize,
    models: &mut [ModelParams],
    rows: &mut Vec<RoundMetrics>,
) -> Result<()> {
    let part = &setup.assignment.partition;
    let powers = cfg.channel.peak_powers();
    let a2 = cfg.bound.a2(cfg.learner.distill_weight, cfg.learner.init_lr);
    for t in 0..cfg.learner.rounds {
        let knowledge = generate_knowledge(models, setup, t as u64)?;
        let (truth, estimate) = setup.channels(cfg, t)?;
        let round = aggregate(cfg, setup, method, t, &knowledge, &truth, &estimate)?;

        let mut row = RoundMetrics {
            trial,
            round: t,
            plan_tag: method.as_str().to_string(),
            antennas: cfg.channel.num_antennas,
            wds: cfg.channel.num_wds,
            classes: knowledge.num_classes,
            zeta: cfg.channel.csi_quality,
            phi1: vec![],
            phi2_sq: vec![],
            phi2_sq_monte_carlo: None,
            p2_objective: None,
            p4_objective: None,
            eigenvalues: None,
            power_utilization: vec![],
            stragglers: vec![],
            train_loss: vec![],
            distill_loss: vec![],
            test_accuracy: None,
            wall_ms: round.wall_ms,
        };
        if let Some(plan) = &round.plan {
            let w = &plan.receive.beamformer;
            row.phi1 = phi1(plan, &truth, &knowledge, part)?;
            row.phi2_sq = phi2_sq_analytic(&plan.receive.denormalizers, part, cfg.channel.noise_variance)?;
            if cfg.experiment.monte_carlo_draws > 1 {
                let mut rng = stream(setup.seed, Purpose::NoiseMonteCarlo, t as u64, 0);
                let mc = phi2_sq_monte_carlo(plan, part, cfg.channel.noise_variance, cfg.experiment.monte_carlo_draws, &mut rng)?;
                row.phi2_sq_monte_carlo = Some(mc.mean);
            }
            let p2 = p2_objective(w, &truth, &knowledge, part, &powers, cfg.channel.noise_variance, a2, cfg.learner.rounds)?;
            row.p2_objective = Some(p2);
            row.p4_objective = Some(p4_objective(w, &truth, &knowledge, part, &powers)?);
            row.eigenvalues = plan.diagnostics.eigenvalues;
            row.power_utilization = (0..part.num_wds())
                .map(|i| (0..knowledge.num_classes).map(|c| plan.transmit.utilization(i, c)).collect())
                .collect();
            row.stragglers = plan.diagnostics.stragglers.clone();
        }

        let know = &round.estimate.real_view;
        for (i, model) in models.iter_mut().enumerate() {
            let mut rng = stream(setup.seed, Purpose::Minibatch, t as u64, i as u64);
            let lg = train_round(model, &setup.train, &setup.assignment.indices[i], Some(know), &cfg.learner, t, &mut rng)?;
            row.train_loss.push(lg.loss);
            row.distill_loss.push(lg.distillation);
        }
        if is_eval_round(cfg, t) {
            row.test_accuracy = Some(models.iter().map(|m| accuracy(m, &setup.test)).collect::<Result<_>>()?);
        }
        rows.push(row);
    }
    Ok(())
}

/// Run one method on one trial. Errors abort the trial and are recorded in
/// the outcome rather than returned.
pub fn run_trial(cfg: &ExperimentConfig, setup: &TrialSetup, method: Method, trial: usize) -> TrialOutcome {
    let mut models = setup.init.clone();
    let mut rows = Vec::with_capacity(cfg.learner.rounds);
    let error = run_rounds(cfg, setup, method, trial, &mut models, &mut rows).err().map(|e| {
        log::error!("{method} trial {trial} aborted: {e}");
        e.to_string()
    });
    let last = rows.last();
    TrialOutcome {
        method,
        trial,
        final_accuracy: rows.iter().rev().find_map(RoundMetrics::test_accuracy_mean),
        final_train_loss: last.map(RoundMetrics::train_loss_mean),
        final_distill_loss: last.map(RoundMetrics::distill_loss_mean),
        error,
        rows,
        final_models: models,
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub outcomes: Vec<TrialOutcome>,
}

impl ExperimentResult {
    pub fn aborted(&self) -> usize {
        self.outcomes.iter().filter(|o| o.error.is_some()).count()
    }

    /// Mean final accuracy of a method over the trials that completed.
    pub fn mean_final_accuracy(&self, method: Method) -> Option<f64> {
        let v: Vec<f64> = self
            .outcomes
            .iter()
            .filter(|o| o.method == method && o.error.is_none())
            .filter_map(|o| o.final_accuracy)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_final_distill_loss(&self, method: Method) -> Option<f64> {
        let v: Vec<f64> = self
            .outcomes
            .iter()
            .filter(|o| o.method == method && o.error.is_none())
            .filter_map(|o| o.final_distill_loss)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// CSV text for one method, rows ordered by trial then round.
    pub fn csv(&self, method: Method) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for o in self.outcomes.iter().filter(|o| o.method == method) {
            for r in &o.rows {
                out.push_str(&r.csv_row());
                out.push('\n');
            }
        }
        out
    }
}

/// Run every configured method on every trial. Trials share their dataset,
/// placement, fading and noise draws across methods.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut outcomes = Vec::new();
    for trial in 0..cfg.experiment.trials {
        let setup = TrialSetup::new(cfg, trial)?;
        for &method in &cfg.experiment.methods {
            log::info!("trial {trial}: running {method}");
            outcomes.push(run_trial(cfg, &setup, method, trial));
        }
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        outcomes,
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    methods: Vec<MethodSummary>,
    trials: &'a [TrialOutcome],
}

#[derive(Serialize)]
struct MethodSummary {
    method: Method,
    mean_final_accuracy: Option<f64>,
    mean_final_distill_loss: Option<f64>,
    aborted_trials: usize,
}

/// Write `<method>.csv` for every method, `summary.json` and the resolved
/// `config.toml` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &method in &result.config.experiment.methods {
        let path = dir.join(format!("{method}.csv"));
        std::fs::write(&path, result.csv(method))?;
        written.push(path);
    }
    let summary = Summary {
        methods: result
            .config
            .experiment
            .methods
            .iter()
            .map(|&m| MethodSummary {
                method: m,
                mean_final_accuracy: result.mean_final_accuracy(m),
                mean_final_distill_loss: result.mean_final_distill_loss(m),
                aborted_trials: result.outcomes.iter().filter(|o| o.method == m && o.error.is_some()).count(),
            })
            .collect(),
        trials: &result.outcomes,
    };
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?)?;
    written.push(path);
    let path = dir.join("config.toml");
    std::fs::write(&path, result.config.to_toml())?;
    written.push(path);
    Ok(written)
}
