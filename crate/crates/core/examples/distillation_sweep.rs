//! Final test accuracy of the proposed scheme for several distillation
//! weights.

use otafd::experiment::{run_experiment, ExperimentConfig, Method};

fn main() -> otafd::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.methods = vec![Method::Proposed];
    cfg.experiment.trials = 2;
    cfg.learner.rounds = 100;
    for gamma in [0.0, 0.3, 3.0, 30.0] {
        cfg.learner.distill_weight = gamma;
        let result = run_experiment(&cfg)?;
        println!(
            "gamma {gamma:>5}: accuracy {:.2}%  distillation loss {:.4}",
            100.0 * result.mean_final_accuracy(Method::Proposed).unwrap_or(f64::NAN),
            result.mean_final_distill_loss(Method::Proposed).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
