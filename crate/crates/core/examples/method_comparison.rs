//! Run all four aggregation schemes on the same trials and write the CSVs.

use otafd::experiment::{run_experiment, write_outputs, ExperimentConfig, Method};

fn main() -> otafd::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.methods = Method::ALL.to_vec();
    cfg.experiment.trials = 2;
    cfg.learner.rounds = 60;
    cfg.experiment.monte_carlo_draws = 20;
    let result = run_experiment(&cfg)?;
    for m in Method::ALL {
        println!("{m:>10}: {:.2}%", 100.0 * result.mean_final_accuracy(m).unwrap_or(f64::NAN));
    }
    let dir = std::env::temp_dir().join("otafd-method-comparison");
    for path in write_outputs(&result, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
