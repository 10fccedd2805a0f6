use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use otafd::experiment::{run_experiment, run_verify, write_outputs, ExperimentConfig, Method};

#[derive(Parser)]
#[command(name = "otafd", version, about = "Over-the-air federated distillation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSVs and a summary.
    Run {
        /// TOML configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated list of proposed, uniform, orthogonal, error_free.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        antennas: Option<usize>,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Record measured wall-clock times in the CSVs.
        #[arg(long)]
        wall_clock: bool,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dump_effective_config: bool,
    },
    /// Run the randomized self-check suite.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> otafd::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            methods,
            trials,
            antennas,
            zeta,
            gamma,
            wall_clock,
            dump_effective_config,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(v) = seed {
                cfg.experiment.seed = v;
            }
            if let Some(v) = out {
                cfg.experiment.out_dir = v;
            }
            if let Some(v) = methods {
                cfg.experiment.methods = v;
            }
            if let Some(v) = trials {
                cfg.experiment.trials = v;
            }
            if let Some(v) = antennas {
                cfg.channel.num_antennas = v;
            }
            if let Some(v) = zeta {
                cfg.channel.csi_quality = v;
            }
            if let Some(v) = gamma {
                cfg.learner.distill_weight = v;
            }
            cfg.experiment.record_wall_clock |= wall_clock;
            cfg.validate()?;
            if dump_effective_config {
                print!("{}", cfg.to_toml());
                return Ok(ExitCode::SUCCESS);
            }
            let result = run_experiment(&cfg)?;
            for path in write_outputs(&result, &cfg.experiment.out_dir)? {
                println!("wrote {}", path.display());
            }
            for &m in &cfg.experiment.methods {
                match result.mean_final_accuracy(m) {
                    Some(acc) => println!("{m:>10}: mean final test accuracy {:.2}%", 100.0 * acc),
                    None => println!("{m:>10}: no completed trial"),
                }
            }
            let aborted = result.aborted();
            if aborted > 0 {
                eprintln!("{aborted} trial(s) aborted; see summary.json");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed, instances } => {
            let checks = run_verify(seed, instances)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {:<22} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
