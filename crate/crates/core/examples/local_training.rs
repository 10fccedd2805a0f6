//! Train one device model with and without a distillation target and
//! save a checkpoint.

use otafd::experiment::{synthesize, DatasetSpec};
use otafd::learner::{accuracy, save_checkpoint, train_round, Architecture, LearnerConfig, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> otafd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = DatasetSpec::default();
    let train = synthesize(&spec, 300, &mut rng)?;
    let test = synthesize(&spec, 2000, &mut rng)?;
    let init = ModelParams::random(Architecture::new(spec.feature_dim, 8, spec.num_classes)?, &mut rng);
    let idx: Vec<usize> = (0..train.len()).collect();
    // a soft teacher that places 80% on the true class
    let teacher: Vec<Vec<f64>> = (0..3).map(|k| (0..3).map(|d| if d == k { 0.8 } else { 0.1 }).collect()).collect();
    for gamma in [0.0, 3.0] {
        let cfg = LearnerConfig {
            distill_weight: gamma,
            hidden: 8,
            ..LearnerConfig::default()
        };
        let mut model = init.clone();
        for t in 0..150 {
            let lg = train_round(&mut model, &train, &idx, Some(&teacher), &cfg, t, &mut rng)?;
            if t % 50 == 0 {
                println!("gamma {gamma} round {t:>3}: CE {:.4} distill {:.4}", lg.cross_entropy, lg.distillation);
            }
        }
        println!("gamma {gamma}: test accuracy {:.2}%", 100.0 * accuracy(&model, &test)?);
        if gamma > 0.0 {
            let text = save_checkpoint(&model);
            println!("checkpoint: {} lines", text.lines().count());
        }
    }
    Ok(())
}
