use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use otafd::experiment::{run_experiment, synthesize, write_outputs, DatasetSpec, ExperimentConfig, Method, PartitionMode};
use otafd::learner::{
    forward, load_checkpoint, lr_schedule, save_checkpoint, train_round, Architecture, Dataset, LearnerConfig, ModelParams,
};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.learner.rounds = 12;
    cfg.data.spec.train_samples = 400;
    cfg.data.spec.test_samples = 300;
    cfg.experiment.eval_every = 4;
    cfg
}

fn cross_entropy(params: &ModelParams, data: &Dataset, idx: &[usize]) -> f64 {
    idx.iter().map(|&b| -forward(params, &data.features[b]).unwrap()[data.labels[b]].ln()).sum::<f64>() / idx.len() as f64
}

#[test]
fn zero_weight_is_plain_cross_entropy_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let spec = DatasetSpec::default();
    let data = synthesize(&spec, 60, &mut rng).unwrap();
    let model = ModelParams::random(Architecture::new(spec.feature_dim, 5, spec.num_classes).unwrap(), &mut rng);
    let idx: Vec<usize> = (0..60).step_by(2).collect();
    let cfg = LearnerConfig {
        distill_weight: 0.0,
        hidden: 5,
        ..LearnerConfig::default()
    };
    let knowledge = vec![vec![0.9, 0.05, 0.05], vec![0.05, 0.9, 0.05], vec![0.05, 0.05, 0.9]];
    for t in [0, 3] {
        let mut a = model.clone();
        let mut b = model.clone();
        train_round(&mut a, &data, &idx, None, &cfg, t, &mut rng).unwrap();
        train_round(&mut b, &data, &idx, Some(&knowledge), &cfg, t, &mut rng).unwrap();
        assert_eq!(a.theta, b.theta);
        let eta = lr_schedule(t, &cfg);
        let h = 1e-6;
        for p in 0..model.theta.len() {
            let mut up = model.clone();
            let mut down = model.clone();
            up.theta[p] += h;
            down.theta[p] -= h;
            let g = (cross_entropy(&up, &data, &idx) - cross_entropy(&down, &data, &idx)) / (2.0 * h);
            assert!((a.theta[p] - (model.theta[p] - eta * g)).abs() <= 1e-8, "parameter {p}");
        }
    }
}

#[test]
fn perfect_channel_matches_error_free() {
    let mut cfg = small_config();
    cfg.channel.noise_variance = 0.0;
    cfg.channel.csi_quality = 1.0;
    cfg.experiment.methods = vec![Method::Proposed, Method::ErrorFree];
    let result = run_experiment(&cfg).unwrap();
    let (p, e) = (&result.outcomes[0], &result.outcomes[1]);
    assert!(p.error.is_none() && e.error.is_none());
    for (a, b) in p.final_models.iter().zip(&e.final_models) {
        for (x, y) in a.theta.iter().zip(&b.theta) {
            assert!((x - y).abs() <= 1e-7);
        }
    }
    for (ra, rb) in p.rows.iter().zip(&e.rows) {
        for (x, y) in ra.train_loss.iter().zip(&rb.train_loss) {
            assert!((x - y).abs() <= 1e-7);
        }
    }
    assert_eq!(p.final_accuracy, e.final_accuracy);
}

#[test]
fn outputs_depend_only_on_the_seed() {
    let mut cfg = small_config();
    cfg.experiment.methods = vec![Method::Proposed, Method::Uniform];
    cfg.data.partition = PartitionMode::Dirichlet { concentration: 0.5 };
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    cfg.experiment.seed += 1;
    let c = run_experiment(&cfg).unwrap();
    for m in [Method::Proposed, Method::Uniform] {
        assert_eq!(a.csv(m), b.csv(m));
        assert_ne!(a.csv(m), c.csv(m));
    }
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = write_outputs(&a, da.path()).unwrap();
    let fb = write_outputs(&b, db.path()).unwrap();
    assert_eq!(fa.len(), 4);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let cfg_back = ExperimentConfig::load(&da.path().join("config.toml")).unwrap();
    assert_eq!(cfg_back, a.config);
}

#[test]
fn trained_models_survive_checkpointing() {
    let result = run_experiment(&small_config()).unwrap();
    for model in &result.outcomes[0].final_models {
        let back = load_checkpoint(&save_checkpoint(model)).unwrap();
        assert_eq!(&back, model);
    }
    assert!(load_checkpoint("otafd-model v1\n2 2 2\n3\n0.0\n").is_err());
}

#[test]
fn training_improves_on_chance() {
    let mut cfg = small_config();
    cfg.learner.rounds = 60;
    cfg.experiment.methods = vec![Method::ErrorFree];
    let acc = run_experiment(&cfg).unwrap().mean_final_accuracy(Method::ErrorFree).unwrap();
    assert!(acc > 0.5, "accuracy {acc}");
}
