//! Design the full transceiver for one round and aggregate over a noisy
//! channel, comparing against the uniform baseline.

use nalgebra::DVector;
use otafd::airagg::aggregate_over_the_air;
use otafd::channel::{sample_noise, ChannelConfig};
use otafd::experiment::random_round;
use otafd::knowledge::global_target;
use otafd::metrics::{phi1, phi2_sq_analytic};
use otafd::sdp::SolverOptions;
use otafd::transceiver::{optimize_round, uniform_baseline, TransceiverPlan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> otafd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise_variance = 1e-20;
    let r = random_round(&mut rng, &ChannelConfig::default(), 10, 5, 3, 0.3)?;
    let target = global_target(&r.knowledge, &r.partition)?;
    let noise = sample_noise(5, 9, noise_variance, &mut rng)?;

    let proposed = optimize_round(&r.channel, &r.knowledge, &r.partition, &r.peak_powers, &SolverOptions::default())?;
    let uniform = uniform_baseline(&r.channel, &r.knowledge, &r.partition, &r.peak_powers)?;
    let report = |name: &str, plan: &TransceiverPlan| -> otafd::Result<()> {
        let est = aggregate_over_the_air(&r.knowledge, &plan.transmit, &plan.receive, &r.channel, &noise)?;
        let err: f64 = (0..3)
            .flat_map(|k| (0..3).map(move |d| (k, d)))
            .map(|(k, d)| (est.real_view[k][d] - target[k][d]).powi(2))
            .sum::<f64>()
            .sqrt();
        let bias = phi1(plan, &r.channel, &r.knowledge, &r.partition)?;
        let var = phi2_sq_analytic(&plan.receive.denormalizers, &r.partition, noise_variance)?;
        let lambda: Vec<String> = plan.receive.denormalizers.iter().map(|v| format!("{v:.3e}")).collect();
        println!(
            "{name:>9}: lambda [{}]  max bias {:.2e}  mean noise {:.3e}  error {err:.4}",
            lambda.join(", "),
            bias.iter().copied().fold(0.0, f64::max),
            var.iter().sum::<f64>() / var.len() as f64
        );
        Ok(())
    };
    report("proposed", &proposed)?;
    report("uniform", &uniform)?;
    println!("stragglers per class: {:?}", proposed.diagnostics.stragglers);
    let w: &DVector<_> = &proposed.receive.beamformer;
    println!("beamformer norm {:.6}", w.norm());
    Ok(())
}
