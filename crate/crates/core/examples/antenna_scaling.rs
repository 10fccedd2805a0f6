//! Noise term of the optimized design as the number of server antennas
//! grows, with nested arrays so that each size extends the previous one.

use otafd::channel::{ChannelConfig, ChannelState};
use otafd::experiment::random_round;
use otafd::metrics::phi2_sq_analytic;
use otafd::sdp::SolverOptions;
use otafd::transceiver::optimize_round;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> otafd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sizes = [1, 2, 4, 8];
    let draws = 100;
    let mut total = vec![0.0; sizes.len()];
    for _ in 0..draws {
        let r = random_round(&mut rng, &ChannelConfig::default(), 10, 8, 3, 0.0)?;
        for (s, &n) in sizes.iter().enumerate() {
            let channel = ChannelState::new(r.channel.coefficients.iter().map(|h| h.rows(0, n).into_owned()).collect(), 0)?;
            let plan = optimize_round(&channel, &r.knowledge, &r.partition, &r.peak_powers, &SolverOptions::default())?;
            let var = phi2_sq_analytic(&plan.receive.denormalizers, &r.partition, 1e-20)?;
            total[s] += var.iter().sum::<f64>() / var.len() as f64;
        }
    }
    for (s, n) in sizes.iter().enumerate() {
        println!("N = {n}: mean noise term {:.3e}", total[s] / draws as f64);
    }
    Ok(())
}
