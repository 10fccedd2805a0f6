//! Solve the relaxed receive-beamforming problem for random rounds and
//! report how often the relaxation is tight.

use otafd::channel::ChannelConfig;
use otafd::experiment::random_round;
use otafd::sdp::{self, extract_principal_eigenpair, SolverOptions};
use otafd::transceiver::build_sdp_problem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> otafd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = SolverOptions::default();
    println!("{:>3} {:>3} {:>3} {:>12} {:>12} {:>10} {:>6}", "M", "N", "K", "relaxed", "rank-one", "l2/l1", "iters");
    for (m, n, k) in [(4, 2, 2), (6, 3, 3), (10, 5, 3), (10, 8, 5), (20, 5, 10)] {
        let r = random_round(&mut rng, &ChannelConfig::default(), m, n, k, 0.2)?;
        let problem = build_sdp_problem(&r.channel, &r.knowledge, &r.partition, &r.peak_powers)?;
        let sol = sdp::solve(&problem, &opts)?;
        let pair = extract_principal_eigenpair(&sol.w);
        println!(
            "{m:>3} {n:>3} {k:>3} {:>12.5e} {:>12.5e} {:>10.2e} {:>6}",
            sol.objective,
            problem.beamformer_objective(&pair.vector),
            pair.second_value / pair.value,
            sol.diagnostics.iterations
        );
    }
    Ok(())
}
