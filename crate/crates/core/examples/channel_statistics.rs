//! Draw device placements and block-fading channels, then compare the
//! empirical channel power against the path-loss model.

use otafd::channel::{path_loss, perturb_csi_scaled, sample_channel, sample_distances, ChannelConfig};
use otafd::rng::{stream, Purpose};

fn main() -> otafd::Result<()> {
    let cfg = ChannelConfig::default();
    let distances = sample_distances(&cfg, &mut stream(7, Purpose::Placement, 0, 0));
    let gains: Vec<f64> = distances.iter().map(|&d| path_loss(d, &cfg)).collect::<otafd::Result<_>>()?;

    let rounds = 2000;
    let mut power = vec![0.0; cfg.num_wds];
    let mut csi_error = vec![0.0; cfg.num_wds];
    let zeta = 0.9;
    for t in 0..rounds {
        let h = sample_channel(&cfg, &distances, t, &mut stream(7, Purpose::Fading, t, 0))?;
        let est = perturb_csi_scaled(&h, zeta, &gains, &mut stream(7, Purpose::CsiError, t, 0))?;
        for i in 0..cfg.num_wds {
            power[i] += h.coefficients[i].norm_squared() / cfg.num_antennas as f64;
            csi_error[i] += (&est.coefficients[i] - &h.coefficients[i]).norm_squared() / cfg.num_antennas as f64;
        }
    }
    println!("{:>4} {:>9} {:>12} {:>12} {:>10}", "wd", "dist [m]", "path loss", "E|h|^2", "nmse");
    for i in 0..cfg.num_wds {
        let p = power[i] / rounds as f64;
        println!(
            "{i:>4} {:>9.1} {:>12.3e} {:>12.3e} {:>10.4}",
            distances[i],
            gains[i],
            p,
            csi_error[i] / rounds as f64 / gains[i]
        );
    }
    let expected = (1.0 - zeta.sqrt()).powi(2) + (1.0 - zeta);
    println!("expected normalized CSI error at zeta = {zeta}: {expected:.4}");
    Ok(())
}
