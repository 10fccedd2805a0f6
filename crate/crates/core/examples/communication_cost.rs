//! Uplink cost of over-the-air distillation, orthogonal links and
//! parameter upload.

use otafd::experiment::{communication_accounting, UplinkScheme};
use otafd::learner::Architecture;

fn main() -> otafd::Result<()> {
    let (m, k, rounds) = (10, 3, 200);
    let d = Architecture::new(8, 32, k as usize)?.num_params() as u64;
    for scheme in [UplinkScheme::OverTheAir, UplinkScheme::Orthogonal, UplinkScheme::ParameterUpload] {
        let c = communication_accounting(scheme, m, k, d, rounds);
        println!(
            "{scheme:?}: {} channel uses, {} statistics, {} signaling, {:.3} s airtime",
            c.channel_uses,
            c.stat_scalars,
            c.signaling_scalars,
            c.airtime_seconds()
        );
    }
    Ok(())
}
