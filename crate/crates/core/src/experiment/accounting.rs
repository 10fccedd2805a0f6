//! Uplink communication cost per round.

use serde::{Deserialize, Serialize};

/// Airtime of one transmitted scalar, seconds.
pub const SECONDS_PER_SCALAR: f64 = 3.6e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UplinkScheme {
    /// Simultaneous analog transmission of all devices' knowledge.
    OverTheAir,
    /// One orthogonal analog link per device.
    Orthogonal,
    /// Every device uploads its `D` model parameters.
    ParameterUpload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UplinkCost {
    /// Analog channel uses carrying knowledge or parameters.
    pub channel_uses: u64,
    /// Normalization statistics (mean and standard deviation) sent reliably.
    pub stat_scalars: u64,
    /// Equalization factors sent back to devices.
    pub signaling_scalars: u64,
}

impl UplinkCost {
    pub fn total(&self) -> u64 {
        self.channel_uses + self.stat_scalars + self.signaling_scalars
    }

    pub fn airtime_seconds(&self) -> f64 {
        self.total() as f64 * SECONDS_PER_SCALAR
    }
}

/// Cost over `rounds` rounds with `m` devices, `k` classes and `d` model
/// parameters.
pub fn communication_accounting(scheme: UplinkScheme, m: u64, k: u64, d: u64, rounds: u64) -> UplinkCost {
    let per_round = match scheme {
        UplinkScheme::OverTheAir => UplinkCost {
            channel_uses: k * k,
            stat_scalars: 2 * m * k,
            signaling_scalars: m * k,
        },
        UplinkScheme::Orthogonal => UplinkCost {
            channel_uses: m * k * k,
            ..UplinkCost::default()
        },
        UplinkScheme::ParameterUpload => UplinkCost {
            channel_uses: m * d,
            ..UplinkCost::default()
        },
    };
    UplinkCost {
        channel_uses: per_round.channel_uses * rounds,
        stat_scalars: per_round.stat_scalars * rounds,
        signaling_scalars: per_round.signaling_scalars * rounds,
    }
}
