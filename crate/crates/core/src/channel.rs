//! Block-fading uplink channels between single-antenna devices and a
//! multi-antenna parameter server.
//!
//! Channels are Rayleigh small-scale fading scaled by the square root of a
//! free-space style path loss. Entries of every complex Gaussian drawn here
//! have independent real and imaginary parts with variance `σ²/2` each, so
//! `E|x|² = σ²`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Physical parameters of the uplink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub num_wds: usize,
    pub num_antennas: usize,
    /// Receiver noise variance per complex entry.
    pub noise_variance: f64,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    pub pathloss_exponent: f64,
    /// Antenna gain at the server, linear scale.
    pub antenna_gain_ps: f64,
    /// Antenna gain at the devices, linear scale.
    pub antenna_gain_wd: f64,
    /// Device distances are drawn uniformly from `[min, max]` meters.
    pub distance_range: (f64, f64),
    /// CSI quality ζ; 1 means perfect channel knowledge.
    pub csi_quality: f64,
    /// Peak transmit power of every device, watts.
    pub peak_power: f64,
}

impl Default for ChannelConfig {
    /// 10 devices, 5 antennas, 915 MHz, exponent 4, 0 dB gains, 100–500 m,
    /// 1 mW peak power and noise variance 1e-8.
    fn default() -> Self {
        Self {
            num_wds: 10,
            num_antennas: 5,
            noise_variance: 1e-8,
            carrier_freq: 915e6,
            pathloss_exponent: 4.0,
            antenna_gain_ps: 1.0,
            antenna_gain_wd: 1.0,
            distance_range: (100.0, 500.0),
            csi_quality: 1.0,
            peak_power: 1e-3,
        }
    }
}

impl ChannelConfig {
    pub fn with_size(num_wds: usize, num_antennas: usize) -> Self {
        Self {
            num_wds,
            num_antennas,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.num_wds == 0 {
            return bad("num_wds must be at least 1");
        }
        if self.num_antennas == 0 {
            return bad("num_antennas must be at least 1");
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return bad("noise_variance must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&self.csi_quality) {
            return bad("csi_quality must lie in [0, 1]");
        }
        let (lo, hi) = self.distance_range;
        if !(lo > 0.0 && hi > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("distance_range must satisfy 0 < min <= max");
        }
        if !(self.carrier_freq > 0.0) {
            return bad("carrier_freq must be positive");
        }
        if !(self.pathloss_exponent >= 0.0) || !self.pathloss_exponent.is_finite() {
            return bad("pathloss_exponent must be finite and nonnegative");
        }
        if !(self.antenna_gain_ps > 0.0 && self.antenna_gain_wd > 0.0) {
            return bad("antenna gains must be positive");
        }
        if !(self.peak_power > 0.0) {
            return bad("peak_power must be positive");
        }
        Ok(())
    }

    pub fn peak_powers(&self) -> Vec<f64> {
        vec![self.peak_power; self.num_wds]
    }
}

/// Channel vectors `h_i` of every device for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub coefficients: Vec<DVector<Complex64>>,
    pub round: u64,
}

impl ChannelState {
    pub fn new(coefficients: Vec<DVector<Complex64>>, round: u64) -> Result<Self> {
        let n = coefficients
            .first()
            .map(|h| h.len())
            .ok_or_else(|| Error::InvalidInput("channel state needs at least one device".into()))?;
        for (i, h) in coefficients.iter().enumerate() {
            if h.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "device {i} has {} antennas, expected {n}",
                    h.len()
                )));
            }
            if h.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::InvalidInput(format!("device {i} has a non-finite channel")));
            }
        }
        Ok(Self { coefficients, round })
    }

    pub fn num_wds(&self) -> usize {
        self.coefficients.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.coefficients[0].len()
    }

    /// Effective scalar channel `w^H h_i`.
    pub fn effective_gain(&self, w: &DVector<Complex64>, i: usize) -> Complex64 {
        w.dotc(&self.coefficients[i])
    }

    /// Multiply device `i`'s channel by a unit phase.
    pub fn rotate(&mut self, i: usize, phase: f64) {
        let rot = Complex64::from_polar(1.0, phase);
        self.coefficients[i].iter_mut().for_each(|c| *c *= rot);
    }
}

/// One draw from CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

fn complex_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> DVector<Complex64> {
    DVector::from_fn(len, |_, _| complex_gaussian(rng, variance))
}

/// Linear path-loss gain `G_PS G_D (c / (4π f_c d))^PL`.
pub fn path_loss(distance: f64, config: &ChannelConfig) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidInput(format!("distance must be positive, got {distance}")));
    }
    let ratio = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * config.carrier_freq * distance);
    Ok(config.antenna_gain_ps * config.antenna_gain_wd * ratio.powf(config.pathloss_exponent))
}

/// Device placement, uniform over the configured distance range.
pub fn sample_distances<R: Rng + ?Sized>(config: &ChannelConfig, rng: &mut R) -> Vec<f64> {
    let (lo, hi) = config.distance_range;
    (0..config.num_wds)
        .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
        .collect()
}

/// Draw `h_i = sqrt(path_loss(d_i)) g_i` with `g_i ~ CN(0, I)`.
///
/// An all-zero draw is rejected and resampled once.
pub fn sample_channel<R: Rng + ?Sized>(
    config: &ChannelConfig,
    distances: &[f64],
    round: u64,
    rng: &mut R,
) -> Result<ChannelState> {
    config.validate()?;
    if distances.len() != config.num_wds {
        return Err(Error::DimensionMismatch(format!(
            "{} distances for {} devices",
            distances.len(),
            config.num_wds
        )));
    }
    let mut coefficients = Vec::with_capacity(distances.len());
    for &d in distances {
        let amplitude = path_loss(d, config)?.sqrt();
        let mut g = complex_gaussian_vector(rng, config.num_antennas, 1.0);
        if g.iter().all(|c| c.norm_sqr() == 0.0) {
            g = complex_gaussian_vector(rng, config.num_antennas, 1.0);
        }
        if g.iter().all(|c| c.norm_sqr() == 0.0) || amplitude == 0.0 {
            return Err(Error::InvalidInput("degenerate all-zero channel draw".into()));
        }
        coefficients.push(g * Complex64::from(amplitude));
    }
    ChannelState::new(coefficients, round)
}

/// Imperfect CSI `ĥ = sqrt(ζ) h + sqrt(1-ζ) ñ` with `ñ ~ CN(0, I)`.
pub fn perturb_csi<R: Rng + ?Sized>(truth: &ChannelState, zeta: f64, rng: &mut R) -> Result<ChannelState> {
    let unit = vec![1.0; truth.num_wds()];
    perturb_csi_scaled(truth, zeta, &unit, rng)
}

/// Like [`perturb_csi`] but device `i`'s estimation error has variance
/// `error_scales[i]` per entry instead of 1.
///
/// Passing the path-loss gains applies the error model to the normalized
/// small-scale fading, which keeps ζ meaningful when channel magnitudes are
/// far from unity.
pub fn perturb_csi_scaled<R: Rng + ?Sized>(
    truth: &ChannelState,
    zeta: f64,
    error_scales: &[f64],
    rng: &mut R,
) -> Result<ChannelState> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::InvalidInput(format!("csi quality must lie in [0, 1], got {zeta}")));
    }
    if error_scales.len() != truth.num_wds() {
        return Err(Error::DimensionMismatch("one error scale per device required".into()));
    }
    if zeta == 1.0 {
        return Ok(truth.clone());
    }
    let keep = Complex64::from(zeta.sqrt());
    let coefficients = truth
        .coefficients
        .iter()
        .zip(error_scales)
        .map(|(h, &scale)| {
            let err = complex_gaussian_vector(rng, h.len(), (1.0 - zeta) * scale);
            h * keep + err
        })
        .collect();
    ChannelState::new(coefficients, truth.round)
}

/// `count` receiver noise vectors of length `n`, entries CN(0, variance).
pub fn sample_noise<R: Rng + ?Sized>(
    n: usize,
    count: usize,
    variance: f64,
    rng: &mut R,
) -> Result<Vec<DVector<Complex64>>> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::InvalidInput(format!("noise variance must be nonnegative, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(vec![DVector::zeros(n); count]);
    }
    Ok((0..count).map(|_| complex_gaussian_vector(rng, n, variance)).collect())
}
