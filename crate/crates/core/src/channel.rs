//! AWGN channel with optional Wiener phase noise.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    Coherent,
    Wiener,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    pub mode: ChannelMode,
    /// Noise variance per real dimension.
    pub sigma2: f64,
    /// Standard deviation of the phase increment, radians.
    pub sigma_delta: f64,
}

impl ChannelParams {
    pub fn new(mode: ChannelMode, sigma2: f64, sigma_delta: f64) -> Result<ChannelParams> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise variance {sigma2} must be positive")));
        }
        if !(sigma_delta >= 0.0 && sigma_delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("phase noise std {sigma_delta} must be >= 0")));
        }
        Ok(ChannelParams {
            mode,
            sigma2,
            sigma_delta,
        })
    }

    /// Parameters at `ebn0_db` for code rate `rate`, `p` bits per symbol and
    /// phase noise given in degrees.
    pub fn from_ebn0(mode: ChannelMode, ebn0_db: f64, rate: f64, p: u32, sigma_delta_deg: f64) -> Result<ChannelParams> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidParameter(format!("code rate {rate} outside (0, 1]")));
        }
        if !ebn0_db.is_finite() {
            return Err(Error::InvalidParameter("Eb/N0 must be finite".into()));
        }
        ChannelParams::new(mode, ebn0_to_sigma2(ebn0_db, rate, p), sigma_delta_deg.to_radians())
    }
}

/// Noise variance per real dimension for unit-energy symbols carrying `rate * p` information bits.
pub fn ebn0_to_sigma2(ebn0_db: f64, rate: f64, p: u32) -> f64 {
    1.0 / (2.0 * rate * p as f64 * 10f64.powf(ebn0_db / 10.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelOutput {
    pub samples: Vec<Complex64>,
    /// Channel phase at each sample.
    pub phase: Vec<f64>,
}

impl ChannelOutput {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Passes the transmit phases through the channel.
pub fn transmit<R: Rng + ?Sized>(phases: &[f64], params: &ChannelParams, rng: &mut R) -> ChannelOutput {
    transmit_with_initial_phase(phases, params, None, rng)
}

/// Like [`transmit`], with the initial channel phase optionally fixed.
///
/// The random stream is the same in every mode: one uniform draw for the
/// initial phase, then per sample one increment draw (skipped for the first)
/// and two noise draws.
pub fn transmit_with_initial_phase<R: Rng + ?Sized>(
    phases: &[f64],
    params: &ChannelParams,
    initial_phase: Option<f64>,
    rng: &mut R,
) -> ChannelOutput {
    let sigma = params.sigma2.sqrt();
    let drawn: f64 = rng.random::<f64>() * TAU;
    let mut theta = initial_phase.unwrap_or(drawn);
    let mut samples = Vec::with_capacity(phases.len());
    let mut phase = Vec::with_capacity(phases.len());
    for (i, &phi) in phases.iter().enumerate() {
        if i > 0 {
            let z: f64 = rng.sample(StandardNormal);
            theta += params.sigma_delta * z;
        }
        let (nr, ni): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let th = match params.mode {
            ChannelMode::Coherent => 0.0,
            ChannelMode::Wiener => theta,
        };
        samples.push(Complex64::from_polar(1.0, phi + th) + Complex64::new(sigma * nr, sigma * ni));
        phase.push(th);
    }
    ChannelOutput { samples, phase }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma2_examples() {
        assert!((ebn0_to_sigma2(0.0, 0.5, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((ebn0_to_sigma2(0.0, 0.75, 4) - 1.0 / 6.0).abs() < 1e-15);
        assert!(ebn0_to_sigma2(300.0, 0.5, 3) < 1e-30);
        // 3 dB doubles Eb/N0 (up to the 10^0.3 approximation)
        let r = ebn0_to_sigma2(0.0, 0.5, 3) / ebn0_to_sigma2(10.0 * 2f64.log10(), 0.5, 3);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn measured_snr_matches_conversion() {
        let params = ChannelParams::from_ebn0(ChannelMode::Coherent, 0.0, 0.5, 3, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phases = vec![0.0; 1_000_000];
        let out = transmit(&phases, &params, &mut rng);
        let noise = out.samples.iter().map(|r| (r - Complex64::new(1.0, 0.0)).norm_sqr()).sum::<f64>() / 1e6;
        // Es / N0 = 1 / (2 sigma^2) = R p Eb/N0 = 1.5
        assert!((noise - 2.0 / 3.0).abs() / (2.0 / 3.0) < 0.005);
        assert!(((1.0 / noise) / 1.5 - 1.0).abs() < 0.005);
    }

    #[test]
    fn noiseless_coherent_is_exact() {
        let params = ChannelParams::new(ChannelMode::Coherent, 1e-300, 0.3).unwrap();
        let phases = [0.0, 1.0, 2.5, 4.0];
        let out = transmit(&phases, &params, &mut ChaCha8Rng::seed_from_u64(4));
        for (r, &p) in out.samples.iter().zip(&phases) {
            assert!((r - Complex64::from_polar(1.0, p)).norm() < 1e-140);
        }
        assert!(out.phase.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn zero_phase_noise_gives_constant_rotation() {
        let params = ChannelParams::new(ChannelMode::Wiener, 0.1, 0.0).unwrap();
        let out = transmit(&[0.0; 50], &params, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(out.phase.iter().all(|&t| t == out.phase[0]));
        assert!((0.0..TAU).contains(&out.phase[0]));
    }

    #[test]
    fn phase_increment_variance() {
        let params = ChannelParams::from_ebn0(ChannelMode::Wiener, 5.0, 0.5, 3, 2.0).unwrap();
        let out = transmit(&vec![0.0; 1_000_001], &params, &mut ChaCha8Rng::seed_from_u64(6));
        let var = out.phase.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / 1e6;
        let expect = 2f64.to_radians().powi(2);
        assert!((var / expect - 1.0).abs() < 0.01, "{var} vs {expect}");
    }

    #[test]
    fn noise_power_per_sample() {
        let params = ChannelParams::new(ChannelMode::Wiener, 0.25, 0.05).unwrap();
        let out = transmit(&vec![0.7; 1_000_000], &params, &mut ChaCha8Rng::seed_from_u64(7));
        let power = out
            .samples
            .iter()
            .zip(&out.phase)
            .map(|(r, &t)| (r - Complex64::from_polar(1.0, 0.7 + t)).norm_sqr())
            .sum::<f64>()
            / 1e6;
        assert!((power / 0.5 - 1.0).abs() < 0.005);
    }

    #[test]
    fn coherent_equals_wiener_without_phase_noise() {
        let phases: Vec<f64> = (0..200).map(|i| i as f64 * 0.3).collect();
        let coh = ChannelParams::new(ChannelMode::Coherent, 0.2, 0.0).unwrap();
        let wie = ChannelParams::new(ChannelMode::Wiener, 0.2, 0.0).unwrap();
        let a = transmit(&phases, &coh, &mut ChaCha8Rng::seed_from_u64(8));
        let b = transmit_with_initial_phase(&phases, &wie, Some(0.0), &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn invalid_parameters() {
        assert!(ChannelParams::new(ChannelMode::Coherent, 0.0, 0.0).is_err());
        assert!(ChannelParams::new(ChannelMode::Wiener, 1.0, -1.0).is_err());
        assert!(ChannelParams::from_ebn0(ChannelMode::Wiener, f64::NAN, 0.5, 3, 2.0).is_err());
        assert!(ChannelParams::from_ebn0(ChannelMode::Wiener, 1.0, 0.0, 3, 2.0).is_err());
    }
}
