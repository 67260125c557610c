//! Underwater optical channel: large-scale path loss, the four-term receiver
//! noise budget, link SNR, Doppler, and a two-tap Gauss-Markov small-scale
//! fading process per photodetector.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Physical constants and geometry of the optical link.
///
/// Defaults reproduce the clear-ocean setup: a 50 W source, 100 photodetectors,
/// 475 THz carrier and 100 MHz electronic bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticalLinkParams {
    /// Transmit optical power (W).
    pub p_t: f64,
    /// Combined transmitter/receiver efficiency.
    pub eta0: f64,
    /// Receiver inclination angle w.r.t. the beam (rad).
    pub beta0: f64,
    /// Beam divergence angle (rad).
    pub theta: f64,
    /// Receiver aperture area (m²).
    pub a_r: f64,
    /// Receiver sensitivity (A/W).
    pub gamma0: f64,
    /// Extinction coefficient (1/m).
    pub c_a: f64,
    /// Solar scalar irradiance (W/m²).
    pub phi_s: f64,
    /// Photocurrent parameter.
    pub i_l: f64,
    /// Photodiode dark parameter.
    pub i_d: f64,
    /// Temperature (K).
    pub t_kelvin: f64,
    /// Load resistance (Ω).
    pub r_load: f64,
    /// Electronic bandwidth (Hz).
    pub bandwidth: f64,
    /// Optical carrier frequency (Hz).
    pub f_c: f64,
    /// Propagation speed of light in water (m/s).
    pub c_water: f64,
    /// Wavelength in water (m).
    pub lambda0: f64,
    pub n_rx: usize,
    pub n_tx: usize,
    /// Electronic charge (C).
    pub q: f64,
    /// Boltzmann constant (J/K).
    pub k_b: f64,
}

impl Default for OpticalLinkParams {
    fn default() -> Self {
        Self {
            p_t: 50.0,
            eta0: 0.81,
            beta0: 0.0,
            theta: 68f64.to_radians(),
            a_r: 0.01,
            gamma0: 0.5,
            c_a: 0.1514,
            phi_s: 0.8109,
            i_l: 100.0,
            i_d: 1.226e-9,
            t_kelvin: 290.0,
            r_load: 100.0,
            bandwidth: 100e6,
            f_c: 475e12,
            c_water: 2.26e8,
            lambda0: 2.26e8 / 475e12,
            n_rx: 100,
            n_tx: 1,
            q: 1.6e-19,
            k_b: 1.38e-23,
        }
    }
}

impl OpticalLinkParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_t", self.p_t),
            ("a_r", self.a_r),
            ("gamma0", self.gamma0),
            ("c_a", self.c_a),
            ("phi_s", self.phi_s),
            ("i_l", self.i_l),
            ("i_d", self.i_d),
            ("t_kelvin", self.t_kelvin),
            ("r_load", self.r_load),
            ("bandwidth", self.bandwidth),
            ("f_c", self.f_c),
            ("c_water", self.c_water),
            ("lambda0", self.lambda0),
            ("q", self.q),
            ("k_b", self.k_b),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return Err(domain(format!("eta0 must lie in (0, 1], got {}", self.eta0)));
        }
        if !(self.beta0.is_finite() && self.beta0 >= 0.0) {
            return Err(domain(format!("beta0 must be >= 0, got {}", self.beta0)));
        }
        if !(self.theta > 0.0 && self.theta < PI) {
            return Err(domain(format!("theta must lie in (0, pi), got {}", self.theta)));
        }
        if self.n_rx == 0 {
            return Err(domain("n_rx must be >= 1"));
        }
        if self.n_tx != 1 {
            return Err(domain(format!("only a single source is supported, got n_tx = {}", self.n_tx)));
        }
        Ok(())
    }
}

/// Receiver noise current powers (A²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// Solar background.
    pub i_s2: f64,
    /// Shot noise of the received light.
    pub i_l2: f64,
    /// Leakage/dark current.
    pub i_d2: f64,
    /// Thermal.
    pub i_t2: f64,
    pub total: f64,
}

/// Beer-Lambert attenuation `exp(-c_a d)`.
pub fn attenuation(c_a: f64, d: f64) -> Result<f64> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(domain(format!("distance must be finite and >= 0, got {d}")));
    }
    if !(c_a >= 0.0 && c_a.is_finite()) {
        return Err(domain(format!("extinction coefficient must be finite and >= 0, got {c_a}")));
    }
    Ok((-c_a * d).exp())
}

/// Received line-of-sight signal term `i_R²` at distance `d`.
pub fn los_signal_power(p: &OpticalLinkParams, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(domain(format!("LOS power is singular at d = {d}")));
    }
    let spread = 1.0 - p.theta.cos();
    if !(spread > 0.0) {
        return Err(domain("beam divergence angle must be nonzero"));
    }
    let la = attenuation(p.c_a, d)?;
    // cos(pi/2) is ~6e-17 in floating point; clamp so a perpendicular receiver sees nothing.
    let incidence = p.beta0.cos().max(0.0);
    let incidence = if incidence < 1e-15 { 0.0 } else { incidence };
    Ok(p.p_t * p.eta0 * la * p.a_r * incidence / (2.0 * PI * d * d * spread))
}

pub fn noise_budget(p: &OpticalLinkParams) -> NoiseBudget {
    let i_s2 = (p.phi_s * p.a_r * p.gamma0).powi(2);
    let i_l2 = 2.0 * p.q * p.i_l * p.bandwidth;
    let i_d2 = 2.0 * p.q * p.i_d * p.bandwidth;
    let i_t2 = 4.0 * p.k_b * p.t_kelvin * p.bandwidth / p.r_load;
    NoiseBudget {
        i_s2,
        i_l2,
        i_d2,
        i_t2,
        total: i_s2 + i_l2 + i_d2 + i_t2,
    }
}

/// Linear SNR `i_R² / (i_S² + i_L² + i_D² + i_T²)`.
pub fn link_snr(p: &OpticalLinkParams, d: f64) -> Result<f64> {
    Ok(snr_with_noise(los_signal_power(p, d)?, &noise_budget(p)))
}

pub fn snr_with_noise(signal: f64, noise: &NoiseBudget) -> f64 {
    signal / noise.total
}

/// Doppler shift `f_d = v f_c / c` for a source moving at `v` m/s.
pub fn doppler_shift(v: f64, p: &OpticalLinkParams) -> Result<f64> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(domain(format!("speed must be finite and >= 0, got {v}")));
    }
    Ok(v / p.c_water * p.f_c)
}

/// Coherence time `1 / f_d`.
pub fn coherence_time(v: f64, p: &OpticalLinkParams) -> Result<f64> {
    let f_d = doppler_shift(v, p)?;
    if f_d == 0.0 {
        return Err(domain("coherence time is infinite for a static link"));
    }
    Ok(1.0 / f_d)
}

/// Per-symbol correlation of the fading process, `exp(-T_sym / T_c)`.
///
/// A static link (`v = 0`) yields exactly 1.
pub fn symbol_correlation(v: f64, symbol_period: f64, p: &OpticalLinkParams) -> Result<f64> {
    if !(symbol_period > 0.0) {
        return Err(domain(format!("symbol period must be > 0, got {symbol_period}")));
    }
    let f_d = doppler_shift(v, p)?;
    Ok((-symbol_period * f_d).exp())
}

/// Second-tap delay: 10 ns at 100 MHz sampling.
pub const TAP_DELAYS: [usize; 2] = [0, 1];

/// One realization of the link: large-scale gain plus per-detector taps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Large-scale received signal term `i_R²`.
    pub path_gain_sq: f64,
    /// Linear SNR at this distance.
    pub snr: f64,
    /// Nonnegative tap gains, one `[g1, g2]` pair per photodetector.
    pub tap_gains: Vec<[f64; 2]>,
    /// Stationary power of each tap; sums to 1.
    pub tap_powers: [f64; 2],
    pub tap_delay_samples: [usize; 2],
    /// Doppler shift (Hz).
    pub f_d: f64,
    /// Per-symbol correlation coefficient.
    pub rho: f64,
}

impl ChannelRealization {
    pub fn n_rx(&self) -> usize {
        self.tap_gains.len()
    }

    /// Frequency response of detector `rx` at DFT bin `k` of an `n`-point transform.
    pub fn frequency_response(&self, rx: usize, k: usize, n: usize) -> num_complex::Complex64 {
        let [g1, g2] = self.tap_gains[rx];
        let phase = -2.0 * PI * (k * self.tap_delay_samples[1]) as f64 / n as f64;
        num_complex::Complex64::new(g1, 0.0) + num_complex::Complex64::from_polar(g2, phase)
    }
}

/// Draws an independent two-tap small-scale realization for every detector.
///
/// The first tap carries `power_ratio` of the small-scale power; each tap gain
/// is the magnitude of a zero-mean Gaussian of the tap's power, so the mean
/// total tap power is exactly one and path loss lives only in `path_gain_sq`.
pub fn draw_channel<R: Rng + ?Sized>(
    p: &OpticalLinkParams,
    d: f64,
    v: f64,
    power_ratio: f64,
    symbol_period: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if !(power_ratio > 0.0 && power_ratio <= 1.0) {
        return Err(domain(format!("power_ratio must lie in (0, 1], got {power_ratio}")));
    }
    let path_gain_sq = los_signal_power(p, d)?;
    let snr = snr_with_noise(path_gain_sq, &noise_budget(p));
    let f_d = doppler_shift(v, p)?;
    let rho = symbol_correlation(v, symbol_period, p)?;
    let tap_powers = [power_ratio, 1.0 - power_ratio];
    let sd = [tap_powers[0].sqrt(), tap_powers[1].sqrt()];
    let tap_gains = (0..p.n_rx)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            [(a * sd[0]).abs(), (b * sd[1]).abs()]
        })
        .collect();
    Ok(ChannelRealization {
        path_gain_sq,
        snr,
        tap_gains,
        tap_powers,
        tap_delay_samples: TAP_DELAYS,
        f_d,
        rho,
    })
}

/// Advances every tap one symbol with `g' = |rho g + sqrt(1 - rho²) w|`.
///
/// Folding keeps the folded-Gaussian marginal stationary because `w` is
/// symmetric.
pub fn evolve_channel<R: Rng + ?Sized>(state: &mut ChannelRealization, rng: &mut R) {
    if state.rho >= 1.0 {
        return;
    }
    let innov = (1.0 - state.rho * state.rho).sqrt();
    let sd = [state.tap_powers[0].sqrt() * innov, state.tap_powers[1].sqrt() * innov];
    let rho = state.rho;
    for taps in state.tap_gains.iter_mut() {
        for (g, s) in taps.iter_mut().zip(sd) {
            if s == 0.0 {
                *g *= rho;
                continue;
            }
            let w: f64 = rng.sample(StandardNormal);
            *g = (rho * *g + s * w).abs();
        }
    }
}

/// Owned-value form of [`evolve_channel`].
pub fn evolved<R: Rng + ?Sized>(mut state: ChannelRealization, rng: &mut R) -> ChannelRealization {
    evolve_channel(&mut state, rng);
    state
}
