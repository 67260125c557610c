//! Conjugate-symmetric OFDM with a real time-domain signal.
//!
//! Bins `1..=15` carry data, bins `31..=17` their conjugates, DC and Nyquist
//! are nulled. The transmit scale gives unit average sample power when every
//! pair carries a unit-energy symbol.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmParams {
    pub fft_size: usize,
    pub cp_samples: usize,
    pub sample_rate: f64,
    pub frame_symbols: usize,
    /// Subcarrier count used by the throughput formula.
    pub n_subc: usize,
    pub pilot_seed: u64,
}

impl Default for OfdmParams {
    fn default() -> Self {
        Self {
            fft_size: 32,
            cp_samples: 2,
            sample_rate: 100e6,
            frame_symbols: 160,
            n_subc: 32,
            pilot_seed: 0x5eed_0f_da7a,
        }
    }
}

impl OfdmParams {
    pub fn symbol_samples(&self) -> usize {
        self.fft_size + self.cp_samples
    }

    /// Symbol duration including the cyclic prefix (s).
    pub fn t_ofdm(&self) -> f64 {
        self.symbol_samples() as f64 / self.sample_rate
    }

    pub fn data_pairs(&self) -> usize {
        self.fft_size / 2 - 1
    }

    pub fn data_symbols(&self) -> usize {
        self.frame_symbols / 2
    }

    pub fn frame_samples(&self) -> usize {
        self.frame_symbols * self.symbol_samples()
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_symbols as f64 * self.t_ofdm()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 4 || !self.fft_size.is_power_of_two() {
            return Err(contract(format!("fft_size must be a power of two >= 4, got {}", self.fft_size)));
        }
        if self.frame_symbols == 0 || self.frame_symbols % 2 != 0 {
            return Err(contract("frame_symbols must be even and positive"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(contract("sample_rate must be positive"));
        }
        Ok(())
    }
}

/// FFT plans plus the scaling conventions of the modem.
#[derive(Clone)]
pub struct OfdmModem {
    n: usize,
    cp: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    tx_scale: f64,
    rx_scale: f64,
}

impl std::fmt::Debug for OfdmModem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OfdmModem").field("n", &self.n).field("cp", &self.cp).finish()
    }
}

impl OfdmModem {
    pub fn new(params: &OfdmParams) -> Result<Self> {
        params.validate()?;
        let n = params.fft_size;
        let mut planner = FftPlanner::new();
        let active = (2 * (n / 2 - 1)) as f64;
        Ok(Self {
            n,
            cp: params.cp_samples,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            tx_scale: 1.0 / active.sqrt(),
            rx_scale: active.sqrt() / n as f64,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> usize {
        self.n / 2 - 1
    }

    pub fn symbol_samples(&self) -> usize {
        self.n + self.cp
    }

    /// Gain applied to raw forward-DFT bins.
    pub fn rx_scale(&self) -> f64 {
        self.rx_scale
    }

    /// Hermitian spectrum of `pairs` values.
    pub fn hermitian_bins(&self, pairs: &[Complex64]) -> Result<Vec<Complex64>> {
        if pairs.len() != self.pairs() {
            return Err(contract(format!("expected {} pair values, got {}", self.pairs(), pairs.len())));
        }
        if pairs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(contract("OFDM input contains non-finite values"));
        }
        let mut bins = vec![Complex64::new(0.0, 0.0); self.n];
        for (k, &z) in pairs.iter().enumerate() {
            bins[k + 1] = z;
            bins[self.n - k - 1] = z.conj();
        }
        Ok(bins)
    }

    /// One OFDM symbol: cyclic prefix followed by the real IDFT output.
    pub fn modulate(&self, pairs: &[Complex64]) -> Result<Vec<f64>> {
        let mut buf = self.hermitian_bins(pairs)?;
        self.inv.process(&mut buf);
        let rms = (buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.n as f64).sqrt();
        let max_imag = buf.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        if rms > 0.0 && max_imag > 1e-12 * rms {
            return Err(contract(format!("IDFT output not real: max|imag|/rms = {:e}", max_imag / rms)));
        }
        let body: Vec<f64> = buf.iter().map(|z| z.re * self.tx_scale).collect();
        let mut out = Vec::with_capacity(self.symbol_samples());
        out.extend_from_slice(&body[self.n - self.cp..]);
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Strips the prefix and returns all `n` bins in transmit scale.
    pub fn demodulate<T: Copy + Into<Complex64>>(&self, samples: &[T]) -> Result<Vec<Complex64>> {
        if samples.len() != self.symbol_samples() {
            return Err(contract(format!(
                "expected {} samples per symbol, got {}",
                self.symbol_samples(),
                samples.len()
            )));
        }
        let mut buf: Vec<Complex64> = samples[self.cp..].iter().map(|&s| s.into()).collect();
        self.demodulate_in_place(&mut buf);
        Ok(buf)
    }

    /// Forward DFT of `n` CP-free samples in place, in transmit scale.
    pub fn demodulate_in_place(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
        for z in buf.iter_mut() {
            *z *= self.rx_scale;
        }
    }

    /// `(X[k] + conj(X[n - k])) / 2` for `k = 1..n/2`.
    pub fn conj_combine(&self, bins: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.pairs()];
        self.conj_combine_into(bins, &mut out);
        out
    }

    pub fn conj_combine_into(&self, bins: &[Complex64], out: &mut [Complex64]) {
        for (k, o) in (1..=self.pairs()).zip(out.iter_mut()) {
            *o = (bins[k] + bins[self.n - k].conj()) * 0.5;
        }
    }
}
