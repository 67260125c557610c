//! Interlaced pilot/data framing and waveform propagation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::ofdm::{OfdmModem, OfdmParams};
use super::qpsk::qpsk_map;
use crate::channel::{evolve_channel, ChannelRealization};
use crate::error::{contract, Result};
use crate::seed::rng_from_seed;

/// Fixed pseudo-random QPSK pilot pairs, known to the receiver.
pub fn pilot_pairs(params: &OfdmParams) -> Vec<Complex64> {
    let mut rng = rng_from_seed(params.pilot_seed);
    let bits: Vec<u8> = (0..2 * params.data_pairs()).map(|_| rng.random_range(0..2u8)).collect();
    qpsk_map(&bits).expect("even bit count")
}

/// Real transmit samples of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    pub samples: Vec<f64>,
    pub symbol_samples: usize,
}

impl TxFrame {
    pub fn n_symbols(&self) -> usize {
        self.samples.len() / self.symbol_samples
    }

    pub fn symbol(&self, s: usize) -> &[f64] {
        &self.samples[s * self.symbol_samples..(s + 1) * self.symbol_samples]
    }
}

/// Even symbols carry the pilot, odd symbols carry data rows in order.
/// Fewer data rows than the frame holds are zero-padded.
pub fn build_frame(
    data: &[Vec<Complex64>],
    pilot: &[Complex64],
    modem: &OfdmModem,
    params: &OfdmParams,
) -> Result<TxFrame> {
    let rows = params.data_symbols();
    if data.len() > rows {
        return Err(contract(format!("{} data symbols exceed the frame's {rows}", data.len())));
    }
    let pilot_wave = modem.modulate(pilot)?;
    let zero = vec![Complex64::new(0.0, 0.0); modem.pairs()];
    let mut samples = Vec::with_capacity(params.frame_samples());
    for r in 0..rows {
        samples.extend_from_slice(&pilot_wave);
        samples.extend(modem.modulate(data.get(r).unwrap_or(&zero))?);
    }
    Ok(TxFrame { samples, symbol_samples: modem.symbol_samples() })
}

/// Per-symbol tap gains of every detector: `snapshots[s][rx]`.
pub fn channel_snapshots<R: Rng + ?Sized>(
    state: &mut ChannelRealization,
    n_symbols: usize,
    rng: &mut R,
) -> Vec<Vec<[f64; 2]>> {
    let mut out = Vec::with_capacity(n_symbols);
    for s in 0..n_symbols {
        if s > 0 {
            evolve_channel(state, rng);
        }
        out.push(state.tap_gains.clone());
    }
    out
}

/// Time-domain AWGN standard deviation per real dimension giving a per-bin
/// SNR of `snr` after demodulation.
pub fn noise_sd(modem: &OfdmModem, snr: f64) -> f64 {
    let n = modem.fft_size() as f64;
    let active = 2.0 * modem.pairs() as f64;
    (n / (active * snr) / 2.0).sqrt()
}

/// Passes the frame through one detector's two-tap channel and adds complex
/// noise. Gains switch at symbol boundaries, so the prefix absorbs the
/// delayed tap and each symbol sees a circular channel.
pub fn receive_detector<R: Rng + ?Sized>(
    tx: &TxFrame,
    gains: impl Fn(usize) -> [f64; 2],
    delay: usize,
    sd: f64,
    rng: &mut R,
    out: &mut Vec<Complex64>,
) {
    out.clear();
    out.reserve(tx.samples.len());
    let ns = tx.symbol_samples;
    let x = &tx.samples;
    for s in 0..tx.n_symbols() {
        let [g0, g1] = gains(s);
        for n in s * ns..(s + 1) * ns {
            let prev = if n >= delay { x[n - delay] } else { 0.0 };
            out.push(Complex64::new(g0 * x[n] + g1 * prev, 0.0));
        }
    }
    if sd > 0.0 {
        for y in out.iter_mut() {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            y.re += sd * a;
            y.im = sd * b;
        }
    }
}

/// Prefix-free received samples of symbol `s` on one detector, written
/// straight into a DFT buffer. Equivalent to `receive_detector` followed by
/// dropping the prefix, without drawing noise for discarded samples.
pub fn receive_symbol<R: Rng + ?Sized>(
    tx: &TxFrame,
    s: usize,
    [g0, g1]: [f64; 2],
    delay: usize,
    sd: f64,
    rng: &mut R,
    out: &mut [Complex64],
) {
    let ns = tx.symbol_samples;
    let start = s * ns + ns - out.len();
    let x = &tx.samples;
    for (i, y) in out.iter_mut().enumerate() {
        let n = start + i;
        let prev = if n >= delay { x[n - delay] } else { 0.0 };
        *y = Complex64::new(g0 * x[n] + g1 * prev, 0.0);
    }
    if sd > 0.0 {
        for y in out.iter_mut() {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            y.re += sd * a;
            y.im = sd * b;
        }
    }
}

/// Conjugate-combined bins of received symbols computed directly in the
/// frequency domain. With the prefix covering the tap delay each symbol sees a
/// circular channel, so pair `k` is `H[k] X[k]` plus independent circular
/// noise. Matches `receive_symbol`, demodulation and conjugate combining in
/// distribution at a quarter of the random draws.
#[derive(Debug, Clone)]
pub struct PairReceiver {
    clean: Vec<Vec<Complex64>>,
    phase: Vec<Complex64>,
    pair_sd: f64,
}

impl PairReceiver {
    pub fn new(tx: &TxFrame, modem: &OfdmModem, delay: usize, sd: f64) -> Result<Self> {
        let n = modem.fft_size();
        let cp = modem.symbol_samples() - n;
        if delay > cp {
            return Err(contract(format!("tap delay {delay} exceeds the {cp}-sample prefix")));
        }
        let pairs = modem.pairs();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let clean = (0..tx.n_symbols())
            .map(|s| {
                for (b, &x) in buf.iter_mut().zip(&tx.symbol(s)[cp..]) {
                    *b = Complex64::new(x, 0.0);
                }
                modem.demodulate_in_place(&mut buf);
                let mut out = vec![Complex64::new(0.0, 0.0); pairs];
                modem.conj_combine_into(&buf, &mut out);
                out
            })
            .collect();
        let phase = (1..=pairs)
            .map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * delay) as f64 / n as f64))
            .collect();
        // Per-dimension sd of (W[k] + conj(W[n-k])) / 2 after rx scaling.
        let pair_sd = sd * modem.rx_scale() * (n as f64 / 2.0).sqrt();
        Ok(Self { clean, phase, pair_sd })
    }

    pub fn receive<R: Rng + ?Sized>(&self, s: usize, [g0, g1]: [f64; 2], rng: &mut R, out: &mut [Complex64]) {
        for ((o, x), p) in out.iter_mut().zip(&self.clean[s]).zip(&self.phase) {
            *o = (p * g1 + g0) * x;
        }
        if self.pair_sd > 0.0 {
            for o in out.iter_mut() {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                o.re += self.pair_sd * a;
                o.im += self.pair_sd * b;
            }
        }
    }
}

/// Received samples of every detector plus the channel snapshots that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameWaveform {
    pub samples: Vec<Vec<Complex64>>,
    pub symbol_samples: usize,
    pub snapshots: Vec<Vec<[f64; 2]>>,
}

impl FrameWaveform {
    pub fn n_rx(&self) -> usize {
        self.samples.len()
    }

    pub fn symbol(&self, rx: usize, s: usize) -> &[Complex64] {
        &self.samples[rx][s * self.symbol_samples..(s + 1) * self.symbol_samples]
    }
}

/// Full propagation of a frame at the realization's SNR; `noiseless` skips
/// the noise draws.
pub fn propagate<R: Rng + ?Sized>(
    tx: &TxFrame,
    state: &mut ChannelRealization,
    modem: &OfdmModem,
    noiseless: bool,
    rng: &mut R,
) -> FrameWaveform {
    let snapshots = channel_snapshots(state, tx.n_symbols(), rng);
    let sd = if noiseless { 0.0 } else { noise_sd(modem, state.snr) };
    let delay = state.tap_delay_samples[1];
    let samples = (0..state.n_rx())
        .map(|rx| {
            let mut out = Vec::new();
            receive_detector(tx, |s| snapshots[s][rx], delay, sd, rng, &mut out);
            out
        })
        .collect();
    FrameWaveform { samples, symbol_samples: tx.symbol_samples, snapshots }
}
