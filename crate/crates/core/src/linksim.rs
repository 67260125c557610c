//! Monte Carlo frame-error simulation of the six transmitter configurations.

use std::fmt;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, OpticalLinkParams};
use crate::error::{contract, Error, Result};
use crate::phy::frame::{channel_snapshots, noise_sd, receive_detector, PairReceiver};
use crate::phy::{
    build_frame, pilot_pairs, qpsk_llr, qpsk_map, DetectMode, FrameWaveform, MrcCombiner,
    OfdmModem, OfdmParams, SpreadingLayout, SpreadingSpec,
};
use crate::seed::{mix_seed, rng_from_seed};
use crate::turbo::{turbo_decode, turbo_encode, CodeRate, TurboCodeSpec};

/// Bits per QPSK symbol.
pub const BITS_PER_SYMBOL: usize = 2;
pub const N_CONFIGS: usize = 6;

/// One transmitter configuration: spreading lengths and code rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkConfig {
    pub index: usize,
    pub nf: usize,
    pub nt: usize,
    pub rate: CodeRate,
}

impl LinkConfig {
    pub const fn all() -> [LinkConfig; N_CONFIGS] {
        const fn c(index: usize, nf: usize, nt: usize, rate: CodeRate) -> LinkConfig {
            LinkConfig { index, nf, nt, rate }
        }
        [
            c(1, 1, 1, CodeRate::R12),
            c(2, 1, 1, CodeRate::R13),
            c(3, 16, 1, CodeRate::R12),
            c(4, 16, 1, CodeRate::R13),
            c(5, 16, 8, CodeRate::R12),
            c(6, 16, 8, CodeRate::R13),
        ]
    }

    pub fn by_index(c: usize) -> Result<Self> {
        if (1..=N_CONFIGS).contains(&c) {
            Ok(Self::all()[c - 1])
        } else {
            Err(contract(format!("configuration index must be in 1..=6, got {c}")))
        }
    }

    pub fn spreading(&self) -> SpreadingSpec {
        SpreadingSpec::new(self.nf, self.nt)
    }

    /// 0 = no spreading, 1 = frequency spreading, 2 = time-frequency spreading.
    pub fn spreading_group(&self) -> usize {
        match (self.nf > 1, self.nt > 1) {
            (false, _) => 0,
            (true, false) => 1,
            (true, true) => 2,
        }
    }
}

impl fmt::Display for LinkConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spreading_group() {
            0 => write!(f, "no spreading, {} Turbo", self.rate),
            1 => write!(f, "N_F = {}, {} Turbo", self.nf, self.rate),
            _ => write!(f, "N_F = {}, N_T = {}, {} Turbo", self.nf, self.nt, self.rate),
        }
    }
}

/// Physical-layer throughput in bit/s.
pub fn throughput(cfg: &LinkConfig, ofdm: &OfdmParams, n_tx: usize, fer: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fer) {
        return Err(contract(format!("fer must lie in [0, 1], got {fer}")));
    }
    let num = (BITS_PER_SYMBOL * n_tx * ofdm.n_subc) as f64 * cfg.rate.value() * (1.0 - fer);
    Ok(num / (2 * cfg.nt * cfg.nf) as f64 / ofdm.t_ofdm())
}

/// Largest information block whose coded and tail bits fit the frame after
/// spreading.
pub fn info_bits_per_frame(cfg: &LinkConfig, ofdm: &OfdmParams) -> Result<usize> {
    let layout = SpreadingLayout::new(cfg.spreading(), ofdm.data_symbols(), ofdm.data_pairs())?;
    let budget = BITS_PER_SYMBOL * layout.capacity();
    let tail = 12;
    let k = budget.saturating_sub(tail) / cfg.rate.expansion();
    if k == 0 {
        return Err(contract(format!("configuration {} leaves no room for information bits", cfg.index)));
    }
    Ok(k)
}

/// Receiver and Monte Carlo settings shared by every point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Fraction of small-scale power in the first tap.
    pub power_ratio: f64,
    pub detector: DetectMode,
    pub turbo_iterations: usize,
    pub turbo_early_stop: bool,
    pub interleaver_seed: u64,
    /// A point stops once this many frames have failed.
    pub max_frame_errors: usize,
    /// Account for pilot noise in the LLR scaling.
    pub estimation_aware_llr: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            power_ratio: 0.9,
            detector: DetectMode::Mmse,
            turbo_iterations: 8,
            turbo_early_stop: true,
            interleaver_seed: 0x1a7e_71ea,
            max_frame_errors: 50,
            estimation_aware_llr: true,
        }
    }
}

/// Outcome of one Monte Carlo point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub n_frames: usize,
    pub n_frame_errors: usize,
    /// First pilot and data symbol of the first frame on the capture detectors.
    pub capture: Option<FrameWaveform>,
}

impl PointResult {
    pub fn fer(&self) -> f64 {
        self.n_frame_errors as f64 / self.n_frames as f64
    }
}

/// Detectors whose waveform is kept for feature extraction.
pub const CAPTURE_DETECTORS: usize = 4;
/// OFDM symbols kept per capture: the first pilot and the first data symbol.
pub const CAPTURE_SYMBOLS: usize = 2;

struct ConfigChain {
    cfg: LinkConfig,
    turbo: TurboCodeSpec,
    layout: SpreadingLayout,
}

/// Complete transmitter, channel and receiver for all six configurations.
pub struct LinkSimulator {
    pub link: OpticalLinkParams,
    pub ofdm: OfdmParams,
    pub sim: SimParams,
    modem: OfdmModem,
    pilot: Vec<Complex64>,
    chains: Vec<ConfigChain>,
}

impl fmt::Debug for LinkSimulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkSimulator").field("link", &self.link).field("ofdm", &self.ofdm).field("sim", &self.sim).finish()
    }
}

/// How the channel of a frame is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelMode {
    /// Fading link at distance `d` (m) and speed `v` (m/s).
    Link { d: f64, v: f64 },
    /// Single detector, unit gain, no noise.
    Identity,
}

impl LinkSimulator {
    pub fn new(link: OpticalLinkParams, ofdm: OfdmParams, sim: SimParams) -> Result<Self> {
        link.validate()?;
        ofdm.validate()?;
        if !(sim.power_ratio > 0.0 && sim.power_ratio <= 1.0) {
            return Err(contract(format!("power_ratio must lie in (0, 1], got {}", sim.power_ratio)));
        }
        if sim.max_frame_errors == 0 {
            return Err(contract("max_frame_errors must be at least 1"));
        }
        let modem = OfdmModem::new(&ofdm)?;
        let pilot = pilot_pairs(&ofdm);
        let chains = LinkConfig::all()
            .into_iter()
            .map(|cfg| {
                let k = info_bits_per_frame(&cfg, &ofdm)?;
                let turbo = TurboCodeSpec::new(k, cfg.rate, sim.interleaver_seed)?
                    .with_iterations(sim.turbo_iterations)
                    .with_early_stop(sim.turbo_early_stop);
                let layout = SpreadingLayout::new(cfg.spreading(), ofdm.data_symbols(), ofdm.data_pairs())?;
                Ok(ConfigChain { cfg, turbo, layout })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { link, ofdm, sim, modem, pilot, chains })
    }

    pub fn with_defaults() -> Result<Self> {
        Self::new(OpticalLinkParams::default(), OfdmParams::default(), SimParams::default())
    }

    pub fn modem(&self) -> &OfdmModem {
        &self.modem
    }

    pub fn pilot(&self) -> &[Complex64] {
        &self.pilot
    }

    fn chain(&self, cfg: &LinkConfig) -> Result<&ConfigChain> {
        let chain = self.chains.get(cfg.index.wrapping_sub(1)).ok_or_else(|| contract("unknown configuration"))?;
        if chain.cfg != *cfg {
            return Err(contract(format!("configuration {} does not match the built-in table", cfg.index)));
        }
        Ok(chain)
    }

    pub fn info_bits(&self, cfg: &LinkConfig) -> Result<usize> {
        Ok(self.chain(cfg)?.turbo.k())
    }

    /// Transmits `info` once and returns the decoded bits, plus the capture
    /// when requested.
    pub fn transmit<R: Rng + ?Sized>(
        &self,
        cfg: &LinkConfig,
        info: &[u8],
        mode: ChannelMode,
        capture: bool,
        rng: &mut R,
    ) -> Result<(Vec<u8>, Option<FrameWaveform>)> {
        let chain = self.chain(cfg)?;
        let coded = turbo_encode(info, &chain.turbo)?;
        let mut symbols = qpsk_map(&coded)?;
        let cap = chain.layout.capacity();
        if symbols.len() > cap {
            return Err(contract("coded block exceeds the frame capacity"));
        }
        let n_coded = symbols.len();
        symbols.resize(cap, Complex64::new(0.0, 0.0));
        let grid = chain.layout.spread(&symbols)?;
        let tx = build_frame(&grid, &self.pilot, &self.modem, &self.ofdm)?;

        let n_symbols = tx.n_symbols();
        let (snapshots, delay, sd, snr) = match mode {
            ChannelMode::Link { d, v } => {
                let mut state = draw_channel(&self.link, d, v, self.sim.power_ratio, self.ofdm.t_ofdm(), rng)?;
                let snaps = channel_snapshots(&mut state, n_symbols, rng);
                (snaps, state.tap_delay_samples[1], noise_sd(&self.modem, state.snr), state.snr)
            }
            ChannelMode::Identity => (vec![vec![[1.0, 0.0]]; n_symbols], 1, 0.0, 1e12),
        };
        let n_rx = snapshots[0].len();
        // Pair noise after conjugate combining.
        let nv = 1.0 / (2.0 * snr);

        let rows = self.ofdm.data_symbols();
        let pairs = self.modem.pairs();
        let n = self.modem.fft_size();
        let ns = self.modem.symbol_samples();
        let cp = ns - n;
        let mut mrc = MrcCombiner::new(rows * pairs);
        let mut rx = Vec::with_capacity(tx.samples.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut h = vec![Complex64::new(0.0, 0.0); pairs];
        let mut y = vec![Complex64::new(0.0, 0.0); pairs];
        let fast = PairReceiver::new(&tx, &self.modem, delay, sd)?;
        let mut captured = capture.then(|| Vec::with_capacity(CAPTURE_DETECTORS));
        let pilot_inv: Vec<Complex64> = self.pilot.iter().map(|p| p.inv()).collect();
        for det in 0..n_rx {
            // Captured detectors go through the full waveform, prefix included.
            let full = match captured.as_mut() {
                Some(c) if det < CAPTURE_DETECTORS => {
                    receive_detector(&tx, |s| snapshots[s][det], delay, sd, rng, &mut rx);
                    c.push(rx[..CAPTURE_SYMBOLS * ns].to_vec());
                    true
                }
                _ => false,
            };
            for s in 0..2 * rows {
                if full {
                    buf.copy_from_slice(&rx[s * ns + cp..(s + 1) * ns]);
                    self.modem.demodulate_in_place(&mut buf);
                    self.modem.conj_combine_into(&buf, &mut y);
                } else {
                    fast.receive(s, snapshots[s][det], rng, &mut y);
                }
                if s % 2 == 0 {
                    for ((hk, yk), pk) in h.iter_mut().zip(&y).zip(&pilot_inv) {
                        *hk = yk * pk;
                    }
                } else {
                    mrc.accumulate_at(s / 2 * pairs, &y, &h);
                }
            }
            mrc.end_branch();
        }
        let est_var = if self.sim.estimation_aware_llr && sd > 0.0 { nv } else { 0.0 };
        let det = mrc.finish_with_estimation_error(nv, est_var, self.sim.detector)?;
        let chips: Vec<Vec<Complex64>> = det.symbols.chunks(pairs).map(<[_]>::to_vec).collect();
        let vars: Vec<Vec<f64>> = det.noise_var.chunks(pairs).map(<[_]>::to_vec).collect();
        let (sym, sym_var) = chain.layout.despread_with_variance(&chips, &vars)?;
        let llr = qpsk_llr(&sym[..n_coded], &sym_var[..n_coded])?;
        let decoded = turbo_decode(&llr, &chain.turbo)?;

        let capture = captured.map(|samples| FrameWaveform {
            samples,
            symbol_samples: ns,
            snapshots: snapshots[..CAPTURE_SYMBOLS]
                .iter()
                .map(|s| s.iter().take(CAPTURE_DETECTORS).copied().collect())
                .collect(),
        });
        Ok((decoded, capture))
    }

    /// Runs up to `n_frames` frames, stopping early at `max_frame_errors`.
    pub fn simulate_point(&self, cfg: &LinkConfig, d: f64, v: f64, n_frames: usize, seed: u64) -> Result<PointResult> {
        if n_frames == 0 {
            return Err(contract("n_frames must be at least 1"));
        }
        let k = self.info_bits(cfg)?;
        let mut rng = rng_from_seed(seed);
        let mut errors = 0;
        let mut run = 0;
        let mut capture = None;
        while run < n_frames && errors < self.sim.max_frame_errors {
            let info: Vec<u8> = (0..k).map(|_| rng.random_range(0..2u8)).collect();
            let (decoded, cap) = self.transmit(cfg, &info, ChannelMode::Link { d, v }, run == 0, &mut rng)?;
            if run == 0 {
                capture = cap;
            }
            errors += usize::from(decoded != info);
            run += 1;
        }
        Ok(PointResult { n_frames: run, n_frame_errors: errors, capture })
    }
}

/// Grid of points to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepPlan {
    pub speeds: Vec<f64>,
    pub distances: Vec<f64>,
    pub repeats: usize,
    /// Configuration indices (1-based).
    pub configs: Vec<usize>,
    pub n_frames: usize,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            speeds: vec![0.1, 0.3, 0.4, 0.5],
            distances: (1..=60).map(f64::from).collect(),
            repeats: 4,
            configs: (1..=N_CONFIGS).collect(),
            n_frames: 200,
        }
    }
}

impl SweepPlan {
    pub fn n_points(&self) -> usize {
        self.speeds.len() * self.distances.len() * self.repeats * self.configs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points() == 0 {
            return Err(contract("sweep grid is empty"));
        }
        if self.n_frames == 0 {
            return Err(contract("n_frames must be at least 1"));
        }
        for &c in &self.configs {
            LinkConfig::by_index(c)?;
        }
        if self.speeds.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(contract("speeds must be finite and nonnegative"));
        }
        if self.distances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(contract("distances must be finite and positive"));
        }
        Ok(())
    }

    /// Points as `(v_idx, d_idx, repeat, config)` in canonical order.
    pub fn points(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.n_points());
        for vi in 0..self.speeds.len() {
            for di in 0..self.distances.len() {
                for r in 0..self.repeats {
                    for &c in &self.configs {
                        out.push((vi, di, r, c));
                    }
                }
            }
        }
        out
    }
}

/// Seed of one point.
pub fn point_seed(seed_base: u64, v_idx: usize, d_idx: usize, repeat: usize, config: usize) -> u64 {
    mix_seed(seed_base, &[v_idx as u64, d_idx as u64, repeat as u64, config as u64])
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: usize,
    pub nf: usize,
    pub nt: usize,
    pub rate: CodeRate,
    pub speed: f64,
    pub distance: f64,
    pub repeat: usize,
    pub n_frames: usize,
    pub n_frame_errors: usize,
    pub fer: f64,
    pub throughput: f64,
    /// Not serialized.
    pub capture: Option<FrameWaveform>,
}

/// Runs `plan` on at most `parallelism` threads (all cores when `None`).
/// Output order and content do not depend on the schedule.
pub fn sweep(sim: &LinkSimulator, plan: &SweepPlan, seed_base: u64, parallelism: Option<usize>) -> Result<Vec<SweepRow>> {
    sweep_with_progress(sim, plan, seed_base, parallelism, |_| {})
}

pub fn sweep_with_progress(
    sim: &LinkSimulator,
    plan: &SweepPlan,
    seed_base: u64,
    parallelism: Option<usize>,
    progress: impl Fn(usize) + Sync,
) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let points = plan.points();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let run = |&(vi, di, r, c): &(usize, usize, usize, usize)| -> Result<SweepRow> {
        let cfg = LinkConfig::by_index(c)?;
        let (v, d) = (plan.speeds[vi], plan.distances[di]);
        let res = sim.simulate_point(&cfg, d, v, plan.n_frames, point_seed(seed_base, vi, di, r, c))?;
        let fer = res.fer();
        progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
        Ok(SweepRow {
            config: c,
            nf: cfg.nf,
            nt: cfg.nt,
            rate: cfg.rate,
            speed: v,
            distance: d,
            repeat: r,
            n_frames: res.n_frames,
            n_frame_errors: res.n_frame_errors,
            fer,
            throughput: throughput(&cfg, &sim.ofdm, sim.link.n_tx, fer)?,
            capture: res.capture,
        })
    };
    match parallelism {
        Some(1) => points.iter().map(run).collect(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| contract(format!("cannot build thread pool: {e}")))?;
            pool.install(|| points.par_iter().map(run).collect())
        }
        None => points.par_iter().map(run).collect(),
    }
}

/// Index of the highest-throughput configuration; the smallest index wins
/// ties.
pub fn optimal_config(rows: &[&SweepRow]) -> Result<usize> {
    let mut tp = [None; N_CONFIGS];
    for row in rows {
        let slot = tp
            .get_mut(row.config.wrapping_sub(1))
            .ok_or_else(|| contract(format!("invalid configuration {}", row.config)))?;
        if slot.replace(row.throughput).is_some() {
            return Err(contract(format!("configuration {} appears twice", row.config)));
        }
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, t) in tp.iter().enumerate() {
        let t = t.ok_or_else(|| contract(format!("missing row for configuration {}", i + 1)))?;
        if t > best.1 {
            best = (i + 1, t);
        }
    }
    Ok(best.0)
}

/// FER per distance for one configuration and speed, pooling repeats.
pub fn fer_curve(rows: &[SweepRow], config: usize, speed: f64) -> Vec<(f64, f64)> {
    let mut acc: Vec<(f64, usize, usize)> = Vec::new();
    for r in rows.iter().filter(|r| r.config == config && r.speed == speed) {
        match acc.iter_mut().find(|a| a.0 == r.distance) {
            Some(a) => {
                a.1 += r.n_frames;
                a.2 += r.n_frame_errors;
            }
            None => acc.push((r.distance, r.n_frames, r.n_frame_errors)),
        }
    }
    acc.sort_by(|a, b| a.0.total_cmp(&b.0));
    acc.into_iter().map(|(d, n, e)| (d, e as f64 / n as f64)).collect()
}

/// Largest distance up to which every grid point has `fer < threshold`;
/// zero when the shortest distance already fails.
pub fn coverage(rows: &[SweepRow], config: usize, speed: f64, threshold: f64) -> f64 {
    let mut cov = 0.0;
    for (d, fer) in fer_curve(rows, config, speed) {
        if fer >= threshold {
            break;
        }
        cov = d;
    }
    cov
}

pub const SWEEP_HEADER: [&str; 11] = [
    "config",
    "nf",
    "nt",
    "rc",
    "speed_mps",
    "distance_m",
    "repeat",
    "n_frames",
    "n_frame_errors",
    "fer",
    "throughput_bps",
];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let io = |e: csv::Error| contract(format!("writing sweep CSV: {e}"));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.config.to_string(),
            r.nf.to_string(),
            r.nt.to_string(),
            r.rate.value().to_string(),
            r.speed.to_string(),
            r.distance.to_string(),
            r.repeat.to_string(),
            r.n_frames.to_string(),
            r.n_frame_errors.to_string(),
            r.fer.to_string(),
            r.throughput.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| contract(format!("writing sweep CSV: {e}")))?;
    Ok(())
}

/// Parses a sweep CSV; `origin` names the source in errors.
pub fn read_sweep_csv<R: Read>(input: R, origin: &std::path::Path) -> Result<Vec<SweepRow>> {
    let perr = |line: usize, message: String| Error::Parse { path: origin.to_path_buf(), line, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(perr(1, "empty file, expected a header row".into())),
        Some(h) => h.map_err(|e| perr(1, e.to_string()))?,
    };
    for (i, want) in SWEEP_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            got => {
                return Err(perr(1, format!("column {}: expected '{want}', found '{}'", i + 1, got.unwrap_or(""))))
            }
        }
    }
    if header.len() != SWEEP_HEADER.len() {
        return Err(perr(1, format!("expected {} columns, found {}", SWEEP_HEADER.len(), header.len())));
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str, col: &str, line: usize, perr: &dyn Fn(usize, String) -> Error) -> Result<T> {
            s.parse().map_err(|_| perr(line, format!("column '{col}': cannot parse '{s}'")))
        }
        let rc: f64 = num(field(3), "rc", line, &perr)?;
        let rate = if (rc - 0.5).abs() < 1e-9 {
            CodeRate::R12
        } else if (rc - 1.0 / 3.0).abs() < 1e-9 {
            CodeRate::R13
        } else {
            return Err(perr(line, format!("column 'rc': unsupported rate {rc}")));
        };
        rows.push(SweepRow {
            config: num(field(0), "config", line, &perr)?,
            nf: num(field(1), "nf", line, &perr)?,
            nt: num(field(2), "nt", line, &perr)?,
            rate,
            speed: num(field(4), "speed_mps", line, &perr)?,
            distance: num(field(5), "distance_m", line, &perr)?,
            repeat: num(field(6), "repeat", line, &perr)?,
            n_frames: num(field(7), "n_frames", line, &perr)?,
            n_frame_errors: num(field(8), "n_frame_errors", line, &perr)?,
            fer: num(field(9), "fer", line, &perr)?,
            throughput: num(field(10), "throughput_bps", line, &perr)?,
            capture: None,
        });
    }
    Ok(rows)
}
