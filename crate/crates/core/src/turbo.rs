//! Parallel-concatenated turbo code: two memory-3 recursive systematic
//! convolutional encoders joined by a seeded pseudo-random interleaver, rate
//! 1/3 mother code punctured to 1/2, and an iterative Log-MAP decoder.
//!
//! LLR sign convention: a positive value favours bit 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::seed::{mix_seed, rng_from_seed};

/// Channel code rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeRate {
    #[serde(rename = "1/2")]
    R12,
    #[serde(rename = "1/3")]
    R13,
}

impl CodeRate {
    pub fn value(self) -> f64 {
        match self {
            CodeRate::R12 => 0.5,
            CodeRate::R13 => 1.0 / 3.0,
        }
    }

    /// Coded bits per information bit, excluding the tail.
    pub fn expansion(self) -> usize {
        match self {
            CodeRate::R12 => 2,
            CodeRate::R13 => 3,
        }
    }
}

impl std::fmt::Display for CodeRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CodeRate::R12 => "1/2",
            CodeRate::R13 => "1/3",
        })
    }
}

/// Which parity streams survive puncturing at a given information-bit index.
/// Entry `[i % period]` holds `(keep parity 1, keep parity 2)`.
const PUNCTURE_R13: [[bool; 2]; 1] = [[true, true]];
const PUNCTURE_R12: [[bool; 2]; 2] = [[true, false], [false, true]];

/// Trellis of one recursive systematic constituent encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Trellis {
    memory: usize,
    /// `next[state][input]`
    next: Vec<[usize; 2]>,
    /// `parity[state][input]`
    parity: Vec<[u8; 2]>,
    /// Input that drives the feedback to zero, used for termination.
    tail_input: Vec<u8>,
}

impl Trellis {
    /// Builds the trellis for octal polynomials written with the `D^0`
    /// coefficient as the most significant bit (so `0o13` is `1 + D^2 + D^3`).
    fn new(feedback: u32, feedforward: u32, memory: usize) -> Result<Self> {
        if memory == 0 || memory > 8 {
            return Err(contract(format!("unsupported constituent memory {memory}")));
        }
        let coeff = |poly: u32, i: usize| ((poly >> (memory - i)) & 1) as u8;
        if coeff(feedback, 0) != 1 {
            return Err(contract("feedback polynomial must have a unit constant term"));
        }
        if feedback >> (memory + 1) != 0 || feedforward >> (memory + 1) != 0 {
            return Err(contract("polynomial degree exceeds the constituent memory"));
        }
        let n_states = 1usize << memory;
        let mut next = vec![[0usize; 2]; n_states];
        let mut parity = vec![[0u8; 2]; n_states];
        let mut tail_input = vec![0u8; n_states];
        for state in 0..n_states {
            // bit i of `state` is the register content delayed by i + 1
            let reg = |i: usize| ((state >> i) & 1) as u8;
            let fb: u8 = (1..=memory).fold(0, |acc, i| acc ^ (coeff(feedback, i) & reg(i - 1)));
            let ff: u8 = (1..=memory).fold(0, |acc, i| acc ^ (coeff(feedforward, i) & reg(i - 1)));
            tail_input[state] = fb;
            for u in 0..2u8 {
                let a = u ^ fb;
                parity[state][u as usize] = (coeff(feedforward, 0) & a) ^ ff;
                next[state][u as usize] = ((state << 1) | a as usize) & (n_states - 1);
            }
        }
        Ok(Self { memory, next, parity, tail_input })
    }

    fn n_states(&self) -> usize {
        self.next.len()
    }

    /// Encodes `bits`, returning the parity stream plus the terminating tail
    /// as `(systematic, parity)` pairs.
    fn encode(&self, bits: &[u8]) -> (Vec<u8>, Vec<[u8; 2]>) {
        let mut state = 0usize;
        let mut parity = Vec::with_capacity(bits.len());
        for &u in bits {
            parity.push(self.parity[state][u as usize]);
            state = self.next[state][u as usize];
        }
        let mut tail = Vec::with_capacity(self.memory);
        for _ in 0..self.memory {
            let u = self.tail_input[state];
            tail.push([u, self.parity[state][u as usize]]);
            state = self.next[state][u as usize];
        }
        debug_assert_eq!(state, 0);
        (parity, tail)
    }
}

/// Full description of a turbo code instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TurboCodeSpec {
    pub feedback: u32,
    pub feedforward: u32,
    pub memory: usize,
    /// Encoder 2 sees `info[interleaver[k]]` at step `k`.
    pub interleaver: Vec<usize>,
    pub n_iterations: usize,
    pub rate: CodeRate,
    /// Stop iterating once hard decisions are stable and both constituent
    /// decoders agree.
    pub early_stop: bool,
    trellis: Trellis,
}

impl TurboCodeSpec {
    /// RSC (13, 15) constituents, seeded interleaver of length `k`, 8 iterations.
    pub fn new(k: usize, rate: CodeRate, interleaver_seed: u64) -> Result<Self> {
        Self::with_polynomials(0o13, 0o15, 3, build_interleaver(k, interleaver_seed)?, rate, 8)
    }

    pub fn with_polynomials(
        feedback: u32,
        feedforward: u32,
        memory: usize,
        interleaver: Vec<usize>,
        rate: CodeRate,
        n_iterations: usize,
    ) -> Result<Self> {
        check_permutation(&interleaver)?;
        if n_iterations == 0 {
            return Err(contract("turbo decoding needs at least one iteration"));
        }
        let trellis = Trellis::new(feedback, feedforward, memory)?;
        Ok(Self {
            feedback,
            feedforward,
            memory,
            interleaver,
            n_iterations,
            rate,
            early_stop: false,
            trellis,
        })
    }

    pub fn with_iterations(mut self, n: usize) -> Self {
        self.n_iterations = n.max(1);
        self
    }

    pub fn with_early_stop(mut self, on: bool) -> Self {
        self.early_stop = on;
        self
    }

    /// Information block length.
    pub fn k(&self) -> usize {
        self.interleaver.len()
    }

    /// Coded tail bits: both constituents are terminated.
    pub fn tail_len(&self) -> usize {
        4 * self.memory
    }

    pub fn coded_len(&self) -> usize {
        self.rate.expansion() * self.k() + self.tail_len()
    }

    pub fn puncture_pattern(&self) -> &'static [[bool; 2]] {
        match self.rate {
            CodeRate::R12 => &PUNCTURE_R12,
            CodeRate::R13 => &PUNCTURE_R13,
        }
    }
}

fn check_permutation(perm: &[usize]) -> Result<()> {
    if perm.is_empty() {
        return Err(contract("interleaver length must be >= 1"));
    }
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(contract("interleaver is not a permutation"));
        }
    }
    Ok(())
}

/// Seeded pseudo-random permutation of `0..k` (Fisher-Yates).
pub fn build_interleaver(k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(contract("interleaver length must be >= 1"));
    }
    let mut rng = rng_from_seed(mix_seed(seed, &[k as u64]));
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    Ok(perm)
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Encodes `info` into `[x, p1, p2]` triples (rate 1/3) or alternately
/// punctured `[x, p]` pairs (rate 1/2), followed by both constituent tails.
pub fn turbo_encode(info: &[u8], spec: &TurboCodeSpec) -> Result<Vec<u8>> {
    let k = spec.k();
    if info.len() != k {
        return Err(contract(format!("expected {k} information bits, got {}", info.len())));
    }
    if info.iter().any(|&b| b > 1) {
        return Err(contract("information bits must be 0 or 1"));
    }
    let (p1, tail1) = spec.trellis.encode(info);
    let permuted: Vec<u8> = spec.interleaver.iter().map(|&i| info[i]).collect();
    let (p2, tail2) = spec.trellis.encode(&permuted);

    let pattern = spec.puncture_pattern();
    let mut out = Vec::with_capacity(spec.coded_len());
    for i in 0..k {
        out.push(info[i]);
        let [keep1, keep2] = pattern[i % pattern.len()];
        if keep1 {
            out.push(p1[i]);
        }
        if keep2 {
            out.push(p2[i]);
        }
    }
    for t in tail1.iter().chain(&tail2) {
        out.extend_from_slice(t);
    }
    debug_assert_eq!(out.len(), spec.coded_len());
    Ok(out)
}

/// `ln(1 + e^-x)` on `[0, 36]` by cubic Hermite interpolation of exact
/// samples; the interpolation error stays below 2e-12.
struct Correction {
    inv_h: f64,
    h: f64,
    val: Vec<f64>,
    der: Vec<f64>,
}

const CORRECTION_LIMIT: f64 = 36.0;

impl Correction {
    fn new() -> Self {
        let steps_per_unit = 128.0;
        let n = (CORRECTION_LIMIT * steps_per_unit) as usize + 2;
        let h = 1.0 / steps_per_unit;
        let xs = (0..n).map(|i| i as f64 * h);
        Self {
            inv_h: steps_per_unit,
            h,
            val: xs.clone().map(|x| (-x).exp().ln_1p()).collect(),
            der: xs.map(|x| -1.0 / (1.0 + x.exp())).collect(),
        }
    }

    #[inline(always)]
    fn eval(&self, x: f64) -> f64 {
        let pos = x * self.inv_h;
        let i = pos as usize;
        let t = pos - i as f64;
        let (y0, y1) = (self.val[i], self.val[i + 1]);
        let (m0, m1) = (self.der[i] * self.h, self.der[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0) + m0 * (t3 - 2.0 * t2 + t) + y1 * (3.0 * t2 - 2.0 * t3) + m1 * (t3 - t2)
    }
}

fn correction_table() -> &'static Correction {
    static TABLE: std::sync::OnceLock<Correction> = std::sync::OnceLock::new();
    TABLE.get_or_init(Correction::new)
}

/// Jacobian logarithm `ln(e^a + e^b)`, branch-free. Beyond a gap of 36 the
/// correction is below 2.3e-16; infinite or NaN gaps clamp to that end.
#[inline(always)]
fn max_star_with(c: &Correction, a: f64, b: f64) -> f64 {
    let diff = (a - b).abs().min(CORRECTION_LIMIT);
    a.max(b) + c.eval(diff)
}

/// Jacobian logarithm `ln(e^a + e^b)`.
pub fn max_star(a: f64, b: f64) -> f64 {
    max_star_with(correction_table(), a, b)
}

/// Scratch buffers for one constituent BCJR pass.
struct Bcjr {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Branch metrics per step indexed by `2 u + parity`.
    gamma: Vec<[f64; 4]>,
}

impl Bcjr {
    fn new(steps: usize, n_states: usize) -> Self {
        Self {
            alpha: vec![0.0; (steps + 1) * n_states],
            beta: vec![0.0; (steps + 1) * n_states],
            gamma: vec![[0.0; 4]; steps],
        }
    }

    /// Runs Log-MAP over a terminated trellis. `sys`/`par` include the tail
    /// steps, `apriori` covers only the information steps. Writes a-posteriori
    /// LLRs of the information bits into `post`.
    fn run(&mut self, tr: &Trellis, sys: &[f64], par: &[f64], apriori: &[f64], post: &mut [f64]) {
        let c = correction_table();
        let steps = sys.len();
        let k = apriori.len();
        let ns = tr.n_states();
        for (t, g) in self.gamma.iter_mut().enumerate().take(steps) {
            let la = if t < k { apriori[t] } else { 0.0 };
            let xs = 0.5 * (la + sys[t]);
            let xp = 0.5 * par[t];
            *g = [xs + xp, xs - xp, -xs + xp, -xs - xp];
        }
        let gamma = &self.gamma;
        let branch = |t: usize, s: usize, u: usize| gamma[t][2 * u + tr.parity[s][u] as usize];

        let alpha = &mut self.alpha;
        alpha[..ns].fill(f64::NEG_INFINITY);
        alpha[0] = 0.0;
        for t in 0..steps {
            let (cur, nxt) = alpha[t * ns..(t + 2) * ns].split_at_mut(ns);
            nxt.fill(f64::NEG_INFINITY);
            for s in 0..ns {
                let a = cur[s];
                for u in 0..2 {
                    let s2 = tr.next[s][u];
                    nxt[s2] = max_star_with(c, nxt[s2], a + branch(t, s, u));
                }
            }
            let m = nxt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            nxt.iter_mut().for_each(|v| *v -= m);
        }

        let beta = &mut self.beta;
        beta[steps * ns..(steps + 1) * ns].fill(f64::NEG_INFINITY);
        beta[steps * ns] = 0.0;
        for t in (0..steps).rev() {
            let (cur, nxt) = beta[t * ns..(t + 2) * ns].split_at_mut(ns);
            for s in 0..ns {
                cur[s] = max_star_with(
                    c,
                    branch(t, s, 0) + nxt[tr.next[s][0]],
                    branch(t, s, 1) + nxt[tr.next[s][1]],
                );
            }
            let m = cur.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            cur.iter_mut().for_each(|v| *v -= m);
        }

        for t in 0..k {
            let a = &alpha[t * ns..(t + 1) * ns];
            let b = &beta[(t + 1) * ns..(t + 2) * ns];
            let mut l0 = f64::NEG_INFINITY;
            let mut l1 = f64::NEG_INFINITY;
            for s in 0..ns {
                l0 = max_star_with(c, l0, a[s] + branch(t, s, 0) + b[tr.next[s][0]]);
                l1 = max_star_with(c, l1, a[s] + branch(t, s, 1) + b[tr.next[s][1]]);
            }
            post[t] = l0 - l1;
        }
    }
}

/// Iterative Log-MAP turbo decoding of channel LLRs laid out as produced by
/// [`turbo_encode`]. Returns `k` hard decisions.
pub fn turbo_decode(llrs: &[f64], spec: &TurboCodeSpec) -> Result<Vec<u8>> {
    let k = spec.k();
    if llrs.len() != spec.coded_len() {
        return Err(contract(format!(
            "expected {} channel LLRs, got {}",
            spec.coded_len(),
            llrs.len()
        )));
    }
    if let Some(i) = llrs.iter().position(|v| !v.is_finite()) {
        return Err(contract(format!("channel LLR {i} is not finite")));
    }

    let m = spec.memory;
    let pattern = spec.puncture_pattern();
    let mut sys1 = vec![0.0; k + m];
    let mut par1 = vec![0.0; k + m];
    let mut sys2 = vec![0.0; k + m];
    let mut par2 = vec![0.0; k + m];
    let mut pos = 0;
    for i in 0..k {
        sys1[i] = llrs[pos];
        pos += 1;
        let [keep1, keep2] = pattern[i % pattern.len()];
        if keep1 {
            par1[i] = llrs[pos];
            pos += 1;
        }
        if keep2 {
            par2[i] = llrs[pos];
            pos += 1;
        }
    }
    for j in 0..m {
        sys1[k + j] = llrs[pos];
        par1[k + j] = llrs[pos + 1];
        pos += 2;
    }
    for j in 0..m {
        sys2[k + j] = llrs[pos];
        par2[k + j] = llrs[pos + 1];
        pos += 2;
    }
    let perm = &spec.interleaver;
    for i in 0..k {
        sys2[i] = sys1[perm[i]];
    }

    let tr = &spec.trellis;
    let mut bcjr = Bcjr::new(k + m, tr.n_states());
    let mut apriori1 = vec![0.0; k];
    let mut apriori2 = vec![0.0; k];
    let mut post1 = vec![0.0; k];
    let mut post2 = vec![0.0; k];
    let mut decisions = vec![0u8; k];
    let mut previous: Option<Vec<u8>> = None;

    for _ in 0..spec.n_iterations {
        bcjr.run(tr, &sys1, &par1, &apriori1, &mut post1);
        for i in 0..k {
            let p = perm[i];
            apriori2[i] = post1[p] - apriori1[p] - sys1[p];
        }
        bcjr.run(tr, &sys2, &par2, &apriori2, &mut post2);
        for i in 0..k {
            let p = perm[i];
            apriori1[p] = post2[i] - apriori2[i] - sys2[i];
            decisions[p] = u8::from(post2[i] < 0.0);
        }
        if spec.early_stop {
            let agree = decisions
                .iter()
                .zip(&post1)
                .all(|(&d, &l)| d == u8::from(l < 0.0));
            if agree && previous.as_deref() == Some(&decisions[..]) {
                break;
            }
            previous = Some(decisions.clone());
        }
    }
    Ok(decisions)
}
