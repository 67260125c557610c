//! LSTM, Bi-LSTM and GRU sequence classifiers with exact backpropagation
//! through time.
//!
//! All parameters live in one flat vector so optimizers and gradient checks
//! treat every model alike. Per direction the layout is input weights
//! `n_in x gH`, recurrent weights `H x gH`, bias `gH` (gate blocks in the
//! order i, f, g, o for LSTM and z, r, n for GRU), followed by the head
//! `F x C` and its bias `C`, with `F = H` or `2H` for the bidirectional model.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::linalg::{add_col_sums, gemm, gemm_nt, gemm_tn, sigmoid};
use uwoc_core::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RnnKind {
    Lstm,
    BiLstm,
    Gru,
}

impl RnnKind {
    /// Candidate order, which is also the SwitchOpt tie-break order.
    pub const ALL: [RnnKind; 3] = [RnnKind::Lstm, RnnKind::BiLstm, RnnKind::Gru];

    fn gates(self) -> usize {
        match self {
            RnnKind::Lstm | RnnKind::BiLstm => 4,
            RnnKind::Gru => 3,
        }
    }

    pub fn directions(self) -> usize {
        if self == RnnKind::BiLstm {
            2
        } else {
            1
        }
    }

    fn is_lstm(self) -> bool {
        self != RnnKind::Gru
    }
}

impl fmt::Display for RnnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RnnKind::Lstm => "lstm",
            RnnKind::BiLstm => "bilstm",
            RnnKind::Gru => "gru",
        })
    }
}

impl FromStr for RnnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RnnKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| contract(format!("unknown RNN kind '{s}', expected one of: lstm, bilstm, gru")))
    }
}

/// Time-major batch: element `j` of sequence `b` at step `t` is
/// `data[(t * batch + b) * n_in + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequences {
    pub steps: usize,
    pub batch: usize,
    pub n_in: usize,
    pub data: Vec<f64>,
}

impl Sequences {
    pub fn new(steps: usize, batch: usize, n_in: usize, data: Vec<f64>) -> Result<Self> {
        if steps == 0 || batch == 0 || n_in == 0 {
            return Err(contract("sequence dimensions must be positive"));
        }
        if data.len() != steps * batch * n_in {
            return Err(contract(format!(
                "expected {} values for {steps} x {batch} x {n_in}, got {}",
                steps * batch * n_in,
                data.len()
            )));
        }
        Ok(Self { steps, batch, n_in, data })
    }

    /// Shapes flat rows stored channel-major (`row[j * steps + t]`) into a
    /// batch of `steps x n_in` sequences.
    pub fn from_rows(rows: &[&[f64]], steps: usize, n_in: usize) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != steps * n_in) {
            return Err(contract(format!("expected rows of {} values, got {}", steps * n_in, bad.len())));
        }
        let batch = rows.len();
        let mut data = vec![0.0; steps * batch * n_in];
        for (b, row) in rows.iter().enumerate() {
            for j in 0..n_in {
                for t in 0..steps {
                    data[(t * batch + b) * n_in + j] = row[j * steps + t];
                }
            }
        }
        Self::new(steps, batch, n_in, data)
    }

    pub fn step(&self, t: usize) -> &[f64] {
        let w = self.batch * self.n_in;
        &self.data[t * w..(t + 1) * w]
    }

    pub fn reversed(&self) -> Self {
        let w = self.batch * self.n_in;
        let data = (0..self.steps).rev().flat_map(|t| self.data[t * w..(t + 1) * w].iter().copied()).collect();
        Self { data, ..*self }
    }
}

/// Forward activations of one direction, kept for the backward pass.
struct Trace {
    /// Hidden states `h_0..h_T`, each `B x H`.
    h: Vec<f64>,
    /// LSTM cell states `c_0..c_T`; empty for GRU.
    c: Vec<f64>,
    /// Post-activation gates per step, `B x gH`.
    acts: Vec<f64>,
    /// LSTM: `tanh(c_t)`. GRU: the recurrent candidate term `h_{t-1} U_n`.
    aux: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnModel {
    kind: RnnKind,
    n_in: usize,
    n_h: usize,
    n_classes: usize,
    params: Vec<f64>,
}

impl RnnModel {
    /// All-zero parameters.
    pub fn zeros(kind: RnnKind, n_in: usize, n_h: usize, n_classes: usize) -> Result<Self> {
        if n_in == 0 || n_h == 0 {
            return Err(contract("n_in and n_h must be at least 1"));
        }
        if n_classes < 2 {
            return Err(contract(format!("need at least 2 classes, got {n_classes}")));
        }
        let mut m = Self { kind, n_in, n_h, n_classes, params: Vec::new() };
        m.params = vec![0.0; m.n_params()];
        Ok(m)
    }

    /// Uniform initialization in `±1/sqrt(fan)`, with the hidden size as fan
    /// for the cells and the head input width for the head.
    pub fn new(kind: RnnKind, n_in: usize, n_h: usize, n_classes: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(kind, n_in, n_h, n_classes)?;
        let mut rng = rng_from_seed(seed);
        let cell_bound = 1.0 / (n_h as f64).sqrt();
        let head_bound = 1.0 / (m.head_width() as f64).sqrt();
        let head_start = m.head_ranges().0.start;
        for (i, p) in m.params.iter_mut().enumerate() {
            let bound = if i < head_start { cell_bound } else { head_bound };
            *p = rng.random_range(-bound..bound);
        }
        Ok(m)
    }

    pub fn kind(&self) -> RnnKind {
        self.kind
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_hidden(&self) -> usize {
        self.n_h
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.kind.directions() * self.cell_size() + (self.head_width() + 1) * self.n_classes
    }

    fn gh(&self) -> usize {
        self.kind.gates() * self.n_h
    }

    fn cell_size(&self) -> usize {
        (self.n_in + self.n_h + 1) * self.gh()
    }

    fn head_width(&self) -> usize {
        self.kind.directions() * self.n_h
    }

    /// Input weights, recurrent weights and bias of direction `d`.
    fn cell_ranges(&self, d: usize) -> [Range<usize>; 3] {
        let gh = self.gh();
        let s = d * self.cell_size();
        let wx = s..s + self.n_in * gh;
        let wh = wx.end..wx.end + self.n_h * gh;
        let b = wh.end..wh.end + gh;
        [wx, wh, b]
    }

    fn head_ranges(&self) -> (Range<usize>, Range<usize>) {
        let s = self.kind.directions() * self.cell_size();
        let w = s..s + self.head_width() * self.n_classes;
        let b = w.end..w.end + self.n_classes;
        (w, b)
    }

    /// Named parameter blocks, in layout order.
    pub fn param_groups(&self) -> Vec<(String, Range<usize>)> {
        let mut groups = Vec::new();
        for d in 0..self.kind.directions() {
            let dir = if d == 0 { "fwd" } else { "bwd" };
            let [wx, wh, b] = self.cell_ranges(d);
            groups.push((format!("{dir}.input"), wx));
            groups.push((format!("{dir}.recurrent"), wh));
            groups.push((format!("{dir}.bias"), b));
        }
        let (w, b) = self.head_ranges();
        groups.push(("head.weight".into(), w));
        groups.push(("head.bias".into(), b));
        groups
    }

    fn check_input(&self, x: &Sequences) -> Result<()> {
        if x.n_in != self.n_in {
            return Err(contract(format!("model expects {} inputs per step, got {}", self.n_in, x.n_in)));
        }
        Ok(())
    }

    fn cell_forward(&self, d: usize, x: &Sequences) -> Trace {
        let (hn, gh, bsz, steps) = (self.n_h, self.gh(), x.batch, x.steps);
        let [wx, wh, b] = self.cell_ranges(d);
        let (wx, wh, bias) = (&self.params[wx], &self.params[wh], &self.params[b]);
        let bh = bsz * hn;

        // Input projections for every step at once.
        let mut acts = vec![0.0; steps * bsz * gh];
        for row in acts.chunks_exact_mut(gh) {
            row.copy_from_slice(bias);
        }
        gemm(steps * bsz, self.n_in, gh, &x.data, wx, 1.0, &mut acts);

        let mut h = vec![0.0; (steps + 1) * bh];
        let mut aux = vec![0.0; steps * bh];
        if self.kind.is_lstm() {
            let mut c = vec![0.0; (steps + 1) * bh];
            for t in 0..steps {
                let (h_prev, h_next) = h.split_at_mut((t + 1) * bh);
                let h_prev = &h_prev[t * bh..];
                let z = &mut acts[t * bsz * gh..(t + 1) * bsz * gh];
                gemm(bsz, hn, gh, h_prev, wh, 1.0, z);
                let (c_prev, c_next) = c.split_at_mut((t + 1) * bh);
                let c_prev = &c_prev[t * bh..];
                let tc = &mut aux[t * bh..(t + 1) * bh];
                for bi in 0..bsz {
                    let zr = &mut z[bi * gh..(bi + 1) * gh];
                    for j in 0..hn {
                        let i = sigmoid(zr[j]);
                        let f = sigmoid(zr[hn + j]);
                        let g = zr[2 * hn + j].tanh();
                        let o = sigmoid(zr[3 * hn + j]);
                        zr[j] = i;
                        zr[hn + j] = f;
                        zr[2 * hn + j] = g;
                        zr[3 * hn + j] = o;
                        let k = bi * hn + j;
                        let cv = f * c_prev[k] + i * g;
                        c_next[k] = cv;
                        let tcv = cv.tanh();
                        tc[k] = tcv;
                        h_next[k] = o * tcv;
                    }
                }
            }
            Trace { h, c, acts, aux }
        } else {
            let mut zh = vec![0.0; bsz * gh];
            for t in 0..steps {
                let (h_prev, h_next) = h.split_at_mut((t + 1) * bh);
                let h_prev = &h_prev[t * bh..];
                gemm(bsz, hn, gh, h_prev, wh, 0.0, &mut zh);
                let z = &mut acts[t * bsz * gh..(t + 1) * bsz * gh];
                let un = &mut aux[t * bh..(t + 1) * bh];
                for bi in 0..bsz {
                    let zr = &mut z[bi * gh..(bi + 1) * gh];
                    let hr = &zh[bi * gh..(bi + 1) * gh];
                    for j in 0..hn {
                        let u = sigmoid(zr[j] + hr[j]);
                        let r = sigmoid(zr[hn + j] + hr[hn + j]);
                        let hv = hr[2 * hn + j];
                        let n = (zr[2 * hn + j] + r * hv).tanh();
                        zr[j] = u;
                        zr[hn + j] = r;
                        zr[2 * hn + j] = n;
                        let k = bi * hn + j;
                        un[k] = hv;
                        h_next[k] = (1.0 - u) * n + u * h_prev[k];
                    }
                }
            }
            Trace { h, c: Vec::new(), acts, aux }
        }
    }

    /// Accumulates the gradient of direction `d` given `dL/dh_T`.
    fn cell_backward(&self, d: usize, x: &Sequences, tr: &Trace, dh_last: &[f64], grad: &mut [f64]) {
        let (hn, gh, bsz, steps) = (self.n_h, self.gh(), x.batch, x.steps);
        let [rx, rh, rb] = self.cell_ranges(d);
        let wh = &self.params[rh.clone()];
        let bh = bsz * hn;
        let mut dh = dh_last.to_vec();
        // Gate gradients feeding the input weights; GRU needs a second copy
        // for the recurrent weights because the reset gate scales `h U_n`.
        let mut dgx = vec![0.0; steps * bsz * gh];
        let mut dgh = if self.kind.is_lstm() { Vec::new() } else { vec![0.0; steps * bsz * gh] };

        if self.kind.is_lstm() {
            let mut dc = vec![0.0; bh];
            for t in (0..steps).rev() {
                let a = &tr.acts[t * bsz * gh..(t + 1) * bsz * gh];
                let c_prev = &tr.c[t * bh..(t + 1) * bh];
                let tc = &tr.aux[t * bh..(t + 1) * bh];
                let dz = &mut dgx[t * bsz * gh..(t + 1) * bsz * gh];
                for bi in 0..bsz {
                    let ar = &a[bi * gh..(bi + 1) * gh];
                    let dr = &mut dz[bi * gh..(bi + 1) * gh];
                    for j in 0..hn {
                        let k = bi * hn + j;
                        let (i, f, g, o) = (ar[j], ar[hn + j], ar[2 * hn + j], ar[3 * hn + j]);
                        let tcv = tc[k];
                        let dcv = dc[k] + dh[k] * o * (1.0 - tcv * tcv);
                        dr[j] = dcv * g * i * (1.0 - i);
                        dr[hn + j] = dcv * c_prev[k] * f * (1.0 - f);
                        dr[2 * hn + j] = dcv * i * (1.0 - g * g);
                        dr[3 * hn + j] = dh[k] * tcv * o * (1.0 - o);
                        dc[k] = dcv * f;
                    }
                }
                gemm_nt(bsz, gh, hn, dz, wh, 0.0, &mut dh);
            }
            gemm_tn(hn, steps * bsz, gh, &tr.h[..steps * bh], &dgx, &mut grad[rh]);
        } else {
            let mut dh_direct = vec![0.0; bh];
            for t in (0..steps).rev() {
                let a = &tr.acts[t * bsz * gh..(t + 1) * bsz * gh];
                let h_prev = &tr.h[t * bh..(t + 1) * bh];
                let un = &tr.aux[t * bh..(t + 1) * bh];
                let dzx = &mut dgx[t * bsz * gh..(t + 1) * bsz * gh];
                let dzh = &mut dgh[t * bsz * gh..(t + 1) * bsz * gh];
                for bi in 0..bsz {
                    let ar = &a[bi * gh..(bi + 1) * gh];
                    for j in 0..hn {
                        let k = bi * hn + j;
                        let (u, r, n) = (ar[j], ar[hn + j], ar[2 * hn + j]);
                        let dhv = dh[k];
                        let du = dhv * (h_prev[k] - n) * u * (1.0 - u);
                        let dn = dhv * (1.0 - u) * (1.0 - n * n);
                        let dr = dn * un[k] * r * (1.0 - r);
                        let o = bi * gh;
                        dzx[o + j] = du;
                        dzx[o + hn + j] = dr;
                        dzx[o + 2 * hn + j] = dn;
                        dzh[o + j] = du;
                        dzh[o + hn + j] = dr;
                        dzh[o + 2 * hn + j] = dn * r;
                        dh_direct[k] = dhv * u;
                    }
                }
                gemm_nt(bsz, gh, hn, dzh, wh, 1.0, &mut dh_direct);
                std::mem::swap(&mut dh, &mut dh_direct);
            }
            gemm_tn(hn, steps * bsz, gh, &tr.h[..steps * bh], &dgh, &mut grad[rh]);
        }
        gemm_tn(self.n_in, steps * bsz, gh, &x.data, &dgx, &mut grad[rx]);
        add_col_sums(&dgx, gh, &mut grad[rb]);
    }

    fn forward(&self, x: &Sequences) -> Result<(Vec<Trace>, Option<Sequences>, Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let reversed = (self.kind.directions() == 2).then(|| x.reversed());
        let mut traces = vec![self.cell_forward(0, x)];
        if let Some(xr) = &reversed {
            traces.push(self.cell_forward(1, xr));
        }
        let (bsz, hn, fw, nc) = (x.batch, self.n_h, self.head_width(), self.n_classes);
        let last = x.steps * bsz * hn;
        let mut feat = vec![0.0; bsz * fw];
        for (d, tr) in traces.iter().enumerate() {
            for bi in 0..bsz {
                feat[bi * fw + d * hn..bi * fw + (d + 1) * hn]
                    .copy_from_slice(&tr.h[last + bi * hn..last + (bi + 1) * hn]);
            }
        }
        let (rw, rb) = self.head_ranges();
        let mut logits = vec![0.0; bsz * nc];
        for row in logits.chunks_exact_mut(nc) {
            row.copy_from_slice(&self.params[rb.clone()]);
        }
        gemm(bsz, fw, nc, &feat, &self.params[rw], 1.0, &mut logits);
        Ok((traces, reversed, feat, logits))
    }

    /// Raw class scores, `B x C` row-major.
    pub fn logits(&self, x: &Sequences) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.3)
    }

    /// Softmax class probabilities, `B x C` row-major.
    pub fn predict_proba(&self, x: &Sequences) -> Result<Vec<f64>> {
        let mut p = self.logits(x)?;
        for row in p.chunks_exact_mut(self.n_classes) {
            softmax_in_place(row);
        }
        Ok(p)
    }

    pub fn predict(&self, x: &Sequences) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.chunks_exact(self.n_classes).map(argmax).collect())
    }

    fn check_labels(&self, x: &Sequences, labels: &[usize]) -> Result<()> {
        if labels.len() != x.batch {
            return Err(contract(format!("{} labels for a batch of {}", labels.len(), x.batch)));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(contract(format!("label {l} outside 0..{}", self.n_classes)));
        }
        Ok(())
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, x: &Sequences, labels: &[usize]) -> Result<f64> {
        self.check_labels(x, labels)?;
        let logits = self.logits(x)?;
        Ok(cross_entropy(&logits, labels, self.n_classes).0)
    }

    /// Mean cross-entropy and its gradient, written into `grad`.
    pub fn loss_and_grad(&self, x: &Sequences, labels: &[usize], grad: &mut [f64]) -> Result<f64> {
        self.check_labels(x, labels)?;
        if grad.len() != self.params.len() {
            return Err(contract(format!("gradient buffer has {} entries, model {}", grad.len(), self.params.len())));
        }
        let (traces, reversed, feat, logits) = self.forward(x)?;
        let (bsz, hn, fw, nc) = (x.batch, self.n_h, self.head_width(), self.n_classes);
        let (loss, dlogits) = cross_entropy(&logits, labels, nc);

        grad.fill(0.0);
        let (rw, rb) = self.head_ranges();
        gemm_tn(fw, bsz, nc, &feat, &dlogits, &mut grad[rw.clone()]);
        add_col_sums(&dlogits, nc, &mut grad[rb]);
        let mut dfeat = vec![0.0; bsz * fw];
        gemm_nt(bsz, nc, fw, &dlogits, &self.params[rw], 0.0, &mut dfeat);

        for (d, tr) in traces.iter().enumerate() {
            let dh: Vec<f64> = (0..bsz)
                .flat_map(|bi| dfeat[bi * fw + d * hn..bi * fw + (d + 1) * hn].iter().copied())
                .collect();
            let input = if d == 0 { x } else { reversed.as_ref().expect("bidirectional input") };
            self.cell_backward(d, input, tr, &dh, grad);
        }
        Ok(loss)
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy and its gradient with respect to the logits.
fn cross_entropy(logits: &[f64], labels: &[usize], nc: usize) -> (f64, Vec<f64>) {
    let mut grad = logits.to_vec();
    let bsz = labels.len() as f64;
    let mut loss = 0.0;
    for (row, &y) in grad.chunks_exact_mut(nc).zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / bsz;
        }
        row[y] -= 1.0 / bsz;
    }
    (loss / bsz, grad)
}

/// Largest relative discrepancy between analytic and central-difference
/// gradients over `n_checks` parameters spread across every parameter
/// group. Pairs where both magnitudes fall below `1e-8` are skipped.
pub fn grad_check(model: &RnnModel, x: &Sequences, labels: &[usize], n_checks: usize, seed: u64) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let mut analytic = vec![0.0; model.n_params()];
    model.loss_and_grad(x, labels, &mut analytic)?;
    let groups = model.param_groups();
    let mut rng = rng_from_seed(seed);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for n in 0..n_checks {
        let range = &groups[n % groups.len()].1;
        let i = rng.random_range(range.clone());
        let orig = probe.params[i];
        probe.params[i] = orig + STEP;
        let up = probe.loss(x, labels)?;
        probe.params[i] = orig - STEP;
        let down = probe.loss(x, labels)?;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let scale = analytic[i].abs().max(numeric.abs());
        if scale >= 1e-8 {
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    Ok(worst)
}
