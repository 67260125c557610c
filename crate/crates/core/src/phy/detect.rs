//! LS channel estimation, MRC combining and scalar equalization.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// `H = Y / X` per pair.
pub fn estimate_channel_ls(rx_pilot: &[Complex64], pilot: &[Complex64]) -> Result<Vec<Complex64>> {
    if rx_pilot.len() != pilot.len() {
        return Err(contract("pilot length mismatch"));
    }
    if pilot.iter().any(|p| p.norm_sqr() == 0.0) {
        return Err(contract("pilot contains a zero bin"));
    }
    Ok(rx_pilot.iter().zip(pilot).map(|(y, x)| y / x).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectMode {
    #[default]
    Mmse,
    Zf,
}

impl std::str::FromStr for DetectMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmse" => Ok(Self::Mmse),
            "zf" => Ok(Self::Zf),
            other => Err(contract(format!("unknown detector '{other}', expected one of: mmse, zf"))),
        }
    }
}

/// Equalized symbols with the noise variance to use for their LLRs.
/// Erased symbols carry an infinite variance, which yields zero LLRs.
#[derive(Debug, Clone, PartialEq)]
pub struct Detected {
    pub symbols: Vec<Complex64>,
    pub noise_var: Vec<f64>,
}

/// Running MRC statistic `z = sum conj(H) Y`, `G = sum |H|²`.
///
/// With a nonzero `est_var` the channel estimates are treated as noisy
/// (`H_hat = H + e`, `var(e) = est_var`): the useful gain becomes
/// `G0 = G - n est_var` and the statistic's noise `nv G + est_var G0`.
/// With `est_var = 0` this is plain ZF/MMSE.
#[derive(Debug, Clone)]
pub struct MrcCombiner {
    z: Vec<Complex64>,
    g: Vec<f64>,
    n_branches: usize,
}

impl MrcCombiner {
    pub fn new(len: usize) -> Self {
        Self { z: vec![Complex64::new(0.0, 0.0); len], g: vec![0.0; len], n_branches: 0 }
    }

    pub fn reset(&mut self) {
        self.z.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        self.g.iter_mut().for_each(|g| *g = 0.0);
        self.n_branches = 0;
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Adds one detector over the full length.
    pub fn accumulate(&mut self, y: &[Complex64], h: &[Complex64]) {
        self.accumulate_at(0, y, h);
        self.n_branches += 1;
    }

    /// Adds a slice of one detector starting at `offset`; call
    /// [`MrcCombiner::end_branch`] once the detector is complete.
    #[inline]
    pub fn accumulate_at(&mut self, offset: usize, y: &[Complex64], h: &[Complex64]) {
        let z = &mut self.z[offset..offset + y.len()];
        let g = &mut self.g[offset..offset + y.len()];
        for ((z, g), (y, h)) in z.iter_mut().zip(g.iter_mut()).zip(y.iter().zip(h)) {
            *z += h.conj() * y;
            *g += h.norm_sqr();
        }
    }

    pub fn end_branch(&mut self) {
        self.n_branches += 1;
    }

    /// ZF: `z / G` with variance `nv / G`. MMSE: `z / (G + nv)` with
    /// variance `nv / (G + nv)`. Both yield LLRs `2 sqrt(2) z / nv`.
    pub fn finish(&self, noise_var: f64, mode: DetectMode) -> Result<Detected> {
        self.finish_with_estimation_error(noise_var, 0.0, mode)
    }

    /// Equalizes every position as in [`MrcCombiner::finish`] but scales the
    /// reported variances so that LLRs equal `2 sqrt(2) z G0 / V`, with
    /// `G0 = mean(G) - n est_var` and `V = nv mean(G) + est_var G0` taken
    /// over the whole block. A per-position `G0` is far too noisy at low SNR.
    pub fn finish_with_estimation_error(&self, noise_var: f64, est_var: f64, mode: DetectMode) -> Result<Detected> {
        if !(noise_var >= 0.0) || !(est_var >= 0.0) {
            return Err(contract("noise variances must be nonnegative"));
        }
        if let DetectMode::Mmse = mode {
            if !(noise_var > 0.0) {
                return Err(contract(format!("MMSE needs noise_var > 0, got {noise_var}")));
            }
        }
        // LLR = 2 sqrt(2) Re(z) * scale
        let scale = if est_var > 0.0 {
            let g_mean = self.g.iter().sum::<f64>() / self.len().max(1) as f64;
            let g0 = g_mean - self.n_branches as f64 * est_var;
            if g0 > 0.0 {
                g0 / (noise_var * g_mean + est_var * g0)
            } else {
                0.0
            }
        } else {
            1.0 / noise_var
        };
        let mut symbols = Vec::with_capacity(self.len());
        let mut var = Vec::with_capacity(self.len());
        for (&z, &g) in self.z.iter().zip(&self.g) {
            let den = match mode {
                DetectMode::Zf => g,
                DetectMode::Mmse => g + noise_var,
            };
            if den > 0.0 && scale > 0.0 {
                symbols.push(z / den);
                var.push(1.0 / (scale * den));
            } else {
                symbols.push(Complex64::new(0.0, 0.0));
                var.push(f64::INFINITY);
            }
        }
        Ok(Detected { symbols, noise_var: var })
    }
}

/// MRC plus equalization over all detectors at once: `rx[d][k]`, `h[d][k]`.
pub fn detect(rx: &[Vec<Complex64>], h: &[Vec<Complex64>], noise_var: f64, mode: DetectMode) -> Result<Detected> {
    if rx.len() != h.len() || rx.is_empty() {
        return Err(contract("detector count mismatch"));
    }
    let len = rx[0].len();
    let mut mrc = MrcCombiner::new(len);
    for (y, hh) in rx.iter().zip(h) {
        if y.len() != len || hh.len() != len {
            return Err(contract("per-detector lengths disagree"));
        }
        mrc.accumulate(y, hh);
    }
    mrc.finish(noise_var, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cn(rng: &mut impl Rng, var: f64) -> Complex64 {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        Complex64::new(a, b) * (var / 2.0).sqrt()
    }

    #[test]
    fn ls_flat_gain() {
        let pilot: Vec<Complex64> = (0..15).map(|k| Complex64::from_polar(1.0, 0.4 * k as f64)).collect();
        let y: Vec<Complex64> = pilot.iter().map(|p| p * 0.37).collect();
        for h in estimate_channel_ls(&y, &pilot).unwrap() {
            assert!((h - Complex64::new(0.37, 0.0)).norm() < 1e-12);
        }
        let mut bad = pilot.clone();
        bad[3] = Complex64::new(0.0, 0.0);
        assert!(estimate_channel_ls(&y, &bad).is_err());
    }

    #[test]
    fn ls_error_variance_is_inverse_snr() {
        let mut rng = rng_from_seed(5);
        let snr = 3.0;
        let pilot = Complex64::from_polar(1.0, 0.7);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let y = pilot * 0.8 + cn(&mut rng, 1.0 / snr);
            let h = estimate_channel_ls(&[y], &[pilot]).unwrap()[0];
            acc += (h - 0.8).norm_sqr();
        }
        let v = acc / n as f64;
        assert!((v * snr - 1.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn identity_channel() {
        let x = vec![Complex64::new(0.3, -0.2), Complex64::new(-1.0, 0.5)];
        let h = vec![Complex64::new(1.0, 0.0); 2];
        for mode in [DetectMode::Zf, DetectMode::Mmse] {
            let d = detect(std::slice::from_ref(&x), std::slice::from_ref(&h), 1e-30, mode).unwrap();
            for (a, b) in d.symbols.iter().zip(&x) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mmse_approaches_zf() {
        let mut rng = rng_from_seed(8);
        let rx: Vec<Vec<Complex64>> = (0..4).map(|_| (0..15).map(|_| cn(&mut rng, 1.0)).collect()).collect();
        let h: Vec<Vec<Complex64>> = (0..4).map(|_| (0..15).map(|_| cn(&mut rng, 1.0)).collect()).collect();
        let zf = detect(&rx, &h, 1e-12, DetectMode::Zf).unwrap();
        let mm = detect(&rx, &h, 1e-12, DetectMode::Mmse).unwrap();
        for (a, b) in zf.symbols.iter().zip(&mm.symbols) {
            assert!((a - b).norm() <= 1e-6 * a.norm());
        }
    }

    #[test]
    fn zero_gain_is_erased_under_zf() {
        let d = detect(&[vec![Complex64::new(1.0, 1.0)]], &[vec![Complex64::new(0.0, 0.0)]], 0.1, DetectMode::Zf).unwrap();
        assert_eq!(d.symbols[0], Complex64::new(0.0, 0.0));
        assert!(d.noise_var[0].is_infinite());
        assert!(detect(&[vec![Complex64::new(1.0, 0.0)]], &[vec![Complex64::new(1.0, 0.0)]], 0.0, DetectMode::Mmse).is_err());
    }

    #[test]
    fn estimation_error_aware_llrs_are_calibrated() {
        // A calibrated Gaussian LLR has mean equal to half its variance.
        let mut rng = rng_from_seed(31);
        let (nv, n_rx, len, trials) = (4.0, 100, 200, 40);
        let x = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
        let mut llrs = Vec::new();
        for _ in 0..trials {
            let mut mrc = MrcCombiner::new(len);
            for _ in 0..n_rx {
                let h = Complex64::new(rng.random_range(0.2..1.2), 0.0);
                let y: Vec<Complex64> = (0..len).map(|_| h * x + cn(&mut rng, nv)).collect();
                let hh: Vec<Complex64> = (0..len).map(|_| h + cn(&mut rng, nv)).collect();
                mrc.accumulate(&y, &hh);
            }
            let d = mrc.finish_with_estimation_error(nv, nv, DetectMode::Mmse).unwrap();
            for (s, v) in d.symbols.iter().zip(&d.noise_var) {
                llrs.push(2.0 * std::f64::consts::SQRT_2 * s.re / v);
            }
        }
        let m = llrs.iter().sum::<f64>() / llrs.len() as f64;
        let v = llrs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / llrs.len() as f64;
        assert!((m / (v / 2.0) - 1.0).abs() < 0.1, "mean {m} var {v}");
    }

    #[test]
    fn array_gain_of_hundred_detectors() {
        let mut rng = rng_from_seed(12);
        let nv = 1.0;
        let trials = 20_000;
        let (mut e1, mut e100) = (0.0, 0.0);
        let x = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);
        let h = vec![vec![Complex64::new(1.0, 0.0)]; 100];
        for _ in 0..trials {
            let rx: Vec<Vec<Complex64>> = (0..100).map(|_| vec![x + cn(&mut rng, nv)]).collect();
            e1 += (rx[0][0] - x).norm_sqr();
            let d = detect(&rx, &h, nv, DetectMode::Zf).unwrap();
            e100 += (d.symbols[0] - x).norm_sqr();
        }
        let gain_db = 10.0 * (e1 / e100).log10();
        assert!((gain_db - 20.0).abs() < 0.5, "{gain_db}");
    }
}
