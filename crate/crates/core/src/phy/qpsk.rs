//! Gray-mapped QPSK with exact per-bit LLRs.

use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{contract, Result};

/// Maps bit pairs `(b0, b1)` to `((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn qpsk_map(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(contract(format!("QPSK needs an even bit count, got {}", bits.len())));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|b| {
            let re = if b[0] == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if b[1] == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            Complex64::new(re, im)
        })
        .collect())
}

/// Per-bit LLRs for symbols observed in circular complex noise of variance
/// `noise_var[i]`: `2 sqrt(2) Re(y) / var` and `2 sqrt(2) Im(y) / var`.
pub fn qpsk_llr(symbols: &[Complex64], noise_var: &[f64]) -> Result<Vec<f64>> {
    if symbols.len() != noise_var.len() {
        return Err(contract("one noise variance per symbol is required"));
    }
    let mut out = Vec::with_capacity(2 * symbols.len());
    for (y, &nv) in symbols.iter().zip(noise_var) {
        if !(nv > 0.0) {
            return Err(contract(format!("noise variance must be > 0, got {nv}")));
        }
        let scale = 2.0 * std::f64::consts::SQRT_2 / nv;
        out.push(scale * y.re);
        out.push(scale * y.im);
    }
    Ok(out)
}

/// Hard decisions matching [`qpsk_map`].
pub fn qpsk_hard(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|y| [u8::from(y.re < 0.0), u8::from(y.im < 0.0)])
        .collect()
}
