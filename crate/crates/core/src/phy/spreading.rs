//! Hadamard time-frequency spreading.
//!
//! A spread symbol occupies `N_F` frequency chips on each of `N_T`
//! consecutive data OFDM symbols. The data area (rows = data symbols, 15
//! pair slots per row) is split into `N_T` interleaved streams: stream `j`
//! holds rows `j, j + N_T, j + 2 N_T, ...` flattened row-major. Unit `u`
//! sits at positions `u N_F .. (u + 1) N_F` of every stream, carrying time
//! chip `j` in stream `j`. With `N_T = 1` this is plain row-major packing, so
//! a 16-chip codeword straddles two consecutive symbols' 15-pair grids.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Sylvester Hadamard matrix of order `n` (rows are the codes).
pub fn hadamard(n: usize) -> Result<Vec<Vec<i8>>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(contract(format!("Hadamard order must be a power of two, got {n}")));
    }
    let mut h = vec![vec![1i8]];
    while h.len() < n {
        let m = h.len();
        let mut next = vec![vec![0i8; 2 * m]; 2 * m];
        for i in 0..m {
            for j in 0..m {
                let v = h[i][j];
                next[i][j] = v;
                next[i][j + m] = v;
                next[i + m][j] = v;
                next[i + m][j + m] = -v;
            }
        }
        h = next;
    }
    Ok(h)
}

/// Spreading lengths and the Hadamard rows used as codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpreadingSpec {
    pub nf: usize,
    pub nt: usize,
    pub f_code: usize,
    pub t_code: usize,
}

impl SpreadingSpec {
    /// Non-trivial lengths use Hadamard row 1 (alternating signs).
    pub fn new(nf: usize, nt: usize) -> Self {
        Self {
            nf,
            nt,
            f_code: usize::from(nf > 1),
            t_code: usize::from(nt > 1),
        }
    }

    pub fn gain(&self) -> usize {
        self.nf * self.nt
    }

    /// Frequency and time chip sequences as `f64`.
    pub fn codes(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let hf = hadamard(self.nf)?;
        let ht = hadamard(self.nt)?;
        if self.f_code >= self.nf || self.t_code >= self.nt {
            return Err(contract("code index exceeds the Hadamard order"));
        }
        Ok((
            hf[self.f_code].iter().map(|&c| f64::from(c)).collect(),
            ht[self.t_code].iter().map(|&c| f64::from(c)).collect(),
        ))
    }
}

/// Chips of one symbol, frequency-fastest: index `j * nf + i`.
pub fn spread_symbol(s: Complex64, spec: &SpreadingSpec) -> Result<Vec<Complex64>> {
    let (fc, tc) = spec.codes()?;
    Ok(tc.iter().flat_map(|&t| fc.iter().map(move |&f| s * (f * t))).collect())
}

/// Matched inner product over `nf * nt` chips, normalised by the gain.
pub fn despread_symbol(chips: &[Complex64], spec: &SpreadingSpec) -> Result<Complex64> {
    let (fc, tc) = spec.codes()?;
    if chips.len() != spec.gain() {
        return Err(contract(format!("expected {} chips, got {}", spec.gain(), chips.len())));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &t) in tc.iter().enumerate() {
        for (i, &f) in fc.iter().enumerate() {
            acc += chips[j * spec.nf + i] * (f * t);
        }
    }
    Ok(acc / spec.gain() as f64)
}

/// Mapping of spread units onto a `rows x width` data grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingLayout {
    pub spec: SpreadingSpec,
    pub rows: usize,
    pub width: usize,
    f_chips: Vec<f64>,
    t_chips: Vec<f64>,
}

impl SpreadingLayout {
    pub fn new(spec: SpreadingSpec, rows: usize, width: usize) -> Result<Self> {
        if spec.nt == 0 || rows % spec.nt != 0 {
            return Err(contract(format!("{rows} data rows cannot be split into N_T = {} streams", spec.nt)));
        }
        let (f_chips, t_chips) = spec.codes()?;
        let layout = Self { spec, rows, width, f_chips, t_chips };
        if layout.capacity() == 0 {
            return Err(contract("spreading leaves no room for a single symbol"));
        }
        Ok(layout)
    }

    /// Symbols per frame after spreading.
    pub fn capacity(&self) -> usize {
        (self.rows / self.spec.nt) * self.width / self.spec.nf
    }

    /// Grid slot `(row, col)` of chip `(i, j)` of unit `u`.
    #[inline]
    pub fn slot(&self, u: usize, i: usize, j: usize) -> (usize, usize) {
        let p = u * self.spec.nf + i;
        ((p / self.width) * self.spec.nt + j, p % self.width)
    }

    fn check_grid<T>(&self, grid: &[Vec<T>]) -> Result<()> {
        if grid.len() != self.rows || grid.iter().any(|r| r.len() != self.width) {
            return Err(contract(format!("grid must be {} x {}", self.rows, self.width)));
        }
        Ok(())
    }

    /// Spreads exactly `capacity()` symbols; unused slots stay zero.
    pub fn spread(&self, symbols: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        if symbols.len() != self.capacity() {
            return Err(contract(format!(
                "spreading with N_F = {}, N_T = {} takes {} symbols per frame, got {}",
                self.spec.nf,
                self.spec.nt,
                self.capacity(),
                symbols.len()
            )));
        }
        let mut grid = vec![vec![Complex64::new(0.0, 0.0); self.width]; self.rows];
        for (u, &s) in symbols.iter().enumerate() {
            for (j, &t) in self.t_chips.iter().enumerate() {
                for (i, &f) in self.f_chips.iter().enumerate() {
                    let (r, c) = self.slot(u, i, j);
                    grid[r][c] = s * (f * t);
                }
            }
        }
        Ok(grid)
    }

    pub fn despread(&self, grid: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
        self.check_grid(grid)?;
        let g = self.spec.gain() as f64;
        Ok((0..self.capacity())
            .map(|u| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &t) in self.t_chips.iter().enumerate() {
                    for (i, &f) in self.f_chips.iter().enumerate() {
                        let (r, c) = self.slot(u, i, j);
                        acc += grid[r][c] * (f * t);
                    }
                }
                acc / g
            })
            .collect())
    }

    /// Despreads equalized chips and propagates their noise variances:
    /// the symbol variance is `sum(var) / gain²`.
    pub fn despread_with_variance(
        &self,
        grid: &[Vec<Complex64>],
        var: &[Vec<f64>],
    ) -> Result<(Vec<Complex64>, Vec<f64>)> {
        self.check_grid(var)?;
        let symbols = self.despread(grid)?;
        let g = self.spec.gain() as f64;
        let vars = (0..self.capacity())
            .map(|u| {
                let mut acc = 0.0;
                for j in 0..self.spec.nt {
                    for i in 0..self.spec.nf {
                        let (r, c) = self.slot(u, i, j);
                        acc += var[r][c];
                    }
                }
                acc / (g * g)
            })
            .collect();
        Ok((symbols, vars))
    }
}
