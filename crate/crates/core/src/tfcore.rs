//! Discrete Wigner-Ville distribution and ambiguity function.
//!
//! Conventions used across the crate:
//!
//! - A [`TfMatrix`] is N x N, stored column-major. Row `m` is frequency bin
//!   `m`, which corresponds to `m / (2N)` cycles/sample; column `n` is time.
//!   The lag is integer-valued (`z[n+k] z*[n-k]`), which compresses the
//!   analytic band `[0, 0.5)` onto all N bins.
//! - Samples outside `[0, N)` are zero.
//! - An [`AfMatrix`] is the unitary 2D DFT of a `TfMatrix` (1/N total
//!   scaling), shifted so that the origin sits at `(N/2, N/2)`. Rows are lag
//!   (transform of the frequency axis), columns are Doppler (transform of the
//!   time axis). It is stored column-major.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::siggen::DiscreteSignal;
use crate::{Error, Result, C64};

/// Real N x N time-frequency distribution, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TfMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TfMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_column_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch {
                what: "time-frequency matrix",
                expected: n * n,
                actual: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The vectorized distribution (columns stacked).
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Value at frequency bin `m`, time `t`.
    pub fn get(&self, m: usize, t: usize) -> f64 {
        self.data[m + self.n * t]
    }

    pub fn set(&mut self, m: usize, t: usize, value: f64) {
        self.data[m + self.n * t] = value;
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.data[t * self.n..(t + 1) * self.n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Complex N x N ambiguity function, origin-centered, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AfMatrix {
    n: usize,
    data: Vec<C64>,
}

impl AfMatrix {
    pub fn from_column_major(n: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch {
                what: "ambiguity matrix",
                expected: n * n,
                actual: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    /// Storage index of the origin along either axis.
    pub fn origin_index(&self) -> usize {
        self.n / 2
    }

    /// Entry by storage position (`row` = lag, `col` = Doppler).
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row + self.n * col]
    }

    /// Entry at Doppler offset `nu` and lag offset `tau` from the origin,
    /// wrapping modulo N.
    pub fn at(&self, nu: isize, tau: isize) -> C64 {
        let n = self.n as isize;
        let h = (self.n / 2) as isize;
        let row = (h + tau).rem_euclid(n) as usize;
        let col = (h + nu).rem_euclid(n) as usize;
        self.get(row, col)
    }

    pub fn origin(&self) -> C64 {
        self.at(0, 0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.norm()))
    }
}

/// Storage position of DFT index `f` after origin-centering.
pub fn centered_position(n: usize, f: usize) -> usize {
    (f + n / 2) % n
}

/// DFT index stored at centered position `c`.
pub fn frequency_index(n: usize, c: usize) -> usize {
    (c + n - n / 2) % n
}

pub(crate) struct Plans {
    pub(crate) forward: Arc<dyn Fft<f64>>,
    pub(crate) inverse: Arc<dyn Fft<f64>>,
}

impl Plans {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

/// Unnormalized 2D DFT of a column-major N x N buffer, in place.
pub(crate) fn fft2(plans: &Plans, n: usize, data: &mut [C64], inverse: bool) {
    let fft = if inverse {
        &plans.inverse
    } else {
        &plans.forward
    };
    // columns are contiguous
    fft.process(data);
    let mut row = vec![C64::new(0.0, 0.0); n];
    for r in 0..n {
        for (c, v) in row.iter_mut().enumerate() {
            *v = data[r + n * c];
        }
        fft.process(&mut row);
        for (c, v) in row.iter().enumerate() {
            data[r + n * c] = *v;
        }
    }
}

pub(crate) fn center(n: usize, data: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for q in 0..n {
        let cq = centered_position(n, q);
        for p in 0..n {
            out[centered_position(n, p) + n * cq] = data[p + n * q];
        }
    }
    out
}

pub(crate) fn uncenter(n: usize, data: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for cq in 0..n {
        let q = frequency_index(n, cq);
        for cp in 0..n {
            out[frequency_index(n, cp) + n * q] = data[cp + n * cq];
        }
    }
    out
}

/// Lag range `[-N/2, N - N/2)` used by the instantaneous autocorrelation.
fn lag_range(n: usize) -> std::ops::Range<isize> {
    let h = (n / 2) as isize;
    -h..(n as isize - h)
}

/// `z[n+k] z*[n-k]` with zero outside the support.
fn lag_product(z: &[C64], t: usize, k: isize) -> C64 {
    let len = z.len() as isize;
    let a = t as isize + k;
    let b = t as isize - k;
    if a < 0 || b < 0 || a >= len || b >= len {
        C64::new(0.0, 0.0)
    } else {
        z[a as usize] * z[b as usize].conj()
    }
}

fn warn_if_not_analytic(z: &[C64]) {
    let n = z.len();
    if n < 4 {
        return;
    }
    let mut spec = z.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut spec);
    let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    let negative: f64 = spec[n / 2 + 1..].iter().map(|v| v.norm_sqr()).sum();
    if total > 0.0 && negative > 0.01 * total {
        log::warn!(
            "input is not analytic: {:.1}% of energy in negative-frequency bins",
            100.0 * negative / total
        );
    }
}

/// WVD together with the largest imaginary residue dropped from it.
pub fn wvd_with_residue(z: &DiscreteSignal) -> (TfMatrix, f64) {
    let samples = z.samples();
    let n = samples.len();
    warn_if_not_analytic(samples);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut out = TfMatrix::zeros(n);
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut residue = 0.0f64;
    for t in 0..n {
        for k in lag_range(n) {
            buf[k.rem_euclid(n as isize) as usize] = lag_product(samples, t, k);
        }
        fft.process(&mut buf);
        for (m, v) in buf.iter().enumerate() {
            out.data[m + n * t] = v.re;
            residue = residue.max(v.im.abs());
        }
    }
    (out, residue)
}

/// Discrete Wigner-Ville distribution of an analytic signal.
pub fn wvd(z: &DiscreteSignal) -> TfMatrix {
    wvd_with_residue(z).0
}

/// Centered unitary 2D DFT of a time-frequency matrix.
pub fn af_from_wvd(w: &TfMatrix) -> AfMatrix {
    let n = w.n;
    let plans = Plans::new(n);
    let mut buf: Vec<C64> = w.data.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft2(&plans, n, &mut buf, false);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    AfMatrix {
        n,
        data: center(n, &buf),
    }
}

/// Inverse of [`af_from_wvd`], keeping the real part.
pub fn wvd_from_af(a: &AfMatrix) -> TfMatrix {
    let n = a.n;
    let plans = Plans::new(n);
    let mut buf = uncenter(n, &a.data);
    fft2(&plans, n, &mut buf, true);
    let scale = 1.0 / n as f64;
    TfMatrix {
        n,
        data: buf.iter().map(|v| v.re * scale).collect(),
    }
}

/// Ambiguity function straight from the lag products: one DFT over time per
/// lag, without forming the WVD.
pub fn af_direct(z: &DiscreteSignal) -> AfMatrix {
    let samples = z.samples();
    let n = samples.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut unc = vec![C64::new(0.0, 0.0); n * n];
    let mut row = vec![C64::new(0.0, 0.0); n];
    for k in lag_range(n) {
        for (t, v) in row.iter_mut().enumerate() {
            *v = lag_product(samples, t, k);
        }
        fft.process(&mut row);
        // lag k lands on lag-axis DFT index p = -k mod N
        let p = (-k).rem_euclid(n as isize) as usize;
        for (q, v) in row.iter().enumerate() {
            unc[p + n * q] = *v;
        }
    }
    AfMatrix {
        n,
        data: center(n, &unc),
    }
}
