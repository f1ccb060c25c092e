//! Compressive measurement of a distribution through a centered rectangle of
//! its ambiguity function.
//!
//! `forward` maps a real, column-major distribution `omega` (length N^2) to the
//! `d_tau x d_nu` block of its centered unitary 2D DFT, vectorized
//! column-major (lag index fastest). `adjoint` is the exact adjoint of
//! `forward` restricted to real inputs under the pairing `Re <a, b>`, i.e. the
//! real part of the conjugate transpose.
//!
//! The matrix-free path never forms the M x N^2 matrix: every column goes
//! through an FFT along frequency (two real columns packed per complex
//! transform), and only the retained lag rows are transformed along time.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::tfcore::{self, centered_position, frequency_index, AfMatrix, Plans};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Centered `d_nu x d_tau` sampling rectangle in the ambiguity domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskSpec {
    pub d_nu: usize,
    pub d_tau: usize,
}

impl MaskSpec {
    /// Geometry used by the unrolled network.
    pub const WIDE: MaskSpec = MaskSpec::square(29);
    /// Geometry of the `l1app` baseline.
    pub const NARROW: MaskSpec = MaskSpec::square(13);

    pub const fn new(d_nu: usize, d_tau: usize) -> Self {
        Self { d_nu, d_tau }
    }

    pub const fn square(d: usize) -> Self {
        Self { d_nu: d, d_tau: d }
    }

    /// Number of measurements M.
    pub fn len(&self) -> usize {
        self.d_nu * self.d_tau
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let err = |reason| Error::InvalidMask {
            d_nu: self.d_nu,
            d_tau: self.d_tau,
            n,
            reason,
        };
        if self.d_nu == 0 || self.d_tau == 0 {
            return Err(err("extents must be at least 1"));
        }
        if self.d_nu.is_multiple_of(2) || self.d_tau.is_multiple_of(2) {
            return Err(err("extents must be odd"));
        }
        if self.d_nu > n || self.d_tau > n {
            return Err(err("mask larger than grid"));
        }
        Ok(())
    }

    /// DFT indices covered along an axis of extent `d` on an N grid.
    fn axis_bins(n: usize, d: usize) -> Vec<usize> {
        let first = n / 2 - (d - 1) / 2;
        (first..first + d).map(|c| frequency_index(n, c)).collect()
    }

    /// First centered storage position of the block along each axis
    /// `(lag, Doppler)`.
    pub fn block_origin(&self, n: usize) -> (usize, usize) {
        (n / 2 - (self.d_tau - 1) / 2, n / 2 - (self.d_nu - 1) / 2)
    }
}

impl fmt::Display for MaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.d_nu, self.d_tau)
    }
}

impl FromStr for MaskSpec {
    type Err = String;

    /// Parses `DxD` (Doppler x lag) or a single odd integer.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad mask extent `{v}`: {e}"))
        };
        match s.split_once(['x', 'X']) {
            Some((a, b)) => Ok(MaskSpec::new(parse(a)?, parse(b)?)),
            None => Ok(MaskSpec::square(parse(s)?)),
        }
    }
}

/// Linear map from a real vectorized distribution to complex measurements.
pub trait SensingOperator: Send + Sync {
    /// Grid size N.
    fn grid(&self) -> usize;

    /// Number of measurements M.
    fn measurements(&self) -> usize;

    fn forward(&self, omega: &[f64]) -> Result<Vec<C64>>;

    fn adjoint(&self, y: &[C64]) -> Result<Vec<f64>>;
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Extract the centered mask block of an ambiguity function.
pub fn apply_mask(af: &AfMatrix, mask: MaskSpec) -> Result<Vec<C64>> {
    let n = af.n();
    mask.validate(n)?;
    let (r0, c0) = mask.block_origin(n);
    let mut out = Vec::with_capacity(mask.len());
    for j in 0..mask.d_nu {
        for i in 0..mask.d_tau {
            out.push(af.get(r0 + i, c0 + j));
        }
    }
    Ok(out)
}

/// Per-thread buffers reused across operator calls.
#[derive(Default)]
struct Workspace {
    cols: Vec<C64>,
    rows: Vec<C64>,
    scratch: Vec<C64>,
}

thread_local! {
    static WORKSPACE: RefCell<Workspace> = RefCell::new(Workspace::default());
}

fn resize(buf: &mut Vec<C64>, len: usize) {
    if buf.len() != len {
        buf.resize(len, ZERO);
    }
}

/// Matrix-free masked unitary 2D DFT. Immutable after construction.
#[derive(Clone)]
pub struct MeasurementOp {
    n: usize,
    mask: MaskSpec,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// DFT index along the lag axis for each mask row.
    tau_bins: Vec<usize>,
    /// DFT index along the Doppler axis for each mask column.
    nu_bins: Vec<usize>,
}

impl fmt::Debug for MeasurementOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasurementOp")
            .field("n", &self.n)
            .field("mask", &self.mask)
            .finish()
    }
}

impl MeasurementOp {
    pub fn new(n: usize, mask: MaskSpec) -> Result<Self> {
        mask.validate(n)?;
        let mut planner = FftPlanner::new();
        let tau_bins = MaskSpec::axis_bins(n, mask.d_tau);
        let nu_bins = MaskSpec::axis_bins(n, mask.d_nu);
        Ok(Self {
            n,
            mask,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            tau_bins,
            nu_bins,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> MaskSpec {
        self.mask
    }

    /// `forward` on a complex input, via full 2D FFTs (no real restriction).
    pub fn forward_complex(&self, x: &[C64]) -> Result<Vec<C64>> {
        let n = self.n;
        check_len("forward input", n * n, x.len())?;
        let plans = Plans::new(n);
        let mut buf = x.to_vec();
        tfcore::fft2(&plans, n, &mut buf, false);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        let af = AfMatrix::from_column_major(n, tfcore::center(n, &buf))?;
        apply_mask(&af, self.mask)
    }

    /// Conjugate transpose without the real-part projection.
    pub fn adjoint_complex(&self, y: &[C64]) -> Result<Vec<C64>> {
        let n = self.n;
        check_len("adjoint input", self.mask.len(), y.len())?;
        let mut grid = vec![ZERO; n * n];
        let (r0, c0) = self.mask.block_origin(n);
        for j in 0..self.mask.d_nu {
            for i in 0..self.mask.d_tau {
                grid[(r0 + i) + n * (c0 + j)] = y[i + self.mask.d_tau * j];
            }
        }
        let mut buf = tfcore::uncenter(n, &grid);
        tfcore::fft2(&Plans::new(n), n, &mut buf, true);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        Ok(buf)
    }

    /// Index of the measurement at the mirrored position `(-nu, -tau)`.
    pub fn mirror_index(&self, k: usize) -> usize {
        let (i, j) = (k % self.mask.d_tau, k / self.mask.d_tau);
        (self.mask.d_tau - 1 - i) + self.mask.d_tau * (self.mask.d_nu - 1 - j)
    }

    /// Projection onto measurement vectors that real inputs can produce:
    /// `(y + conj(y_mirror)) / 2`. Equals `forward(adjoint(y))`.
    pub fn symmetrize(&self, y: &[C64]) -> Vec<C64> {
        (0..y.len())
            .map(|k| (y[k] + y[self.mirror_index(k)].conj()) * 0.5)
            .collect()
    }
}

impl SensingOperator for MeasurementOp {
    fn grid(&self) -> usize {
        self.n
    }

    fn measurements(&self) -> usize {
        self.mask.len()
    }

    fn forward(&self, omega: &[f64]) -> Result<Vec<C64>> {
        let n = self.n;
        check_len("forward input", n * n, omega.len())?;
        let d_tau = self.mask.d_tau;
        let d_nu = self.mask.d_nu;

        WORKSPACE.with_borrow_mut(|ws| {
            let Workspace {
                cols,
                rows,
                scratch,
            } = ws;
            // Stage 1: DFT down each column, keeping only the masked lag bins.
            // Columns t and t+1 share one transform as real and imaginary parts.
            resize(cols, n.div_ceil(2) * n);
            resize(rows, d_tau * n);
            resize(scratch, self.fft.get_inplace_scratch_len());
            for (b, buf) in cols.chunks_exact_mut(n).enumerate() {
                let t = 2 * b;
                let a = &omega[n * t..n * (t + 1)];
                if t + 1 < n {
                    let c = &omega[n * (t + 1)..n * (t + 2)];
                    for ((v, &re), &im) in buf.iter_mut().zip(a).zip(c) {
                        *v = C64::new(re, im);
                    }
                } else {
                    for (v, &re) in buf.iter_mut().zip(a) {
                        *v = C64::new(re, 0.0);
                    }
                }
            }
            self.fft.process_with_scratch(cols, scratch);
            for (b, buf) in cols.chunks_exact(n).enumerate() {
                let t = 2 * b;
                for (i, &p) in self.tau_bins.iter().enumerate() {
                    let z = buf[p];
                    let zc = buf[(n - p) % n].conj();
                    rows[i * n + t] = (z + zc) * 0.5;
                    if t + 1 < n {
                        rows[i * n + t + 1] = (z - zc) * C64::new(0.0, -0.5);
                    }
                }
            }

            // Stage 2: FFT along time for each retained lag row, keeping the
            // masked Doppler bins.
            self.fft.process_with_scratch(rows, scratch);
            let scale = 1.0 / n as f64;
            let mut out = vec![ZERO; d_tau * d_nu];
            for (i, row) in rows.chunks_exact(n).enumerate() {
                for (j, &q) in self.nu_bins.iter().enumerate() {
                    out[i + d_tau * j] = row[q] * scale;
                }
            }
            Ok(out)
        })
    }

    fn adjoint(&self, y: &[C64]) -> Result<Vec<f64>> {
        let n = self.n;
        let d_tau = self.mask.d_tau;
        let d_nu = self.mask.d_nu;
        check_len("adjoint input", d_tau * d_nu, y.len())?;

        WORKSPACE.with_borrow_mut(|ws| {
            let Workspace {
                cols,
                rows,
                scratch,
            } = ws;
            // Stage 1: inverse FFT along Doppler for each retained lag row.
            let scale = 1.0 / n as f64;
            resize(rows, d_tau * n);
            rows.fill(ZERO);
            for (i, row) in rows.chunks_exact_mut(n).enumerate() {
                for (j, &q) in self.nu_bins.iter().enumerate() {
                    row[q] = y[i + d_tau * j] * scale;
                }
            }
            resize(scratch, self.ifft.get_inplace_scratch_len());
            self.ifft.process_with_scratch(rows, scratch);

            // Stage 2: inverse FFT down each column; the Hermitian part of each
            // spectrum yields the real part, so two columns share one transform.
            resize(cols, n.div_ceil(2) * n);
            cols.fill(ZERO);
            let j_half = C64::new(0.0, 0.5);
            for (b, buf) in cols.chunks_exact_mut(n).enumerate() {
                let t = 2 * b;
                for (i, &p) in self.tau_bins.iter().enumerate() {
                    let sa = rows[i * n + t];
                    let sb = if t + 1 < n { rows[i * n + t + 1] } else { ZERO };
                    buf[p] += sa * 0.5 + sb * j_half;
                    buf[(n - p) % n] += sa.conj() * 0.5 + sb.conj() * j_half;
                }
            }
            self.ifft.process_with_scratch(cols, scratch);
            let mut out = Vec::with_capacity(n * n);
            for (b, buf) in cols.chunks_exact(n).enumerate() {
                out.extend(buf.iter().map(|v| v.re));
                if 2 * b + 1 < n {
                    out.extend(buf.iter().map(|v| v.im));
                }
            }
            Ok(out)
        })
    }
}

/// Explicit masked Kronecker operator, for testing at small N.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    n: usize,
    rows: usize,
    /// Row-major M x N^2.
    matrix: Vec<C64>,
}

pub const DENSE_ORACLE_MAX_N: usize = 16;

/// Build the masked `D (x) D` matrix with unitary DFT factors. Rows follow the
/// same centering and column-major ordering as [`MeasurementOp`].
pub fn dense_oracle(n: usize, mask: MaskSpec) -> Result<DenseOperator> {
    if n > DENSE_ORACLE_MAX_N {
        return Err(Error::OracleTooLarge {
            n,
            max: DENSE_ORACLE_MAX_N,
        });
    }
    mask.validate(n)?;
    let norm = 1.0 / (n as f64).sqrt();
    let dft: Vec<C64> = (0..n * n)
        .map(|idx| {
            let (r, c) = (idx / n, idx % n);
            C64::from_polar(norm, -2.0 * PI * ((r * c) % n) as f64 / n as f64)
        })
        .collect();
    let n2 = n * n;
    // Kronecker product: (D (x) D)[p + n q, m + n t] = D[q, t] D[p, m]
    let mut kron = vec![ZERO; n2 * n2];
    for q in 0..n {
        for t in 0..n {
            let outer = dft[q * n + t];
            for p in 0..n {
                for m in 0..n {
                    kron[(p + n * q) * n2 + (m + n * t)] = outer * dft[p * n + m];
                }
            }
        }
    }
    let (r0, c0) = mask.block_origin(n);
    let mut matrix = Vec::with_capacity(mask.len() * n2);
    for j in 0..mask.d_nu {
        let q = frequency_index(n, c0 + j);
        for i in 0..mask.d_tau {
            let p = frequency_index(n, r0 + i);
            debug_assert_eq!(centered_position(n, p), r0 + i);
            let row = p + n * q;
            matrix.extend_from_slice(&kron[row * n2..(row + 1) * n2]);
        }
    }
    Ok(DenseOperator {
        n,
        rows: mask.len(),
        matrix,
    })
}

impl DenseOperator {
    /// Row-major M x N^2 entries.
    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }

    pub fn row(&self, r: usize) -> &[C64] {
        let n2 = self.n * self.n;
        &self.matrix[r * n2..(r + 1) * n2]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl SensingOperator for DenseOperator {
    fn grid(&self) -> usize {
        self.n
    }

    fn measurements(&self) -> usize {
        self.rows
    }

    fn forward(&self, omega: &[f64]) -> Result<Vec<C64>> {
        check_len("forward input", self.n * self.n, omega.len())?;
        Ok((0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(omega)
                    .fold(ZERO, |acc, (a, &w)| acc + a * w)
            })
            .collect())
    }

    fn adjoint(&self, y: &[C64]) -> Result<Vec<f64>> {
        check_len("adjoint input", self.rows, y.len())?;
        let mut out = vec![0.0; self.n * self.n];
        for (r, yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += (a.conj() * yr).re;
            }
        }
        Ok(out)
    }
}

/// `Re sum conj(a) b`, the real inner product on complex vectors.
pub fn real_inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Largest eigenvalue of `adjoint . forward` by power iteration from a
/// seeded Gaussian start.
pub fn largest_eigenvalue<O: SensingOperator + ?Sized>(
    op: &O,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    let n2 = op.grid() * op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n2).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut estimate = 0.0;
    for _ in 0..iters {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let y = op.adjoint(&op.forward(&x)?)?;
        estimate = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        x = y;
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_real(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn random_complex(len: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
        (0..len)
            .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect()
    }

    #[test]
    fn mask_validation() {
        assert!(MaskSpec::square(29).validate(128).is_ok());
        assert!(MaskSpec::square(4).validate(128).is_err());
        assert!(MaskSpec::square(0).validate(128).is_err());
        assert!(MaskSpec::square(17).validate(16).is_err());
        assert!(MeasurementOp::new(8, MaskSpec::square(9)).is_err());
        assert_eq!(MaskSpec::WIDE.len(), 841);
        assert_eq!(MaskSpec::NARROW.len(), 169);
    }

    #[test]
    fn mask_parsing() {
        assert_eq!("29x29".parse::<MaskSpec>().unwrap(), MaskSpec::square(29));
        assert_eq!("13".parse::<MaskSpec>().unwrap(), MaskSpec::square(13));
        assert_eq!("5X3".parse::<MaskSpec>().unwrap(), MaskSpec::new(5, 3));
        assert!("ax3".parse::<MaskSpec>().is_err());
    }

    #[test]
    fn unit_mask_is_dc_row() {
        let oracle = dense_oracle(4, MaskSpec::square(1)).unwrap();
        assert_eq!(oracle.rows(), 1);
        for v in oracle.row(0) {
            assert!((v - C64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn oracle_guard() {
        assert!(matches!(
            dense_oracle(32, MaskSpec::square(3)),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn matches_dense_oracle_small_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, mask) in [
            (8, MaskSpec::new(3, 5)),
            (6, MaskSpec::new(5, 1)),
            (5, MaskSpec::square(3)),
        ] {
            let op = MeasurementOp::new(n, mask).unwrap();
            let dense = dense_oracle(n, mask).unwrap();
            for _ in 0..10 {
                let w = random_real(n * n, &mut rng);
                let a = op.forward(&w).unwrap();
                let b = dense.forward(&w).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).norm() < 1e-12, "n={n} mask={mask}");
                }
                let y = random_complex(mask.len(), &mut rng);
                let u = op.adjoint(&y).unwrap();
                let v = dense.adjoint(&y).unwrap();
                for (x, y) in u.iter().zip(&v) {
                    assert!((x - y).abs() < 1e-12, "n={n} mask={mask}");
                }
            }
        }
    }

    #[test]
    fn forward_of_adjoint_symmetrizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = MeasurementOp::new(16, MaskSpec::new(5, 7)).unwrap();
        let y = random_complex(35, &mut rng);
        let back = op.forward(&op.adjoint(&y).unwrap()).unwrap();
        for (a, b) in back.iter().zip(op.symmetrize(&y)) {
            assert!((a - b).norm() < 1e-12);
        }
        let exact = op
            .forward_complex(&op.adjoint_complex(&y).unwrap())
            .unwrap();
        for (a, b) in exact.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_reported() {
        let op = MeasurementOp::new(8, MaskSpec::square(3)).unwrap();
        assert!(matches!(
            op.forward(&[0.0; 10]),
            Err(Error::LengthMismatch {
                expected: 64,
                actual: 10,
                ..
            })
        ));
        assert!(op.adjoint(&[ZERO; 8]).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let op = MeasurementOp::new(16, MaskSpec::square(5)).unwrap();
        assert!(op.forward(&[0.0; 256]).unwrap().iter().all(|v| *v == ZERO));
        assert!(op.adjoint(&[ZERO; 25]).unwrap().iter().all(|v| *v == 0.0));
    }
}
