//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the transform or operator code under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfrecon::{DiscreteSignal, MaskSpec, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tone(n: usize, f0: f64) -> DiscreteSignal {
    DiscreteSignal::new(
        (0..n)
            .map(|t| C64::from_polar(1.0, 2.0 * PI * f0 * t as f64))
            .collect(),
    )
}

pub fn random_signal(n: usize, rng: &mut ChaCha8Rng) -> DiscreteSignal {
    DiscreteSignal::new(
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    )
}

pub fn random_real(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_complex(len: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..len)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Textbook double sum: `W[m,n] = sum_k z[n+k] z*[n-k] e^{-2 pi i k m / N}`,
/// lags `-N/2..N/2`, zero outside the record. Returns (real part, imaginary
/// part), both column-major.
pub fn naive_wvd(z: &[C64]) -> (Vec<f64>, Vec<f64>) {
    let n = z.len() as isize;
    let mut re = vec![0.0; (n * n) as usize];
    let mut im = vec![0.0; (n * n) as usize];
    for t in 0..n {
        for m in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in -n / 2..n - n / 2 {
                let (a, b) = (t + k, t - k);
                if a < 0 || b < 0 || a >= n || b >= n {
                    continue;
                }
                let phase = -2.0 * PI * (k * m) as f64 / n as f64;
                acc += z[a as usize] * z[b as usize].conj() * C64::from_polar(1.0, phase);
            }
            re[(m + n * t) as usize] = acc.re;
            im[(m + n * t) as usize] = acc.im;
        }
    }
    (re, im)
}

/// Signed DFT index held at centered position `c`.
pub fn centered_offset(n: usize, c: usize) -> isize {
    c as isize - (n / 2) as isize
}

/// `A[c_tau, c_nu] = (1/N) sum_{m,t} W[m,t] e^{-2 pi i (tau m + nu t) / N}`
/// with signed offsets read from centered positions.
pub fn naive_af(n: usize, w: &[f64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for c_nu in 0..n {
        let nu = centered_offset(n, c_nu);
        for c_tau in 0..n {
            let tau = centered_offset(n, c_tau);
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..n {
                for m in 0..n {
                    let arg = (tau * m as isize + nu * t as isize).rem_euclid(n as isize);
                    let phase = -2.0 * PI * arg as f64 / n as f64;
                    acc += C64::from_polar(w[m + n * t], phase);
                }
            }
            out[c_tau + n * c_nu] = acc / n as f64;
        }
    }
    out
}

/// Offsets `-(d-1)/2 ..= (d-1)/2` covered by a centered mask axis.
pub fn mask_offsets(d: usize) -> Vec<isize> {
    let h = (d as isize - 1) / 2;
    (-h..=h).collect()
}

/// Rows of the masked operator built straight from the exponentials, lag
/// offset fastest. Row-major `M x N^2`.
pub fn naive_operator(n: usize, mask: MaskSpec) -> Vec<Vec<C64>> {
    let mut rows = Vec::new();
    for nu in mask_offsets(mask.d_nu) {
        for tau in mask_offsets(mask.d_tau) {
            let row = (0..n * n)
                .map(|idx| {
                    let (m, t) = ((idx % n) as isize, (idx / n) as isize);
                    let arg = (tau * m + nu * t).rem_euclid(n as isize);
                    C64::from_polar(1.0 / n as f64, -2.0 * PI * arg as f64 / n as f64)
                })
                .collect();
            rows.push(row);
        }
    }
    rows
}

pub fn apply_rows(rows: &[Vec<C64>], x: &[f64]) -> Vec<C64> {
    rows.iter()
        .map(|r| r.iter().zip(x).map(|(a, &v)| a * v).sum())
        .collect()
}

/// Coordinate descent on `1/2 ||b - A x||^2 + lambda ||x||_1` for complex
/// rows and real `x`, using the stacked real system `[Re A; Im A]`.
pub fn coordinate_descent(rows: &[Vec<C64>], b: &[C64], lambda: f64, sweeps: usize) -> Vec<f64> {
    let cols = rows[0].len();
    // stacked real matrix, column-major for cheap column access
    let m = rows.len();
    let mut a = vec![0.0; 2 * m * cols];
    for j in 0..cols {
        for (i, r) in rows.iter().enumerate() {
            a[j * 2 * m + i] = r[j].re;
            a[j * 2 * m + m + i] = r[j].im;
        }
    }
    let y: Vec<f64> = b
        .iter()
        .map(|v| v.re)
        .chain(b.iter().map(|v| v.im))
        .collect();
    let col = |j: usize| &a[j * 2 * m..(j + 1) * 2 * m];
    let norms: Vec<f64> = (0..cols)
        .map(|j| col(j).iter().map(|v| v * v).sum())
        .collect();
    let mut x = vec![0.0; cols];
    let mut r = y.clone();
    for _ in 0..sweeps {
        let mut largest = 0.0f64;
        for j in 0..cols {
            if norms[j] == 0.0 {
                continue;
            }
            let c = col(j);
            let rho: f64 = c.iter().zip(&r).map(|(a, r)| a * r).sum::<f64>() + norms[j] * x[j];
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / norms[j];
            let delta = new - x[j];
            if delta != 0.0 {
                r.iter_mut().zip(c).for_each(|(r, a)| *r -= a * delta);
                x[j] = new;
                largest = largest.max(delta.abs());
            }
        }
        if largest < 1e-15 {
            break;
        }
    }
    x
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn cnorm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs_cdiff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Squared-energy share of a tone's WVD column inside `+-1` bin of its peak,
/// from the Dirichlet kernel of the `2L+1` valid lags.
pub fn tone_column_share(n: usize, t: usize) -> f64 {
    let l = t.min(n - 1 - t);
    let m = (2 * l + 1) as f64;
    let nf = n as f64;
    let side = (PI * m / nf).sin() / (PI / nf).sin();
    (m * m + 2.0 * side * side) / (nf * m)
}

/// Random sparse LASSO instance on an 8 x 8 grid with a 5 x 5 mask:
/// `(op, observation, lambda)`.
pub fn toy_problem(seed: u64) -> (tfrecon::MeasurementOp, Vec<C64>, f64) {
    use tfrecon::SensingOperator;
    let mut r = rng(seed);
    let op = tfrecon::MeasurementOp::new(8, MaskSpec::square(5)).unwrap();
    let mut truth = vec![0.0; 64];
    for _ in 0..6 {
        let i = r.random_range(0..64);
        truth[i] = r.random_range(0.5..2.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    let mut obs = op.forward(&truth).unwrap();
    for v in obs.iter_mut() {
        *v += C64::new(r.random_range(-0.01..0.01), r.random_range(-0.01..0.01));
    }
    let back = op.adjoint(&obs).unwrap();
    let lambda = 0.1 * back.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (op, obs, lambda)
}

/// Sufficient condition for a unique LASSO solution: the columns whose
/// correlation with the residual sits at `lambda` are linearly independent
/// in the stacked real system. The gradient is the same at every solution.
pub fn lasso_solution_is_unique(rows: &[Vec<C64>], gradient: &[f64], lambda: f64) -> bool {
    let active: Vec<usize> = (0..gradient.len())
        .filter(|&j| gradient[j].abs() >= lambda * (1.0 - 1e-8))
        .collect();
    if active.is_empty() {
        return true;
    }
    let m = rows.len();
    let a = nalgebra::DMatrix::from_fn(2 * m, active.len(), |i, k| {
        let v = rows[i % m][active[k]];
        if i < m {
            v.re
        } else {
            v.im
        }
    });
    let sv = a.singular_values();
    let top = sv.max();
    sv.iter().all(|&s| s > 1e-9 * top)
}
