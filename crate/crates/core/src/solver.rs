//! Proximal-gradient solvers for
//! `min_w 1/2 ||a' - Psi' w||^2 + lambda ||w||_1` over real `w`.
//!
//! The measurement rows are orthonormal, so the gradient's Lipschitz constant
//! is exactly 1 and the default step is 1.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::measure::{apply_mask, MaskSpec, MeasurementOp, SensingOperator};
use crate::siggen::DiscreteSignal;
use crate::tfcore::{af_direct, TfMatrix};
use crate::{Error, Result, C64};

/// Per-coordinate threshold: one value for all coefficients or a full field.
#[derive(Debug, Clone, Copy)]
pub enum Threshold<'a> {
    Scalar(f64),
    Field(&'a [f64]),
}

impl Threshold<'_> {
    fn at(&self, i: usize) -> f64 {
        match self {
            Threshold::Scalar(v) => *v,
            Threshold::Field(f) => f[i],
        }
    }

    fn validate(&self, len: usize) -> Result<()> {
        match self {
            Threshold::Scalar(v) if *v < 0.0 || v.is_nan() => Err(Error::NegativeThreshold(*v)),
            Threshold::Scalar(_) => Ok(()),
            Threshold::Field(f) => {
                if f.len() != len {
                    return Err(Error::LengthMismatch {
                        what: "threshold field",
                        expected: len,
                        actual: f.len(),
                    });
                }
                match f.iter().find(|v| **v < 0.0 || v.is_nan()) {
                    Some(v) => Err(Error::NegativeThreshold(*v)),
                    None => Ok(()),
                }
            }
        }
    }
}

/// `sgn(x) max(|x| - theta, 0)`, elementwise.
pub fn soft_threshold(x: &[f64], theta: Threshold<'_>) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    soft_threshold_in_place(&mut out, theta)?;
    Ok(out)
}

pub fn soft_threshold_in_place(x: &mut [f64], theta: Threshold<'_>) -> Result<()> {
    theta.validate(x.len())?;
    for (i, v) in x.iter_mut().enumerate() {
        *v = shrink(*v, theta.at(i));
    }
    Ok(())
}

#[inline]
fn shrink(x: f64, theta: f64) -> f64 {
    let mag = x.abs() - theta;
    if mag > 0.0 {
        mag.copysign(x)
    } else {
        0.0
    }
}

/// LASSO instance over a sensing operator.
#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a, O: ?Sized> {
    pub op: &'a O,
    pub observation: &'a [C64],
    pub lambda: f64,
}

impl<'a, O: SensingOperator + ?Sized> LassoProblem<'a, O> {
    pub fn new(op: &'a O, observation: &'a [C64], lambda: f64) -> Self {
        Self {
            op,
            observation,
            lambda,
        }
    }

    pub fn objective(&self, omega: &[f64]) -> Result<f64> {
        let residual = self.op.forward(omega)?;
        let fit: f64 = residual
            .iter()
            .zip(self.observation)
            .map(|(r, a)| (r - a).norm_sqr())
            .sum();
        Ok(0.5 * fit + self.lambda * l1(omega))
    }

    /// Gradient of the data-fit term, `Re Psi'^H (Psi' w - a')`.
    pub fn gradient(&self, omega: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.op.forward(omega)?;
        r.iter_mut()
            .zip(self.observation)
            .for_each(|(r, a)| *r -= a);
        self.op.adjoint(&r)
    }

    /// Largest violation of the optimality conditions.
    pub fn kkt_residual(&self, omega: &[f64]) -> Result<f64> {
        let g = self.gradient(omega)?;
        Ok(omega
            .iter()
            .zip(&g)
            .map(|(&w, &gi)| {
                if w != 0.0 {
                    (gi + self.lambda * w.signum()).abs()
                } else {
                    (gi.abs() - self.lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max))
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be nonnegative and finite, got {}",
                self.lambda
            )));
        }
        if self.observation.len() != self.op.measurements() {
            return Err(Error::LengthMismatch {
                what: "observation",
                expected: self.op.measurements(),
                actual: self.observation.len(),
            });
        }
        if self
            .observation
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::InvalidConfig("observation is not finite".into()));
        }
        Ok(())
    }
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acceleration {
    Ista,
    Fista,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when `||w_{k+1} - w_k|| / ||w_{k+1}||` drops below this; 0 disables.
    pub tol: f64,
    pub step: f64,
    pub acceleration: Acceleration,
    /// Project onto `w >= 0` after each shrinkage.
    pub nonnegative: bool,
    /// Evaluate the objective every iteration. FISTA pays an extra forward
    /// pass per iteration for it.
    pub track_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-6,
            step: 1.0,
            acceleration: Acceleration::Ista,
            nonnegative: false,
            track_objective: true,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "step must lie in (0, 1], got {}",
                self.step
            )));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tol must be >= 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// `None` when objective tracking is off.
    pub objective: Option<f64>,
    pub nnz: usize,
    pub rel_change: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub estimate: Vec<f64>,
    /// Row 0 is the zero initial point; row k follows iteration k.
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl SolveOutput {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// Objective trace as CSV: `iter,objective,nnz,rel_change`.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "iter,objective,nnz,rel_change")?;
    for row in trace {
        let obj = row
            .objective
            .map(|v| format!("{v:.12e}"))
            .unwrap_or_default();
        writeln!(w, "{},{},{},{:.6e}", row.iter, obj, row.nnz, row.rel_change)?;
    }
    Ok(())
}

const DIVERGENCE_STREAK: usize = 5;

/// ISTA / FISTA from `w = 0`.
pub fn ista_solve<O: SensingOperator + ?Sized>(
    problem: &LassoProblem<'_, O>,
    cfg: &SolverConfig,
) -> Result<SolveOutput> {
    problem.validate()?;
    cfg.validate()?;
    let n2 = problem.op.grid() * problem.op.grid();
    let theta = problem.lambda * cfg.step;
    let mut omega = vec![0.0; n2];
    let mut trace = vec![TraceRow {
        iter: 0,
        objective: cfg
            .track_objective
            .then(|| 0.5 * norm_sqr(problem.observation)),
        nnz: 0,
        rel_change: 0.0,
    }];
    // FISTA extrapolation point and momentum
    let mut y = omega.clone();
    let mut next = omega.clone();
    let mut momentum = 1.0f64;
    let mut increases = 0usize;
    let mut converged = false;

    for k in 1..=cfg.max_iters {
        let base = match cfg.acceleration {
            Acceleration::Ista => &omega,
            Acceleration::Fista => &y,
        };
        let grad = problem.gradient(base)?;
        for ((out, w), g) in next.iter_mut().zip(base).zip(&grad) {
            let v = shrink(w - cfg.step * g, theta);
            *out = if cfg.nonnegative { v.max(0.0) } else { v };
        }

        let (mut diff, mut norm, mut nnz) = (0.0, 0.0, 0usize);
        for (a, b) in omega.iter().zip(&next) {
            diff += (a - b) * (a - b);
            norm += b * b;
            nnz += usize::from(*b != 0.0);
        }
        let (diff, norm) = (diff.sqrt(), norm.sqrt());
        let rel_change = if norm > 0.0 {
            diff / norm
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };

        if cfg.acceleration == Acceleration::Fista {
            let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / m_next;
            for ((y, n), o) in y.iter_mut().zip(&next).zip(&omega) {
                *y = n + beta * (n - o);
            }
            momentum = m_next;
        }
        std::mem::swap(&mut omega, &mut next);

        let objective = if cfg.track_objective {
            Some(problem.objective(&omega)?)
        } else {
            None
        };
        if let (Some(cur), Some(prev)) = (objective, trace.last().and_then(|r| r.objective)) {
            if !cur.is_finite() {
                return Err(Error::Diverged {
                    iteration: k,
                    streak: increases + 1,
                });
            }
            if cfg.acceleration == Acceleration::Ista && cur > prev * (1.0 + 1e-12) + 1e-300 {
                increases += 1;
                if increases > DIVERGENCE_STREAK {
                    return Err(Error::Diverged {
                        iteration: k,
                        streak: increases,
                    });
                }
            } else {
                increases = 0;
            }
        }
        trace.push(TraceRow {
            iter: k,
            objective,
            nnz,
            rel_change,
        });
        if rel_change <= cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(SolveOutput {
        estimate: omega,
        trace,
        converged,
    })
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// `lambda = fraction * ||adjoint(a')||_inf`.
pub fn relative_lambda<O: SensingOperator + ?Sized>(
    op: &O,
    observation: &[C64],
    fraction: f64,
) -> Result<f64> {
    let back = op.adjoint(observation)?;
    Ok(fraction * back.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Fraction of `||adjoint(a')||_inf` used when no lambda is given.
pub const DEFAULT_LAMBDA_FRACTION: f64 = 0.01;

/// Settings of the `l1app` baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1AppConfig {
    pub mask: MaskSpec,
    /// Absolute lambda; `None` uses the relative default.
    pub lambda: Option<f64>,
    pub lambda_fraction: f64,
    pub solver: SolverConfig,
}

impl Default for L1AppConfig {
    fn default() -> Self {
        Self {
            mask: MaskSpec::NARROW,
            lambda: None,
            lambda_fraction: DEFAULT_LAMBDA_FRACTION,
            solver: SolverConfig {
                max_iters: 2000,
                tol: 1e-6,
                step: 1.0,
                acceleration: Acceleration::Fista,
                nonnegative: false,
                track_objective: false,
            },
        }
    }
}

/// AF samples of `z` in a centered block, then a LASSO reconstruction.
pub fn reconstruct_from_signal(
    z: &DiscreteSignal,
    op: &MeasurementOp,
    lambda: Option<f64>,
    lambda_fraction: f64,
    solver: &SolverConfig,
) -> Result<TfMatrix> {
    let n = z.len();
    if op.n() != n {
        return Err(Error::GridMismatch(format!(
            "operator grid {} does not match signal length {n}",
            op.n()
        )));
    }
    let obs = apply_mask(&af_direct(z), op.mask())?;
    let lambda = match lambda {
        Some(l) => l,
        None => relative_lambda(op, &obs, lambda_fraction)?,
    };
    if lambda <= 0.0 {
        // only happens for an all-zero observation
        return Ok(TfMatrix::zeros(n));
    }
    let out = ista_solve(&LassoProblem::new(op, &obs, lambda), solver)?;
    TfMatrix::from_column_major(n, out.estimate)
}

/// The `l1app` baseline: 13x13 AF block, FISTA, 2000 iterations, tol 1e-6.
pub fn l1app_reconstruct(z: &DiscreteSignal, lambda: Option<f64>) -> Result<TfMatrix> {
    let cfg = L1AppConfig {
        lambda,
        ..L1AppConfig::default()
    };
    l1app_with(z, &cfg)
}

pub fn l1app_with(z: &DiscreteSignal, cfg: &L1AppConfig) -> Result<TfMatrix> {
    let op = MeasurementOp::new(z.len(), cfg.mask)?;
    reconstruct_from_signal(z, &op, cfg.lambda, cfg.lambda_fraction, &cfg.solver)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrinkage_examples() {
        let out = soft_threshold(&[2.0, -1.0, -3.0], Threshold::Scalar(1.5)).unwrap();
        assert_eq!(out, vec![0.5, 0.0, -1.5]);
        let x = [0.3, -7.0, 0.0];
        assert_eq!(
            soft_threshold(&x, Threshold::Scalar(0.0)).unwrap(),
            x.to_vec()
        );
        let field = [0.0, 8.0, 1.0];
        assert_eq!(
            soft_threshold(&x, Threshold::Field(&field)).unwrap(),
            vec![0.3, 0.0, 0.0]
        );
    }

    #[test]
    fn negative_threshold_rejected() {
        assert!(matches!(
            soft_threshold(&[1.0], Threshold::Scalar(-0.1)),
            Err(Error::NegativeThreshold(_))
        ));
        assert!(soft_threshold(&[1.0, 2.0], Threshold::Field(&[0.0, -1.0])).is_err());
        assert!(soft_threshold(&[1.0, 2.0], Threshold::Field(&[0.0])).is_err());
    }

    #[test]
    fn config_validation() {
        let op = MeasurementOp::new(8, MaskSpec::square(3)).unwrap();
        let obs = vec![C64::new(1.0, 0.0); 9];
        let p = LassoProblem::new(&op, &obs, 0.1);
        let bad = SolverConfig {
            step: 1.5,
            ..SolverConfig::default()
        };
        assert!(ista_solve(&p, &bad).is_err());
        assert!(ista_solve(
            &LassoProblem::new(&op, &obs, -1.0),
            &SolverConfig::default()
        )
        .is_err());
        assert!(ista_solve(
            &LassoProblem::new(&op, &obs[..4], 0.1),
            &SolverConfig::default()
        )
        .is_err());
    }

    #[test]
    fn large_lambda_gives_zero() {
        let op = MeasurementOp::new(8, MaskSpec::square(3)).unwrap();
        let obs: Vec<C64> = (0..9).map(|i| C64::new(i as f64 * 0.1, 0.0)).collect();
        let obs = op.symmetrize(&obs);
        let lambda = relative_lambda(&op, &obs, 1.0).unwrap();
        let out = ista_solve(
            &LassoProblem::new(&op, &obs, lambda),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(out.estimate.iter().all(|v| *v == 0.0));
        assert!(out.converged);
    }

    #[test]
    fn zero_signal_reconstructs_to_zero() {
        let z = DiscreteSignal::new(vec![C64::new(0.0, 0.0); 32]);
        let w = l1app_reconstruct(&z, None).unwrap();
        assert!(w.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trace_csv_layout() {
        let rows = [
            TraceRow {
                iter: 0,
                objective: Some(2.0),
                nnz: 0,
                rel_change: 0.0,
            },
            TraceRow {
                iter: 1,
                objective: None,
                nnz: 3,
                rel_change: 0.5,
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "iter,objective,nnz,rel_change");
        assert_eq!(lines[1], "0,2.000000000000e0,0,0.000000e0");
        assert_eq!(lines[2], "1,,3,5.000000e-1");
    }
}
