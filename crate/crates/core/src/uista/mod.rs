//! K-layer unrolled ISTA with per-layer threshold maps.
//!
//! Layer k computes `u = w_k - t_k Re Psi'^H (Psi' w_k - a')` (the `P w + Q a'`
//! step applied matrix-free), asks a [`ThresholdProvider`] for a nonnegative
//! threshold field `theta_k`, and sets `w_{k+1} = shrink(u, theta_k)`, from
//! `w_0 = 0`. The measurement operator is fixed; only the steps and the
//! threshold maps vary per layer.

pub mod golden;

use crate::measure::{MeasurementOp, SensingOperator};
use crate::solver::{soft_threshold_in_place, Threshold};
use crate::tfcore::TfMatrix;
use crate::threshnet::{unet_forward_image, ThresholdInput, WeightBundle};
use crate::{Error, Result, C64};

/// Source of per-layer steps and threshold fields.
pub trait ThresholdProvider: Send + Sync {
    fn layers(&self) -> usize;

    fn step(&self, layer: usize) -> f64;

    /// Which tensor the threshold is computed from.
    fn input(&self) -> ThresholdInput {
        ThresholdInput::PreThreshold
    }

    /// Threshold field (column-major, length N^2) for `layer`.
    fn threshold(&self, layer: usize, n: usize, input: &[f64]) -> Result<Vec<f64>>;
}

/// The same scalar threshold everywhere. A value of 0 turns the network into
/// plain projected-gradient (Landweber) steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantThreshold {
    pub value: f64,
    pub steps: Vec<f64>,
}

impl ConstantThreshold {
    pub fn new(value: f64, layers: usize) -> Self {
        Self {
            value,
            steps: vec![1.0; layers],
        }
    }
}

impl ThresholdProvider for ConstantThreshold {
    fn layers(&self) -> usize {
        self.steps.len()
    }

    fn step(&self, layer: usize) -> f64 {
        self.steps[layer]
    }

    fn threshold(&self, _layer: usize, n: usize, _input: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.value; n * n])
    }
}

/// Thresholds from the k-th U-Net of a weight bundle.
#[derive(Debug, Clone)]
pub struct UNetThreshold {
    bundle: WeightBundle,
}

impl UNetThreshold {
    pub fn new(bundle: WeightBundle) -> Self {
        Self { bundle }
    }

    pub fn bundle(&self) -> &WeightBundle {
        &self.bundle
    }
}

impl ThresholdProvider for UNetThreshold {
    fn layers(&self) -> usize {
        self.bundle.k()
    }

    fn step(&self, layer: usize) -> f64 {
        self.bundle.steps[layer]
    }

    fn input(&self) -> ThresholdInput {
        self.bundle.flags.threshold_input
    }

    fn threshold(&self, layer: usize, n: usize, input: &[f64]) -> Result<Vec<f64>> {
        let scale = if self.bundle.flags.normalize {
            input.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
        } else {
            1.0
        };
        if scale == 0.0 {
            return Ok(vec![0.0; n * n]);
        }
        let mut image = vec![0.0f32; n * n];
        for t in 0..n {
            for m in 0..n {
                image[m * n + t] = (input[m + n * t] / scale) as f32;
            }
        }
        let out = unet_forward_image(&self.bundle.arch, &self.bundle.blocks[layer], n, n, &image)?;
        let mut theta = vec![0.0; n * n];
        for t in 0..n {
            for m in 0..n {
                theta[m + n * t] = f64::from(out[m * n + t]) * scale;
            }
        }
        Ok(theta)
    }
}

/// Intermediates of one reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// `w_0 .. w_K`.
    pub iterates: Vec<Vec<f64>>,
    /// `theta_0 .. theta_{K-1}`.
    pub thresholds: Vec<Vec<f64>>,
    /// `||Psi' w_k - a'||` for each iterate.
    pub residuals: Vec<f64>,
}

impl LayerTrace {
    /// Whether the data residual never grows from one layer to the next.
    pub fn residual_non_increasing(&self) -> bool {
        self.residuals
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-9))
    }
}

#[derive(Debug, Clone)]
pub struct UistaModel<P> {
    op: MeasurementOp,
    provider: P,
}

impl UistaModel<UNetThreshold> {
    /// Model driven by trained (or fixture) U-Net weights.
    pub fn from_bundle(op: MeasurementOp, bundle: WeightBundle) -> Result<Self> {
        if bundle.n_hint != op.n() {
            return Err(Error::GridMismatch(format!(
                "weights were built for N={}, operator has N={}",
                bundle.n_hint,
                op.n()
            )));
        }
        if let Some(mask) = bundle.mask {
            if mask != op.mask() {
                return Err(Error::GridMismatch(format!(
                    "weights expect mask {mask}, operator uses {}",
                    op.mask()
                )));
            }
        }
        if !op.n().is_multiple_of(bundle.arch.divisor()) {
            return Err(Error::GridMismatch(format!(
                "N={} is not divisible by {}",
                op.n(),
                bundle.arch.divisor()
            )));
        }
        if bundle.steps.len() != bundle.k() {
            return Err(Error::Manifest(format!(
                "{} steps for {} layers",
                bundle.steps.len(),
                bundle.k()
            )));
        }
        Ok(Self::new(op, UNetThreshold::new(bundle)))
    }
}

impl<P: ThresholdProvider> UistaModel<P> {
    pub fn new(op: MeasurementOp, provider: P) -> Self {
        Self { op, provider }
    }

    pub fn op(&self) -> &MeasurementOp {
        &self.op
    }

    pub fn provider(&self) -> &P {
        &self.provider
    }

    pub fn layers(&self) -> usize {
        self.provider.layers()
    }

    pub fn reconstruct(&self, a_prime: &[C64]) -> Result<TfMatrix> {
        let omega = self.run(a_prime, None)?;
        TfMatrix::from_column_major(self.op.n(), omega)
    }

    pub fn layer_trace(&self, a_prime: &[C64]) -> Result<LayerTrace> {
        let mut trace = LayerTrace {
            iterates: Vec::with_capacity(self.layers() + 1),
            thresholds: Vec::with_capacity(self.layers()),
            residuals: Vec::with_capacity(self.layers() + 1),
        };
        let last = self.run(a_prime, Some(&mut trace))?;
        let r = self.residual(&last, a_prime)?;
        trace.residuals.push(norm(&r));
        trace.iterates.push(last);
        Ok(trace)
    }

    fn residual(&self, omega: &[f64], a_prime: &[C64]) -> Result<Vec<C64>> {
        let mut r = self.op.forward(omega)?;
        r.iter_mut().zip(a_prime).for_each(|(r, a)| *r -= a);
        Ok(r)
    }

    fn run(&self, a_prime: &[C64], mut trace: Option<&mut LayerTrace>) -> Result<Vec<f64>> {
        let n = self.op.n();
        if a_prime.len() != self.op.measurements() {
            return Err(Error::LengthMismatch {
                what: "observation",
                expected: self.op.measurements(),
                actual: a_prime.len(),
            });
        }
        let mut omega = vec![0.0; n * n];
        for k in 0..self.layers() {
            let r = self.residual(&omega, a_prime)?;
            let back = self.op.adjoint(&r)?;
            let t = self.provider.step(k);
            let mut u: Vec<f64> = omega.iter().zip(&back).map(|(w, g)| w - t * g).collect();
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIterate(k));
            }
            let source = match self.provider.input() {
                ThresholdInput::PreThreshold => &u,
                ThresholdInput::Iterate => &omega,
            };
            let theta = self.provider.threshold(k, n, source)?;
            soft_threshold_in_place(&mut u, Threshold::Field(&theta))?;
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIterate(k));
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.residuals.push(norm(&r));
                tr.iterates.push(std::mem::replace(&mut omega, u));
                tr.thresholds.push(theta);
            } else {
                omega = u;
            }
        }
        Ok(omega)
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MaskSpec;
    use crate::threshnet::UNetArch;

    #[test]
    fn zero_observation_gives_zero() {
        let op = MeasurementOp::new(16, MaskSpec::square(5)).unwrap();
        let bundle = WeightBundle::seeded(UNetArch::default(), 3, 16, 1);
        let model = UistaModel::from_bundle(op, bundle).unwrap();
        let out = model.reconstruct(&vec![C64::new(0.0, 0.0); 25]).unwrap();
        assert!(out.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let op = MeasurementOp::new(16, MaskSpec::square(5)).unwrap();
        let bundle = WeightBundle::zeros(UNetArch::default(), 2, 32);
        assert!(matches!(
            UistaModel::from_bundle(op.clone(), bundle),
            Err(Error::GridMismatch(_))
        ));
        let bundle = WeightBundle::zeros(UNetArch::default(), 2, 16).with_mask(MaskSpec::square(7));
        assert!(UistaModel::from_bundle(op, bundle).is_err());
    }

    #[test]
    fn wrong_observation_length() {
        let op = MeasurementOp::new(16, MaskSpec::square(5)).unwrap();
        let model = UistaModel::new(op, ConstantThreshold::new(0.0, 2));
        assert!(model.reconstruct(&[C64::new(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn nan_threshold_is_reported() {
        let op = MeasurementOp::new(16, MaskSpec::square(5)).unwrap();
        let model = UistaModel::new(op, ConstantThreshold::new(f64::NAN, 2));
        assert!(model.reconstruct(&[C64::new(1.0, 0.0); 25]).is_err());
    }

    #[test]
    fn trace_shape() {
        let op = MeasurementOp::new(16, MaskSpec::square(5)).unwrap();
        let model = UistaModel::new(op, ConstantThreshold::new(0.01, 4));
        let a: Vec<C64> = (0..25)
            .map(|i| C64::new(1.0 / (1.0 + i as f64), 0.0))
            .collect();
        let a = model.op().symmetrize(&a);
        let tr = model.layer_trace(&a).unwrap();
        assert_eq!(tr.iterates.len(), 5);
        assert_eq!(tr.thresholds.len(), 4);
        assert_eq!(tr.residuals.len(), 5);
        assert!(tr.iterates[0].iter().all(|v| *v == 0.0));
        assert_eq!(tr.iterates[4], model.reconstruct(&a).unwrap().into_vec());
    }
}
