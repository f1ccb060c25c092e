//! Golden inference vectors exchanged with the training side.
//!
//! A golden directory holds `manifest.json` plus, per sample `i`:
//! `i.obs` (interleaved complex f32 observation, length 2M), `i.theta{k}`
//! (threshold map of layer k) and `i.omega` (final estimate), the latter two
//! as column-major f32 N x N.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ThresholdProvider, UistaModel};
use crate::io::{
    complex_f32_bytes, f32_bytes, parse_complex_f32, parse_f32, read_bytes, write_bytes,
};
use crate::measure::{MaskSpec, SensingOperator};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenSample {
    pub obs: String,
    pub thetas: Vec<String>,
    pub omega: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenManifest {
    pub version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mask: MaskSpec,
    pub samples: Vec<GoldenSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenReport {
    pub samples: usize,
    pub max_theta_error: f64,
    pub max_omega_error: f64,
}

impl GoldenReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_theta_error < tol && self.max_omega_error < tol
    }
}

fn round_f32(obs: &[C64]) -> Vec<C64> {
    obs.iter()
        .map(|v| C64::new(f64::from(v.re as f32), f64::from(v.im as f32)))
        .collect()
}

/// Run `model` on each observation and store inputs and intermediates.
/// Observations are rounded to f32 first so the stored input is exactly what
/// was evaluated.
pub fn write_goldens<P: ThresholdProvider>(
    dir: &Path,
    model: &UistaModel<P>,
    observations: &[Vec<C64>],
) -> Result<GoldenManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut samples = Vec::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        let obs = round_f32(obs);
        let trace = model.layer_trace(&obs)?;
        let sample = GoldenSample {
            obs: format!("{i}.obs"),
            thetas: (0..trace.thresholds.len())
                .map(|k| format!("{i}.theta{k}"))
                .collect(),
            omega: format!("{i}.omega"),
        };
        write_bytes(&dir.join(&sample.obs), &complex_f32_bytes(&obs))?;
        for (name, theta) in sample.thetas.iter().zip(&trace.thresholds) {
            write_bytes(&dir.join(name), &f32_bytes(theta.iter().copied()))?;
        }
        let last = trace.iterates.last().expect("trace holds w_0");
        write_bytes(&dir.join(&sample.omega), &f32_bytes(last.iter().copied()))?;
        samples.push(sample);
    }
    let manifest = GoldenManifest {
        version: 1,
        n: model.op().n(),
        k: model.layers(),
        mask: model.op().mask(),
        samples,
    };
    write_bytes(
        &dir.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn max_abs_diff(stored: &[f32], computed: &[f64]) -> Result<f64> {
    if stored.len() != computed.len() {
        return Err(Error::LengthMismatch {
            what: "golden tensor",
            expected: computed.len(),
            actual: stored.len(),
        });
    }
    Ok(stored
        .iter()
        .zip(computed)
        .map(|(a, b)| (f64::from(*a) - b).abs())
        .fold(0.0, f64::max))
}

/// Re-run every stored observation and report the largest deviations.
pub fn check_goldens<P: ThresholdProvider>(
    dir: &Path,
    model: &UistaModel<P>,
) -> Result<GoldenReport> {
    let manifest: GoldenManifest =
        serde_json::from_slice(&read_bytes(&dir.join("manifest.json"))?)?;
    if manifest.n != model.op().n() || manifest.mask != model.op().mask() {
        return Err(Error::GridMismatch(format!(
            "goldens were produced for N={} mask {}, model has N={} mask {}",
            manifest.n,
            manifest.mask,
            model.op().n(),
            model.op().mask()
        )));
    }
    if manifest.k != model.layers() {
        return Err(Error::GridMismatch(format!(
            "goldens have K={}, model has K={}",
            manifest.k,
            model.layers()
        )));
    }
    let mut report = GoldenReport {
        samples: manifest.samples.len(),
        max_theta_error: 0.0,
        max_omega_error: 0.0,
    };
    for sample in &manifest.samples {
        let obs = parse_complex_f32(&read_bytes(&dir.join(&sample.obs))?)?;
        if obs.len() != model.op().measurements() {
            return Err(Error::LengthMismatch {
                what: "golden observation",
                expected: model.op().measurements(),
                actual: obs.len(),
            });
        }
        let trace = model.layer_trace(&obs)?;
        for (name, theta) in sample.thetas.iter().zip(&trace.thresholds) {
            let stored = parse_f32(&read_bytes(&dir.join(name))?)?;
            report.max_theta_error = report.max_theta_error.max(max_abs_diff(&stored, theta)?);
        }
        let stored = parse_f32(&read_bytes(&dir.join(&sample.omega))?)?;
        let last = trace.iterates.last().expect("trace holds w_0");
        report.max_omega_error = report.max_omega_error.max(max_abs_diff(&stored, last)?);
    }
    Ok(report)
}
