//! Monte-Carlo NMSE sweeps over cases, SNR levels and methods.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use super::nmse_normalized;
use crate::measure::{apply_mask, MaskSpec, MeasurementOp};
use crate::siggen::{derive_seed, ideal_tfd, synthesize, BenchmarkCase, MixtureSpec};
use crate::solver::{
    reconstruct_from_signal, Acceleration, L1AppConfig, SolverConfig, DEFAULT_LAMBDA_FRACTION,
};
use crate::tfcore::{af_direct, wvd, TfMatrix};
use crate::threshnet::WeightBundle;
use crate::uista::{UNetThreshold, UistaModel};
use crate::{DiscreteSignal, Error, Result};

pub const CSV_HEADER: &str = "case,snr_db,method,mean_nmse_db,std_nmse_db,runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Wvd,
    L1app,
    Ista,
    Uista,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Wvd => "wvd",
            Method::L1app => "l1app",
            Method::Ista => "ista",
            Method::Uista => "uista",
        }
    }

    /// Plain ISTA on the wide mask with a fixed scalar threshold.
    pub fn ista_config() -> SolverConfig {
        SolverConfig {
            max_iters: 500,
            tol: 1e-6,
            step: 1.0,
            acceleration: Acceleration::Ista,
            nonnegative: false,
            track_objective: false,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wvd" => Ok(Method::Wvd),
            "l1app" => Ok(Method::L1app),
            "ista" => Ok(Method::Ista),
            "uista" => Ok(Method::Uista),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// A benchmark case by number, or a custom mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CaseSpec {
    Benchmark(u8),
    Custom(MixtureSpec),
}

impl CaseSpec {
    fn mixture(&self) -> Result<MixtureSpec> {
        match self {
            CaseSpec::Benchmark(k) => BenchmarkCase::from_number(*k)
                .map(BenchmarkCase::spec)
                .ok_or_else(|| Error::Experiment(format!("no benchmark case {k}; expected 1..5"))),
            CaseSpec::Custom(spec) => Ok(spec.clone().with_snr(None)),
        }
    }

    /// Seed stream for this case; benchmark cases use their number so a trial's
    /// noise does not depend on which other cases are in the sweep.
    fn stream(&self, index: usize) -> u64 {
        match self {
            CaseSpec::Benchmark(k) => u64::from(*k),
            CaseSpec::Custom(_) => 1000 + index as u64,
        }
    }

    fn label(&self, index: usize) -> String {
        match self {
            CaseSpec::Benchmark(k) => k.to_string(),
            CaseSpec::Custom(_) => format!("custom{index}"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(CaseSpec),
    Many(Vec<CaseSpec>),
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<CaseSpec>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(c) => vec![c],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(alias = "case", deserialize_with = "one_or_many")]
    pub cases: Vec<CaseSpec>,
    pub snr_grid: Vec<f64>,
    pub runs: usize,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
}

impl ExperimentSpec {
    /// All five benchmark cases over 5..=45 dB in steps of 5.
    pub fn benchmark_sweep(runs: usize, methods: Vec<Method>, seed: u64) -> Self {
        Self {
            cases: (1..=5).map(CaseSpec::Benchmark).collect(),
            snr_grid: (1..=9).map(|k| f64::from(5 * k)).collect(),
            runs,
            methods,
            seed,
            weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Experiment("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Experiment("no methods requested".into()));
        }
        if self.cases.is_empty() || self.snr_grid.is_empty() {
            return Err(Error::Experiment("empty case list or SNR grid".into()));
        }
        if let Some(bad) = self.snr_grid.iter().find(|s| !s.is_finite()) {
            return Err(Error::Experiment(format!("non-finite SNR {bad}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub case: String,
    pub snr_db: f64,
    pub method: Method,
    pub mean_nmse_db: f64,
    pub std_nmse_db: f64,
    pub runs: usize,
}

impl ExperimentRow {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{}",
            self.case,
            self.snr_db,
            self.method.name(),
            self.mean_nmse_db,
            self.std_nmse_db,
            self.runs
        )
    }
}

struct Reconstructors {
    narrow: MeasurementOp,
    wide: MeasurementOp,
    uista: Option<UistaModel<UNetThreshold>>,
}

impl Reconstructors {
    fn new(n: usize, bundle: Option<&WeightBundle>) -> Result<Self> {
        let uista = match bundle {
            Some(b) => {
                let op = MeasurementOp::new(n, b.mask.unwrap_or(MaskSpec::WIDE))?;
                Some(UistaModel::from_bundle(op, b.clone())?)
            }
            None => None,
        };
        Ok(Self {
            narrow: MeasurementOp::new(n, MaskSpec::NARROW)?,
            wide: MeasurementOp::new(n, MaskSpec::WIDE)?,
            uista,
        })
    }

    fn run(&self, method: Method, z: &DiscreteSignal) -> Result<TfMatrix> {
        match method {
            Method::Wvd => Ok(wvd(z)),
            Method::L1app => {
                let cfg = L1AppConfig::default();
                reconstruct_from_signal(
                    z,
                    &self.narrow,
                    cfg.lambda,
                    cfg.lambda_fraction,
                    &cfg.solver,
                )
            }
            Method::Ista => reconstruct_from_signal(
                z,
                &self.wide,
                None,
                DEFAULT_LAMBDA_FRACTION,
                &Method::ista_config(),
            ),
            Method::Uista => {
                let model = self
                    .uista
                    .as_ref()
                    .ok_or_else(|| Error::Experiment("uista requires weights".into()))?;
                let obs = apply_mask(&af_direct(z), model.op().mask())?;
                model.reconstruct(&obs)
            }
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run the sweep. Every trial seeds its own noise from
/// `(spec.seed, case, SNR value, run)`, so results depend neither on thread
/// scheduling nor on the rest of the grid. `weights` overrides `spec.weights`.
pub fn run_experiment(spec: &ExperimentSpec, weights: Option<&Path>) -> Result<Vec<ExperimentRow>> {
    spec.validate()?;
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();

    let weights = weights
        .map(Path::to_path_buf)
        .or_else(|| spec.weights.clone());
    let bundle = if methods.contains(&Method::Uista) {
        let path = weights.ok_or_else(|| Error::Experiment("uista requires weights".into()))?;
        Some(WeightBundle::load(&path)?)
    } else {
        None
    };

    let mut rows = Vec::new();
    for (ci, case) in spec.cases.iter().enumerate() {
        let mixture = case.mixture()?;
        mixture.validate()?;
        let reference = ideal_tfd(&mixture)?;
        let recon = Reconstructors::new(mixture.n, bundle.as_ref())?;
        let label = case.label(ci);
        for &snr in &spec.snr_grid {
            let noisy = mixture.clone().with_snr(Some(snr));
            let trials: Vec<Vec<f64>> = (0..spec.runs)
                .into_par_iter()
                .map(|run| -> Result<Vec<f64>> {
                    let seed =
                        derive_seed(spec.seed, &[case.stream(ci), snr.to_bits(), run as u64]);
                    let z = synthesize(&noisy, seed)?;
                    methods
                        .iter()
                        .map(|&m| nmse_normalized(&recon.run(m, &z)?, &reference))
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (mi, &method) in methods.iter().enumerate() {
                let values: Vec<f64> = trials.iter().map(|t| t[mi]).collect();
                let (mean, std) = mean_std(&values);
                rows.push(ExperimentRow {
                    case: label.clone(),
                    snr_db: snr,
                    method,
                    mean_nmse_db: mean,
                    std_nmse_db: std,
                    runs: spec.runs,
                });
            }
            log::info!("case {label} snr {snr} dB done");
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv_line());
    }
    out
}

pub fn run_experiment_csv(spec: &ExperimentSpec, weights: Option<&Path>) -> Result<String> {
    Ok(rows_to_csv(&run_experiment(spec, weights)?))
}
