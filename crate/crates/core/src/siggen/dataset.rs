//! Training/evaluation datasets on disk.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/<i>.json    sample metadata
//! <dir>/<i>.obs     observation a', little-endian f32 interleaved (re, im), 2M values
//! <dir>/<i>.ideal   ideal distribution, little-endian f32, N*N column-major
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, ideal_tfd, synthesize, BenchmarkCase, ComponentSpec, MixtureSpec};
use crate::io::{
    complex_f32_bytes, f32_bytes, parse_complex_f32, parse_f32, read_bytes, write_bytes,
};
use crate::measure::{apply_mask, MaskSpec};
use crate::tfcore::{af_direct, TfMatrix};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub count: usize,
    pub snr_range: (f64, f64),
    pub seed: u64,
    pub n: usize,
    pub t0: usize,
    pub mask: MaskSpec,
    /// Use this mixture for every sample instead of random ones.
    pub forced_case: Option<BenchmarkCase>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 200,
            snr_range: (5.0, 25.0),
            seed: 0,
            n: 128,
            t0: 64,
            mask: MaskSpec::WIDE,
            forced_case: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    /// Seed of the parameter draw.
    pub seed: u64,
    /// Seed passed to `synthesize` for the noise.
    pub noise_seed: u64,
    pub snr_db: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub mask: MaskSpec,
    /// Whether the two instantaneous-frequency laws cross or come within
    /// 0.02 cycles/sample of each other.
    pub overlapped: bool,
    pub spec: MixtureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub meta: String,
    pub obs: String,
    pub ideal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub count: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub t0: usize,
    pub mask: MaskSpec,
    pub snr_range: (f64, f64),
    pub seed: u64,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub meta: SampleMeta,
    pub observation: Vec<C64>,
    pub ideal: TfMatrix,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn random_component(rng: &mut ChaCha8Rng, n: usize) -> ComponentSpec {
    let am = rng.random_bool(0.5);
    if rng.random_bool(0.5) {
        let f0 = uniform(rng, 0.05, 0.45);
        let f_end = uniform(rng, 0.05, 0.45);
        let chirp_rate = (f_end - f0) / (2.0 * n as f64);
        ComponentSpec::lfm(chirp_rate, f0).with_am(am)
    } else {
        let center = uniform(rng, 0.1, 0.4);
        let rate = uniform(rng, 0.005, 0.03) * PI;
        let max_dev = 0.15f64.min(center - 0.02).min(0.48 - center);
        let dev = uniform(rng, 0.02, max_dev.max(0.02));
        // deviation in cycles/sample = depth * rate / (2 pi)
        let depth = dev * 2.0 * PI / rate;
        let phase = uniform(rng, -PI, PI);
        ComponentSpec::sfm(2.0 * PI * center, depth, rate, phase).with_am(am)
    }
}

/// One or two random LFM/SFM components whose frequency laws stay in
/// `[0.02, 0.48]` cycles/sample.
pub fn random_mixture(rng: &mut ChaCha8Rng, n: usize, t0: usize) -> MixtureSpec {
    let count = if rng.random_bool(0.5) { 1 } else { 2 };
    let components = (0..count).map(|_| random_component(rng, n)).collect();
    MixtureSpec::clean(components, n, t0)
}

fn overlapped(spec: &MixtureSpec) -> bool {
    if spec.components.len() < 2 {
        return false;
    }
    let t0 = spec.t0 as f64;
    let (a, b) = (&spec.components[0], &spec.components[1]);
    let diffs: Vec<f64> = (0..spec.n)
        .map(|s| a.instantaneous_frequency(s as f64, t0) - b.instantaneous_frequency(s as f64, t0))
        .collect();
    let crosses = diffs.windows(2).any(|w| w[0].signum() != w[1].signum());
    crosses || diffs.iter().any(|d| d.abs() < 0.02)
}

fn sample_paths(dir: &Path, index: usize) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{index}.json")),
        dir.join(format!("{index}.obs")),
        dir.join(format!("{index}.ideal")),
    )
}

fn build_sample(cfg: &DatasetConfig, index: usize) -> Result<DatasetSample> {
    let seed = derive_seed(cfg.seed, &[index as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = cfg.snr_range;
    let snr_db = uniform(&mut rng, lo, hi);
    let spec = match cfg.forced_case {
        Some(case) => {
            let mut s = case.spec();
            s.n = cfg.n;
            s.t0 = cfg.t0;
            s
        }
        None => random_mixture(&mut rng, cfg.n, cfg.t0),
    };
    let noisy = spec.clone().with_snr(Some(snr_db));
    let noise_seed = derive_seed(seed, &[0x6e6f697365]);
    let z = synthesize(&noisy, noise_seed)?;
    let observation = apply_mask(&af_direct(&z), cfg.mask)?;
    let ideal = ideal_tfd(&spec)?;
    Ok(DatasetSample {
        meta: SampleMeta {
            index,
            seed,
            noise_seed,
            snr_db,
            n: cfg.n,
            mask: cfg.mask,
            overlapped: overlapped(&spec),
            spec: noisy,
        },
        observation,
        ideal,
    })
}

/// Generate `cfg.count` samples into `out_dir` and write the manifest.
/// Per-sample seeds derive from `(cfg.seed, index)`, so output is identical
/// regardless of scheduling.
pub fn make_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if cfg.count == 0 {
        return Err(Error::EmptyDataset);
    }
    let (lo, hi) = cfg.snr_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidSpec(format!("bad SNR range [{lo}, {hi}]")));
    }
    cfg.mask.validate(cfg.n)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;

    (0..cfg.count)
        .into_par_iter()
        .try_for_each(|index| -> Result<()> {
            let sample = build_sample(cfg, index)?;
            let (meta, obs, ideal) = sample_paths(out_dir, index);
            write_bytes(&meta, &serde_json::to_vec_pretty(&sample.meta)?)?;
            write_bytes(&obs, &complex_f32_bytes(&sample.observation))?;
            write_bytes(&ideal, &f32_bytes(sample.ideal.as_slice().iter().copied()))?;
            Ok(())
        })?;

    let manifest = DatasetManifest {
        version: 1,
        count: cfg.count,
        n: cfg.n,
        t0: cfg.t0,
        mask: cfg.mask,
        snr_range: cfg.snr_range,
        seed: cfg.seed,
        samples: (0..cfg.count)
            .map(|index| ManifestEntry {
                index,
                meta: format!("{index}.json"),
                obs: format!("{index}.obs"),
                ideal: format!("{index}.ideal"),
            })
            .collect(),
    };
    write_bytes(
        &out_dir.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_sample(dir: &Path, index: usize) -> Result<DatasetSample> {
    let (meta_path, obs_path, ideal_path) = sample_paths(dir, index);
    let meta: SampleMeta = serde_json::from_slice(&read_bytes(&meta_path)?)?;
    let observation = parse_complex_f32(&read_bytes(&obs_path)?)?;
    if observation.len() != meta.mask.len() {
        return Err(Error::LengthMismatch {
            what: "observation",
            expected: meta.mask.len(),
            actual: observation.len(),
        });
    }
    let ideal = parse_f32(&read_bytes(&ideal_path)?)?;
    let ideal = TfMatrix::from_column_major(meta.n, ideal.into_iter().map(f64::from).collect())?;
    Ok(DatasetSample {
        meta,
        observation,
        ideal,
    })
}
