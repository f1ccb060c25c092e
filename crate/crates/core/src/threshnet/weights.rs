//! `.uwb` weight bundles.
//!
//! Layout: the magic `UWB1`, a little-endian u32 manifest length, the JSON
//! manifest, then a blob of little-endian f32 tensors. Tensor offsets are
//! byte offsets from the start of the blob and `len` counts f32 elements.
//! Tensor names are `block{k}.{layer}.weight` / `block{k}.{layer}.bias`.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Conv, UNetArch, UNetParams};
use crate::io::{read_bytes, write_bytes};
use crate::measure::MaskSpec;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UWB1";
pub const FORMAT_VERSION: u32 = 1;

/// What the threshold block sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdInput {
    /// The gradient-step output before shrinkage.
    #[default]
    #[serde(rename = "pre_threshold")]
    PreThreshold,
    /// The previous iterate.
    #[serde(rename = "iterate")]
    Iterate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFlags {
    /// Divide the U-Net input by its max-abs and scale the output back by it.
    pub normalize: bool,
    pub threshold_input: ThresholdInput,
}

impl Default for InputFlags {
    fn default() -> Self {
        Self {
            normalize: true,
            threshold_input: ThresholdInput::PreThreshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalars {
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UwbManifest {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N_hint")]
    pub n_hint: usize,
    pub arch: UNetArch,
    #[serde(default)]
    pub flags: InputFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskSpec>,
    pub tensors: Vec<TensorEntry>,
    pub scalars: Scalars,
}

/// K per-iteration U-Nets and their step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub arch: UNetArch,
    pub n_hint: usize,
    pub mask: Option<MaskSpec>,
    pub flags: InputFlags,
    pub steps: Vec<f64>,
    pub blocks: Vec<UNetParams>,
}

impl WeightBundle {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// All-zero U-Nets with unit steps.
    pub fn zeros(arch: UNetArch, k: usize, n_hint: usize) -> Self {
        let blocks = (0..k).map(|_| UNetParams::zeros(&arch)).collect();
        Self {
            arch,
            n_hint,
            mask: None,
            flags: InputFlags::default(),
            steps: vec![1.0; k],
            blocks,
        }
    }

    /// Seeded weights drawn uniformly from `+-1/sqrt(fan_in)`, unit steps.
    /// Used as a fixture when no trained bundle is available.
    pub fn seeded(arch: UNetArch, k: usize, n_hint: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (0..k)
            .map(|_| {
                let mut draw = |spec: &super::LayerSpec| {
                    let fan_in = (spec.in_channels * spec.kernel * spec.kernel) as f32;
                    let bound = fan_in.sqrt().recip();
                    rng.random_range(-bound..bound)
                };
                let convs = arch
                    .layers()
                    .into_iter()
                    .map(|spec| {
                        let wn = spec.out_channels * spec.in_channels * spec.kernel * spec.kernel;
                        let weight = (0..wn).map(|_| draw(&spec)).collect();
                        let bias = (0..spec.out_channels).map(|_| draw(&spec)).collect();
                        Conv { spec, weight, bias }
                    })
                    .collect();
                UNetParams { convs }
            })
            .collect();
        Self {
            arch,
            n_hint,
            mask: None,
            flags: InputFlags::default(),
            steps: vec![1.0; k],
            blocks,
        }
    }

    /// Every kernel entry set to `weight`, every bias to `bias`.
    pub fn constant(arch: UNetArch, k: usize, n_hint: usize, weight: f32, bias: f32) -> Self {
        let blocks = (0..k)
            .map(|_| UNetParams::from_fn(&arch, |_| weight, |_| bias))
            .collect();
        Self {
            arch,
            n_hint,
            mask: None,
            flags: InputFlags::default(),
            steps: vec![1.0; k],
            blocks,
        }
    }

    pub fn with_steps(mut self, steps: Vec<f64>) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_flags(mut self, flags: InputFlags) -> Self {
        self.flags = flags;
        self
    }

    pub fn with_mask(mut self, mask: MaskSpec) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn manifest(&self) -> UwbManifest {
        let mut tensors = Vec::new();
        let mut offset = 0;
        for (b, block) in self.blocks.iter().enumerate() {
            for conv in &block.convs {
                for (suffix, shape, len) in [
                    ("weight", conv.spec.weight_shape(), conv.weight.len()),
                    ("bias", vec![conv.spec.out_channels], conv.bias.len()),
                ] {
                    tensors.push(TensorEntry {
                        name: format!("block{b}.{}.{suffix}", conv.spec.name),
                        shape,
                        dtype: "f32".into(),
                        offset,
                        len,
                    });
                    offset += 4 * len;
                }
            }
        }
        UwbManifest {
            version: FORMAT_VERSION,
            k: self.blocks.len(),
            n_hint: self.n_hint,
            arch: self.arch.clone(),
            flags: self.flags,
            mask: self.mask,
            tensors,
            scalars: Scalars {
                t: self.steps.clone(),
            },
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.manifest())?;
        let header_len = u32::try_from(header.len())
            .map_err(|_| Error::Manifest("manifest exceeds 4 GiB".into()))?;
        let mut out = Vec::with_capacity(8 + header.len() + 4 * self.parameter_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for block in &self.blocks {
            for conv in &block.convs {
                for v in conv.weight.iter().chain(&conv.bias) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(UNetParams::parameter_count).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated {
                expected: 8,
                actual: bytes.len(),
            });
        }
        let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
        if &magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let header_len = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        let blob_start = 8 + header_len;
        if bytes.len() < blob_start {
            return Err(Error::Truncated {
                expected: blob_start,
                actual: bytes.len(),
            });
        }
        let manifest: UwbManifest = serde_json::from_slice(&bytes[8..blob_start])?;
        if manifest.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: manifest.version,
                expected: FORMAT_VERSION,
            });
        }
        manifest.arch.validate()?;
        if manifest.k == 0 {
            return Err(Error::Manifest("K must be at least 1".into()));
        }
        if manifest.scalars.t.len() != manifest.k {
            return Err(Error::Manifest(format!(
                "expected {} step scalars, found {}",
                manifest.k,
                manifest.scalars.t.len()
            )));
        }
        if let Some(i) = manifest.scalars.t.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFiniteTensor(format!("scalars.t[{i}]")));
        }
        if let Some(mask) = manifest.mask {
            mask.validate(manifest.n_hint)?;
        }

        let blob = &bytes[blob_start..];
        let needed = manifest
            .tensors
            .iter()
            .map(|t| t.offset + 4 * t.len)
            .max()
            .unwrap_or(0);
        if blob.len() < needed {
            return Err(Error::Truncated {
                expected: blob_start + needed,
                actual: bytes.len(),
            });
        }

        let mut by_name: HashMap<&str, &TensorEntry> = HashMap::new();
        for entry in &manifest.tensors {
            if by_name.insert(entry.name.as_str(), entry).is_some() {
                return Err(Error::Manifest(format!(
                    "duplicate tensor `{}`",
                    entry.name
                )));
            }
        }
        let read = |name: &str, shape: Vec<usize>| -> Result<Vec<f32>> {
            let entry = by_name
                .get(name)
                .ok_or_else(|| Error::Manifest(format!("missing tensor `{name}`")))?;
            if entry.dtype != "f32" {
                return Err(Error::Manifest(format!(
                    "tensor `{name}` has dtype `{}`, expected f32",
                    entry.dtype
                )));
            }
            if entry.shape != shape || entry.len != shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: shape,
                    actual: entry.shape.clone(),
                });
            }
            if entry.offset % 4 != 0 {
                return Err(Error::Manifest(format!(
                    "tensor `{name}` offset is not 4-aligned"
                )));
            }
            let values: Vec<f32> = blob[entry.offset..entry.offset + 4 * entry.len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteTensor(name.to_string()));
            }
            Ok(values)
        };

        let layers = manifest.arch.layers();
        let mut blocks = Vec::with_capacity(manifest.k);
        for b in 0..manifest.k {
            let mut convs = Vec::with_capacity(layers.len());
            for spec in &layers {
                let weight = read(
                    &format!("block{b}.{}.weight", spec.name),
                    spec.weight_shape(),
                )?;
                let bias = read(
                    &format!("block{b}.{}.bias", spec.name),
                    vec![spec.out_channels],
                )?;
                convs.push(Conv {
                    spec: spec.clone(),
                    weight,
                    bias,
                });
            }
            blocks.push(UNetParams { convs });
        }
        let expected_tensors = 2 * layers.len() * manifest.k;
        if manifest.tensors.len() != expected_tensors {
            return Err(Error::Manifest(format!(
                "manifest lists {} tensors, architecture defines {expected_tensors}",
                manifest.tensors.len()
            )));
        }

        Ok(Self {
            arch: manifest.arch,
            n_hint: manifest.n_hint,
            mask: manifest.mask,
            flags: manifest.flags,
            steps: manifest.scalars.t,
            blocks,
        })
    }
}
