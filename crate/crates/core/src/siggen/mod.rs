//! Synthetic non-stationary test signals.
//!
//! Components are linear FM (LFM) or sinusoidal FM (SFM) cosines, optionally
//! shaped by the envelope `a(n) = exp(-(0.0016 n - 1)^2 pi)`. A mixture is
//! summed as a real signal, white Gaussian noise is added at the requested
//! SNR, and the result is converted to its discrete analytic signal.

mod dataset;

pub use dataset::{
    load_sample, make_dataset, random_mixture, DatasetConfig, DatasetManifest, DatasetSample,
    SampleMeta,
};

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::tfcore::TfMatrix;
use crate::{Error, Result, C64};

/// Complex analytic time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSignal(Vec<C64>);

impl DiscreteSignal {
    pub fn new(samples: Vec<C64>) -> Self {
        Self(samples)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn samples(&self) -> &[C64] {
        &self.0
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|v| v.norm_sqr()).sum()
    }
}

impl From<Vec<C64>> for DiscreteSignal {
    fn from(v: Vec<C64>) -> Self {
        Self(v)
    }
}

/// Frequency law of a single component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Modulation {
    /// Phase `2 pi (chirp_rate (n^2 - t0^2) + start_freq (n - t0))`.
    Lfm { chirp_rate: f64, start_freq: f64 },
    /// Phase `carrier (n - t0) + depth sin(rate (n - t0) - phase) - offset_depth sin(phase)`.
    /// `carrier` and `rate` are in radians/sample.
    Sfm {
        carrier: f64,
        depth: f64,
        rate: f64,
        phase: f64,
        offset_depth: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    #[serde(flatten)]
    pub modulation: Modulation,
    pub am: bool,
}

impl ComponentSpec {
    pub fn lfm(chirp_rate: f64, start_freq: f64) -> Self {
        Self {
            modulation: Modulation::Lfm {
                chirp_rate,
                start_freq,
            },
            am: false,
        }
    }

    /// SFM whose constant phase term uses the modulation depth.
    pub fn sfm(carrier: f64, depth: f64, rate: f64, phase: f64) -> Self {
        Self {
            modulation: Modulation::Sfm {
                carrier,
                depth,
                rate,
                phase,
                offset_depth: depth,
            },
            am: false,
        }
    }

    pub fn with_am(mut self, am: bool) -> Self {
        self.am = am;
        self
    }

    pub fn phase(&self, n: f64, t0: f64) -> f64 {
        match self.modulation {
            Modulation::Lfm {
                chirp_rate,
                start_freq,
            } => 2.0 * PI * (chirp_rate * (n * n - t0 * t0) + start_freq * (n - t0)),
            Modulation::Sfm {
                carrier,
                depth,
                rate,
                phase,
                offset_depth,
            } => {
                carrier * (n - t0) + depth * (rate * (n - t0) - phase).sin()
                    - offset_depth * phase.sin()
            }
        }
    }

    /// Instantaneous frequency in cycles/sample.
    pub fn instantaneous_frequency(&self, n: f64, t0: f64) -> f64 {
        match self.modulation {
            Modulation::Lfm {
                chirp_rate,
                start_freq,
            } => 2.0 * chirp_rate * n + start_freq,
            Modulation::Sfm {
                carrier,
                depth,
                rate,
                phase,
                ..
            } => (carrier + depth * rate * (rate * (n - t0) - phase).cos()) / (2.0 * PI),
        }
    }

    pub fn envelope(&self, n: f64) -> f64 {
        if self.am {
            am_envelope(n)
        } else {
            1.0
        }
    }
}

/// `exp(-(0.0016 n - 1)^2 pi)`
pub fn am_envelope(n: f64) -> f64 {
    let u = 0.0016 * n - 1.0;
    (-u * u * PI).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<ComponentSpec>,
    pub n: usize,
    pub t0: usize,
    /// `None` for a clean signal.
    pub snr_db: Option<f64>,
}

impl MixtureSpec {
    pub fn clean(components: Vec<ComponentSpec>, n: usize, t0: usize) -> Self {
        Self {
            components,
            n,
            t0,
            snr_db: None,
        }
    }

    pub fn with_snr(mut self, snr_db: Option<f64>) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 16 || !self.n.is_power_of_two() {
            return Err(Error::InvalidSpec(format!(
                "N must be a power of two >= 16, got {}",
                self.n
            )));
        }
        if self.t0 >= self.n {
            return Err(Error::InvalidSpec(format!(
                "t0 must lie in [0, {}), got {}",
                self.n, self.t0
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidSpec(format!("SNR must be finite, got {snr}")));
            }
        }
        let t0 = self.t0 as f64;
        for (c, comp) in self.components.iter().enumerate() {
            for s in 0..self.n {
                let f = comp.instantaneous_frequency(s as f64, t0);
                if !(0.0..0.5).contains(&f) {
                    return Err(Error::OutOfBand {
                        component: c,
                        sample: s,
                        frequency: f,
                    });
                }
            }
        }
        Ok(())
    }
}

/// The five two-component mixtures used for evaluation (N=128, t0=64, AM on).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkCase {
    /// Two far-located LFMs.
    Case1,
    /// Two closely-located LFMs.
    Case2,
    /// Two crossing LFMs.
    Case3,
    /// Non-overlapped LFM and SFM.
    Case4,
    /// Overlapped LFM and SFM.
    Case5,
}

impl BenchmarkCase {
    pub const ALL: [BenchmarkCase; 5] = [
        BenchmarkCase::Case1,
        BenchmarkCase::Case2,
        BenchmarkCase::Case3,
        BenchmarkCase::Case4,
        BenchmarkCase::Case5,
    ];

    pub fn from_number(k: u8) -> Option<Self> {
        Self::ALL.get(usize::from(k).checked_sub(1)?).copied()
    }

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn components(self) -> [ComponentSpec; 2] {
        let [a, b] = match self {
            BenchmarkCase::Case1 => [
                ComponentSpec::lfm(0.0002, 0.441),
                ComponentSpec::lfm(0.0004, 0.133),
            ],
            BenchmarkCase::Case2 => [
                ComponentSpec::lfm(-0.0003, 0.3164),
                ComponentSpec::lfm(0.0001, 0.211),
            ],
            BenchmarkCase::Case3 => [
                ComponentSpec::lfm(-0.0006, 0.29),
                ComponentSpec::lfm(0.0011, 0.109),
            ],
            BenchmarkCase::Case4 => [
                ComponentSpec::lfm(0.0002, 0.297),
                ComponentSpec::sfm(0.27 * PI, 9.98, 0.0156 * PI, -1.403),
            ],
            BenchmarkCase::Case5 => [
                ComponentSpec::lfm(-0.0004, 0.117),
                ComponentSpec {
                    // the constant term carries 0.0156, not the modulation depth
                    modulation: Modulation::Sfm {
                        carrier: 0.42 * PI,
                        depth: 15.9,
                        rate: 0.0156 * PI,
                        phase: -1.832,
                        offset_depth: 0.0156,
                    },
                    am: false,
                },
            ],
        };
        [a.with_am(true), b.with_am(true)]
    }

    pub fn spec(self) -> MixtureSpec {
        MixtureSpec::clean(self.components().to_vec(), 128, 64)
    }
}

/// Clean real mixture and the noise that was added to it.
#[derive(Debug, Clone)]
pub struct RealMixture {
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
}

impl RealMixture {
    pub fn noisy(&self) -> Vec<f64> {
        self.clean
            .iter()
            .zip(&self.noise)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Real mixture plus seeded white Gaussian noise, before the analytic transform.
pub fn synthesize_real(spec: &MixtureSpec, seed: u64) -> Result<RealMixture> {
    spec.validate()?;
    let t0 = spec.t0 as f64;
    let clean: Vec<f64> = (0..spec.n)
        .map(|s| {
            let t = s as f64;
            spec.components
                .iter()
                .map(|c| c.envelope(t) * c.phase(t, t0).cos())
                .sum()
        })
        .collect();
    let noise = match spec.snr_db {
        Some(snr) => {
            let power = clean.iter().map(|v| v * v).sum::<f64>() / spec.n as f64;
            let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match Normal::new(0.0, sigma) {
                Ok(normal) => (0..spec.n).map(|_| normal.sample(&mut rng)).collect(),
                Err(_) => vec![0.0; spec.n],
            }
        }
        None => vec![0.0; spec.n],
    };
    Ok(RealMixture { clean, noise })
}

/// Analytic signal of the (noisy) mixture.
pub fn synthesize(spec: &MixtureSpec, seed: u64) -> Result<DiscreteSignal> {
    let mix = synthesize_real(spec, seed)?;
    Ok(analytic(&mix.noisy()))
}

/// Discrete analytic signal: negative bins zeroed, positive bins doubled,
/// DC and Nyquist kept.
pub fn analytic(x: &[f64]) -> DiscreteSignal {
    let n = x.len();
    if n == 0 {
        return DiscreteSignal::new(Vec::new());
    }
    let mut planner = FftPlanner::new();
    let mut spec: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let half = n / 2;
    for (k, v) in spec.iter_mut().enumerate() {
        if k == 0 || (n.is_multiple_of(2) && k == half) {
            continue;
        }
        if k <= (n - 1) / 2 {
            *v *= 2.0;
        } else {
            *v = C64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    let scale = 1.0 / n as f64;
    DiscreteSignal::new(spec.into_iter().map(|v| v * scale).collect())
}

/// Frequency bin of an instantaneous frequency under the WVD's `m/(2N)` axis.
pub fn ridge_bin(frequency: f64, n: usize) -> usize {
    let b = (2.0 * frequency * n as f64).round() as i64;
    b.rem_euclid(n as i64) as usize
}

/// Ground-truth distribution: one bin per column per component at the
/// instantaneous frequency, weighted by the squared envelope. Noise is ignored.
pub fn ideal_tfd(spec: &MixtureSpec) -> Result<TfMatrix> {
    spec.clone().with_snr(None).validate()?;
    let n = spec.n;
    let t0 = spec.t0 as f64;
    let mut out = TfMatrix::zeros(n);
    for comp in &spec.components {
        for s in 0..n {
            let t = s as f64;
            let m = ridge_bin(comp.instantaneous_frequency(t, t0), n);
            let amp = comp.envelope(t).powi(2);
            out.set(m, s, out.get(m, s) + amp);
        }
    }
    Ok(out)
}

/// SplitMix64 finalizer applied over a stream of words; used to derive
/// per-sample and per-trial seeds.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    stream.iter().fold(mix(base), |acc, &w| mix(acc ^ mix(w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_chirp_is_complex_exponential() {
        let spec = MixtureSpec::clean(vec![ComponentSpec::lfm(0.0, 0.25)], 128, 64);
        let z = synthesize(&spec, 0).unwrap();
        for (t, v) in z.samples().iter().enumerate() {
            let expected = C64::from_polar(1.0, 2.0 * PI * 0.25 * (t as f64 - 64.0));
            assert!((v - expected).norm() < 1e-12, "n={t}");
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_band_component_is_named() {
        let spec = MixtureSpec::clean(
            vec![ComponentSpec::lfm(0.0, 0.2), ComponentSpec::lfm(0.001, 0.3)],
            128,
            64,
        );
        match synthesize(&spec, 0) {
            Err(Error::OutOfBand { component, .. }) => assert_eq!(component, 1),
            other => panic!("expected out-of-band error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let comps = vec![ComponentSpec::lfm(0.0, 0.2)];
        assert!(MixtureSpec::clean(comps.clone(), 100, 10)
            .validate()
            .is_err());
        assert!(MixtureSpec::clean(comps.clone(), 8, 1).validate().is_err());
        assert!(MixtureSpec::clean(comps, 64, 64).validate().is_err());
    }

    #[test]
    fn benchmark_cases_stay_in_band() {
        for case in BenchmarkCase::ALL {
            case.spec().validate().unwrap();
            assert_eq!(BenchmarkCase::from_number(case.number()), Some(case));
        }
        assert_eq!(BenchmarkCase::from_number(0), None);
        assert_eq!(BenchmarkCase::from_number(6), None);
    }

    #[test]
    fn constant_tone_ideal_is_single_row() {
        let spec = MixtureSpec::clean(vec![ComponentSpec::lfm(0.0, 0.25)], 128, 64);
        let ideal = ideal_tfd(&spec).unwrap();
        for t in 0..128 {
            for m in 0..128 {
                let expected = if m == 64 { 1.0 } else { 0.0 };
                assert_eq!(ideal.get(m, t), expected);
            }
        }
    }

    #[test]
    fn envelope_rises_over_the_window() {
        for t in 1..128 {
            assert!(am_envelope(t as f64) > am_envelope(t as f64 - 1.0));
        }
        assert!((am_envelope(625.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
    }
}
