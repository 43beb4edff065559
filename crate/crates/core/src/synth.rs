//! Deterministic synthetic series generators for the desk-scale test and
//! acceptance suites.

use crate::data::SeriesMatrix;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Channel i = sin(2π t / pᵢ) + noise, distinct periods.
    Sinusoids,
    /// Channel 0 is a standardized random smooth walk; channel i is the
    /// same walk shifted by i steps, plus noise. High cross-channel
    /// dependency by construction.
    LaggedCopies,
    /// i.i.d. Gaussian per channel.
    IndependentNoise,
}

impl SynthKind {
    pub fn parse(s: &str) -> Result<SynthKind> {
        match s {
            "sinusoids" => Ok(SynthKind::Sinusoids),
            "lagged-copies" => Ok(SynthKind::LaggedCopies),
            "independent-noise" => Ok(SynthKind::IndependentNoise),
            other => Err(Error::Config(format!(
                "unknown synth kind {:?} (expected sinusoids, lagged-copies, independent-noise)",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n_channels: usize,
    pub length: usize,
    pub noise_std: f64,
    pub seed: u64,
}

/// Pure function of the spec: identical specs yield identical series.
pub fn generate(spec: &SynthSpec) -> Result<SeriesMatrix> {
    if spec.n_channels == 0 || spec.length == 0 {
        return Err(Error::Config("synth spec needs ≥ 1 channel and ≥ 1 step".into()));
    }
    if spec.noise_std < 0.0 {
        return Err(Error::Config(format!("noise_std must be ≥ 0, got {}", spec.noise_std)));
    }
    let c = spec.n_channels;
    let t = spec.length;
    let mut rng = Rng::new(spec.seed);
    let mut values = vec![0.0; c * t];
    match spec.kind {
        SynthKind::Sinusoids => {
            for ch in 0..c {
                let period = 24.0 + 11.0 * ch as f64;
                for step in 0..t {
                    let base = (2.0 * std::f64::consts::PI * step as f64 / period).sin();
                    values[ch * t + step] = base + rng.normal(0.0, spec.noise_std);
                }
            }
        }
        SynthKind::LaggedCopies => {
            let max_lag = c - 1;
            let base = smooth_walk(t + max_lag, &mut rng);
            for ch in 0..c {
                for step in 0..t {
                    values[ch * t + step] =
                        base[max_lag - ch + step] + rng.normal(0.0, spec.noise_std);
                }
            }
        }
        SynthKind::IndependentNoise => {
            let std = if spec.noise_std > 0.0 { spec.noise_std } else { 1.0 };
            for v in values.iter_mut() {
                *v = rng.normal(0.0, std);
            }
        }
    }
    let names = (0..c).map(|i| format!("ch{}", i)).collect();
    SeriesMatrix::new(values, c, t, names, "synthetic", &format!("synth:{:?}", spec.kind))
}

/// Cumulative sum of unit Gaussian steps, standardized to mean 0, std 1.
fn smooth_walk(len: usize, rng: &mut Rng) -> Vec<f64> {
    let mut walk = Vec::with_capacity(len);
    let mut acc = 0.0;
    for _ in 0..len {
        acc += rng.normal(0.0, 1.0);
        walk.push(acc);
    }
    let mean = walk.iter().sum::<f64>() / len as f64;
    let var = walk.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / len as f64;
    let std = var.sqrt().max(1e-12);
    for v in walk.iter_mut() {
        *v = (*v - mean) / std;
    }
    walk
}
