use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Series;
use crate::error::{Error, Result};

const PERIOD: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    SineNoise,
    TrendSeasonal,
    RandomWalk,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::SineNoise => "sine",
            SynthKind::TrendSeasonal => "trend",
            SynthKind::RandomWalk => "walk",
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sine" | "sine+noise" | "sine_noise" => Ok(SynthKind::SineNoise),
            "trend" | "trend+seasonal" | "trend_seasonal" => Ok(SynthKind::TrendSeasonal),
            "walk" | "random-walk" | "random_walk" => Ok(SynthKind::RandomWalk),
            other => Err(Error::Config(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

/// Generates `features` driver columns `x0..` plus a `target` column equal to
/// the mean of the drivers one step earlier, with additive Gaussian noise of
/// standard deviation `noise` on every column.
pub fn synth_series(
    kind: SynthKind,
    length: usize,
    features: usize,
    noise: f64,
    seed: u64,
) -> Result<Series> {
    if length < 64 {
        return Err(Error::Sizing(format!("synthetic length {length} < 64")));
    }
    if features == 0 {
        return Err(Error::Config("synthetic series needs >= 1 feature".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("noise {noise} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };

    let phases: Vec<f64> = (0..features).map(|_| gauss() * PI).collect();
    let slopes: Vec<f64> = (0..features).map(|_| 1.0 + 0.5 * gauss()).collect();
    let clean = |j: usize, t: f64| -> f64 {
        let harmonic = (j + 1) as f64;
        match kind {
            SynthKind::SineNoise => (2.0 * PI * harmonic * t / PERIOD + phases[j]).sin(),
            SynthKind::TrendSeasonal => {
                slopes[j] * t / length as f64 + 0.5 * (2.0 * PI * harmonic * t / PERIOD + phases[j]).sin()
            }
            SynthKind::RandomWalk => 0.0,
        }
    };

    let cols = features + 1;
    let mut values = vec![0.0; length * cols];
    let mut walk = vec![0.0; features];
    let mut prev: Vec<f64> = (0..features).map(|j| clean(j, -1.0)).collect();
    for t in 0..length {
        let row = &mut values[t * cols..(t + 1) * cols];
        row[features] = prev.iter().sum::<f64>() / features as f64 + noise * gauss();
        for j in 0..features {
            let v = match kind {
                SynthKind::RandomWalk => {
                    walk[j] += 0.1 * gauss();
                    walk[j]
                }
                _ => clean(j, t as f64),
            };
            row[j] = v + noise * gauss();
            prev[j] = row[j];
        }
    }
    let mut columns: Vec<String> = (0..features).map(|j| format!("x{j}")).collect();
    columns.push("target".into());
    Series::new(columns, values, features)
}
