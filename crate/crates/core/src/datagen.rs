//! Synthetic odors and noise.
//!
//! A series starts from a nonnegative base odor of unit Euclidean norm and
//! walks away from it in steps of exactly `inter_odor_distance`. The whole
//! series is then multiplied by `amplitude`, which puts raw responses on the
//! same scale as the noise models.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, SkewNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labelled raw sensor vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub label: String,
    pub concentration: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdorSeriesSpec {
    pub dimension: usize,
    pub n_similar: usize,
    pub inter_odor_distance: f64,
    pub include_nonoverlapping: bool,
    pub skew_shape: f64,
    pub amplitude: f64,
    pub rng_seed: u64,
}

impl Default for OdorSeriesSpec {
    fn default() -> Self {
        Self {
            dimension: 20,
            n_similar: 4,
            inter_odor_distance: 0.5,
            include_nonoverlapping: true,
            skew_shape: 4.0,
            amplitude: 50.0,
            rng_seed: 0,
        }
    }
}

impl OdorSeriesSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.n_similar == 0 {
            return Err(Error::Config("odor series needs dimension >= 1 and n_similar >= 1".into()));
        }
        if !(self.inter_odor_distance >= 0.0 && self.inter_odor_distance.is_finite()) {
            return Err(Error::Config("inter_odor_distance must be finite and >= 0".into()));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::Config("amplitude must be positive".into()));
        }
        Ok(())
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn clipped_step(prev: &[f64], dir: &[f64], lambda: f64) -> Vec<f64> {
    prev.iter().zip(dir).map(|(p, x)| (p + lambda * x).max(0.0)).collect()
}

/// Steps from `prev` along `dir` so that the clipped result lies exactly
/// `distance` away. The realized distance is nondecreasing in the step size,
/// so bisection applies.
fn step_exact(prev: &[f64], dir: &[f64], distance: f64) -> Vec<f64> {
    if distance == 0.0 {
        return prev.to_vec();
    }
    let reach = |lambda: f64| l2(&clipped_step(prev, dir, lambda), prev);
    let mut hi = 1.0;
    while reach(hi) < distance {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reach(mid) < distance {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clipped_step(prev, dir, hi)
}

/// Generates `n_similar` sequentially similar odors, optionally followed by a
/// non-overlapping control that permutes the base odor's values.
pub fn generate_series(spec: &OdorSeriesSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let d = spec.dimension;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut base: Vec<f64> = (0..d).map(|_| f64::abs(normal.sample(&mut rng))).collect();
    let norm = base.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        base[0] = 1.0;
    } else {
        base.iter_mut().for_each(|x| *x /= norm);
    }
    let skew = SkewNormal::new(0.0, 1.0, spec.skew_shape)
        .map_err(|e| Error::Config(format!("skew-normal step: {e}")))?;
    let mut unit = vec![base.clone()];
    while unit.len() < spec.n_similar {
        let prev = unit.last().expect("non-empty");
        let mut dir: Vec<f64> = (0..d).map(|_| skew.sample(&mut rng)).collect();
        if dir.iter().all(|&x| x == 0.0) {
            dir[0] = 1.0;
        }
        let next = step_exact(prev, &dir, spec.inter_odor_distance);
        unit.push(next);
    }
    if spec.include_nonoverlapping {
        let mut shuffled = base.clone();
        shuffled.shuffle(&mut rng);
        unit.push(shuffled);
    }
    Ok(unit
        .into_iter()
        .enumerate()
        .map(|(i, v)| Sample {
            label: format!("odor{i}"),
            concentration: 1.0,
            values: v.into_iter().map(|x| x * spec.amplitude).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Impulse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub mean: f64,
    pub std: f64,
    pub occlusion: f64,
    pub impulse_low: f64,
    pub impulse_high: f64,
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            mean: 0.0,
            std: 6.0,
            occlusion: 0.5,
            impulse_low: 0.0,
            impulse_high: 20.0,
            rng_seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.occlusion) {
            return Err(Error::Config("occlusion must lie in [0, 1]".into()));
        }
        if self.kind == NoiseKind::Gaussian && !(self.std > 0.0) {
            return Err(Error::Config("gaussian noise needs std > 0".into()));
        }
        if self.kind == NoiseKind::Impulse && !(self.impulse_low < self.impulse_high) {
            return Err(Error::Config("impulse range must be non-empty".into()));
        }
        Ok(())
    }
}

fn occluded(rng: &mut ChaCha8Rng, d: usize, occlusion: f64) -> Vec<usize> {
    let n = (occlusion * d as f64 + 1e-9).floor() as usize;
    rand::seq::index::sample(rng, d, n.min(d)).into_vec()
}

pub fn add_gaussian_noise(sample: &[f64], spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(spec.mean, spec.std).expect("validated std");
    let mut out = sample.to_vec();
    for i in occluded(rng, sample.len(), spec.occlusion) {
        out[i] = (out[i] + normal.sample(rng)).max(0.0);
    }
    out
}

pub fn add_impulse_noise(sample: &[f64], spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let uniform = Uniform::new(spec.impulse_low, spec.impulse_high).expect("validated range");
    let mut out = sample.to_vec();
    for i in occluded(rng, sample.len(), spec.occlusion) {
        out[i] = uniform.sample(rng).max(0.0);
    }
    out
}

pub fn add_noise(sample: &[f64], spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match spec.kind {
        NoiseKind::Gaussian => add_gaussian_noise(sample, spec, rng),
        NoiseKind::Impulse => add_impulse_noise(sample, spec, rng),
    }
}

/// Each training odor followed by `n_noisy` noisy copies of it. `None`
/// returns only the clean odors.
pub fn build_test_suite(train: &[Sample], noise: Option<&NoiseSpec>, n_noisy: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(train.len() * (n_noisy + 1));
    let Some(spec) = noise else {
        return Ok(train.to_vec());
    };
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    for odor in train {
        out.push(odor.clone());
        for _ in 0..n_noisy {
            out.push(Sample {
                label: odor.label.clone(),
                concentration: odor.concentration,
                values: add_noise(&odor.values, spec, &mut rng),
            });
        }
    }
    Ok(out)
}

/// Forty raw samples from deliberately mismatched distributions: folded
/// normals, the same at other concentrations, uniform, power, Poisson,
/// Rayleigh, linear ramps and three degenerate profiles.
pub fn wild_samples(dimension: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dimension;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(40);
    let means = [5.0, 20.0, 60.0];
    let spreads = [0.1, 0.5, 1.0];
    for &m in &means {
        for &s in &spreads {
            let n = Normal::new(m, m * s).expect("positive std");
            out.push((0..d).map(|_| f64::abs(n.sample(&mut rng))).collect());
        }
    }
    let concentrations = [0.1, 3.0, 10.0];
    for i in 0..9 {
        let c = concentrations[i % 3];
        let scaled = out[i].iter().map(|x| x * c).collect();
        out.push(scaled);
    }
    for &m in &means {
        let u = Uniform::new(0.0, 2.0 * m).expect("non-empty");
        out.push((0..d).map(|_| u.sample(&mut rng)).collect());
    }
    for &a in &[0.5, 2.0, 5.0] {
        out.push((0..d).map(|_| 100.0 * rng.random::<f64>().powf(1.0 / a)).collect());
    }
    for &lambda in &[1.0, 5.0, 10.0, 20.0, 50.0] {
        let p = Poisson::new(lambda).expect("positive mean");
        out.push((0..d).map(|_| p.sample(&mut rng)).collect());
    }
    for &sigma in &[2.0, 10.0, 40.0] {
        out.push(
            (0..d)
                .map(|_| {
                    let u: f64 = rng.random::<f64>();
                    sigma * (-2.0 * (1.0 - u).ln()).sqrt()
                })
                .collect(),
        );
    }
    for &m in &[0.05, 0.2, 0.5, 1.0, 2.0] {
        out.push((0..d).map(|x| m * x as f64).collect());
    }
    out.push(vec![200.0; d]);
    let quarter = d / 4;
    out.push((0..d).map(|i| if i < quarter { 5.0 } else { 0.0 }).collect());
    let three_quarters = 3 * d / 4;
    out.push((0..d).map(|i| if i < three_quarters { 5.0 } else { 0.0 }).collect());
    out.into_iter()
        .enumerate()
        .map(|(i, values)| Sample {
            label: format!("wild{}", i + 1),
            concentration: 1.0,
            values,
        })
        .collect()
}

/// Writes samples in the canonical CSV layout:
/// `label,concentration,s0,...,s{d-1}`.
pub fn write_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    let d = samples.first().map(|s| s.values.len()).unwrap_or(0);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "label,concentration")?;
    for i in 0..d {
        write!(f, ",s{i}")?;
    }
    writeln!(f)?;
    for s in samples {
        if s.values.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: s.values.len(),
            });
        }
        write!(f, "{},{}", s.label, s.concentration)?;
        for v in &s.values {
            write!(f, ",{v}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}
