//! Input regularization: max scaling, intensity normalization, dimension
//! scaling and heterogeneous duplication onto sister mitral cells.
//!
//! The stages always run in the order of [`Preprocessor::stages`]. Intensity
//! normalization sits before every scale-sensitive step, which is what makes
//! the pipeline concentration tolerant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_max_current: f64,
    /// Sister mitral cells per glomerular column.
    pub duplication_factor: usize,
    pub et_weight_max: f64,
    pub et_input_scale: f64,
    /// Dimension the network was regularized at.
    pub reference_dimension: usize,
    /// Probability that an ET cell projects to a given MC slot, at the
    /// reference dimension.
    pub et_density: f64,
    /// Multiply normalized inputs by `d / k`; off only for comparisons.
    pub model_scaling: bool,
    pub rng_seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_max_current: 20.0,
            duplication_factor: 5,
            et_weight_max: 0.65,
            et_input_scale: 10.0,
            reference_dimension: 20,
            et_density: 0.4,
            model_scaling: true,
            rng_seed: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.duplication_factor == 0 {
            return Err(Error::Config("duplication_factor must be >= 1".into()));
        }
        if !(self.et_weight_max > 0.0) {
            return Err(Error::Config("et_weight_max must be > 0".into()));
        }
        if self.reference_dimension == 0 {
            return Err(Error::Config("reference_dimension must be >= 1".into()));
        }
        if !(self.target_max_current > 0.0) {
            return Err(Error::Config("target_max_current must be > 0".into()));
        }
        if !(self.et_density > 0.0 && self.et_density <= 1.0) {
            return Err(Error::Config("et_density must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Max scaling with a reference maximum frozen from a declared reference batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub reference_max: f64,
    pub target_max: f64,
}

impl Scaler {
    pub fn fit<S: AsRef<[f64]>>(reference: &[S], target_max: f64) -> Result<Self> {
        let mut max = 0.0_f64;
        for sample in reference {
            for &x in sample.as_ref() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::Config(format!("reference values must be finite and >= 0, got {x}")));
                }
                max = max.max(x);
            }
        }
        if max == 0.0 {
            return Err(Error::ZeroReference);
        }
        Ok(Self {
            reference_max: max,
            target_max,
        })
    }

    /// Scales without clamping; values above the reference max exceed `target_max`.
    pub fn scale_unclamped(&self, sample: &[f64]) -> Vec<f64> {
        let factor = self.target_max / self.reference_max;
        sample.iter().map(|x| x * factor).collect()
    }

    pub fn apply(&self, sample: &[f64]) -> Vec<f64> {
        let factor = self.target_max / self.reference_max;
        sample.iter().map(|x| (x * factor).min(self.target_max)).collect()
    }
}

/// Scales a batch by its own global maximum.
pub fn scale<S: AsRef<[f64]>>(samples: &[S], target_max: f64) -> Result<Vec<Vec<f64>>> {
    let scaler = Scaler::fit(samples, target_max)?;
    Ok(samples.iter().map(|s| scaler.apply(s.as_ref())).collect())
}

pub fn normalize_intensity(sample: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = sample.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroSample);
    }
    Ok(sample.iter().map(|x| x / total).collect())
}

/// Multiplies by `d / k` and by the ET input scale.
pub fn apply_model_scaling(sample: &[f64], config: &PreprocessConfig) -> Vec<f64> {
    let ratio = if config.model_scaling {
        sample.len() as f64 / config.reference_dimension as f64
    } else {
        1.0
    };
    let factor = ratio * config.et_input_scale;
    sample.iter().map(|x| x * factor).collect()
}

/// Fixed sparse projection from ET cells onto sister MC slots. Slot `m`
/// belongs to glomerulus `m / q` and takes no input from that glomerulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtMcProjection {
    pub dimension: usize,
    pub duplication_factor: usize,
    /// Per MC slot, `(et_index, weight)` afferents.
    pub afferents: Vec<Vec<(usize, f64)>>,
    pub seed: u64,
}

impl EtMcProjection {
    pub fn new(dimension: usize, config: &PreprocessConfig) -> Result<Self> {
        config.validate()?;
        if dimension == 0 {
            return Err(Error::Empty("projection dimension"));
        }
        let q = config.duplication_factor;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        // Density is given at the reference dimension; the expected number
        // of afferents per slot stays fixed as the dimension changes.
        let density = if dimension > 1 {
            let k = config.reference_dimension.max(2);
            (config.et_density * (k - 1) as f64 / (dimension - 1) as f64).min(1.0)
        } else {
            1.0
        };
        let mut afferents = Vec::with_capacity(dimension * q);
        for slot in 0..dimension * q {
            let glom = slot / q;
            // A single glomerulus has nowhere else to draw from.
            let candidates: Vec<usize> = if dimension == 1 {
                vec![0]
            } else {
                (0..dimension).filter(|&e| e != glom).collect()
            };
            let mut row = Vec::new();
            while row.is_empty() {
                for &e in &candidates {
                    if rng.random::<f64>() < density {
                        row.push((e, draw_weight(&mut rng, config.et_weight_max)));
                    }
                }
            }
            afferents.push(row);
        }
        Ok(Self {
            dimension,
            duplication_factor: q,
            afferents,
            seed: config.rng_seed,
        })
    }

    /// One afferent per slot from the slot's own glomerulus at a fixed weight.
    pub fn identity(dimension: usize, duplication_factor: usize, weight: f64) -> Self {
        let afferents = (0..dimension * duplication_factor)
            .map(|slot| vec![(slot / duplication_factor, weight)])
            .collect();
        Self {
            dimension,
            duplication_factor,
            afferents,
            seed: 0,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.afferents.len()
    }
}

fn draw_weight(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    loop {
        let w = rng.random::<f64>() * max;
        if w > 0.0 {
            return w;
        }
    }
}

pub fn heterogeneous_duplicate(sample: &[f64], proj: &EtMcProjection, target_max: f64) -> Result<Vec<f64>> {
    if sample.len() != proj.dimension {
        return Err(Error::DimensionMismatch {
            expected: proj.dimension,
            actual: sample.len(),
        });
    }
    Ok(proj
        .afferents
        .iter()
        .map(|row| {
            let x: f64 = row.iter().map(|&(e, w)| w * sample[e]).sum();
            x.clamp(0.0, target_max)
        })
        .collect())
}

/// Plain duplication: every sister slot gets its glomerulus' value.
pub fn duplicate(sample: &[f64], q: usize) -> Vec<f64> {
    sample.iter().flat_map(|&x| std::iter::repeat(x).take(q)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScaling {
    pub learning_vth_max: f64,
    pub nonlearning_fan_in: usize,
}

/// Learning-GC maximum threshold grows with `d / k`; the non-learning fan-in
/// stays at its reference-dimension value.
pub fn scale_thresholds_for_dimension(
    base_vth_max: f64,
    base_nonlearning_fan_in: usize,
    dimension: usize,
    reference_dimension: usize,
) -> DimensionScaling {
    DimensionScaling {
        learning_vth_max: base_vth_max * dimension as f64 / reference_dimension as f64,
        nonlearning_fan_in: base_nonlearning_fan_in,
    }
}

/// Every intermediate of the pipeline for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Stages {
    pub scaled: Vec<f64>,
    pub normalized: Vec<f64>,
    pub model_scaled: Vec<f64>,
    pub mc_input: Vec<f64>,
}

/// Frozen preprocessing pipeline for one input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
    pub scaler: Scaler,
    pub projection: EtMcProjection,
}

impl Preprocessor {
    /// Freezes the scale reference from `reference` and draws the projection.
    pub fn fit<S: AsRef<[f64]>>(config: PreprocessConfig, reference: &[S]) -> Result<Self> {
        config.validate()?;
        let dimension = reference
            .first()
            .map(|s| s.as_ref().len())
            .ok_or(Error::Empty("reference batch"))?;
        for s in reference {
            if s.as_ref().len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: s.as_ref().len(),
                });
            }
        }
        let scaler = Scaler::fit(reference, config.target_max_current)?;
        let projection = EtMcProjection::new(dimension, &config)?;
        Ok(Self {
            config,
            scaler,
            projection,
        })
    }

    pub fn dimension(&self) -> usize {
        self.projection.dimension
    }

    pub fn n_mc(&self) -> usize {
        self.projection.n_slots()
    }

    pub fn stages(&self, sample: &[f64]) -> Result<Stages> {
        if sample.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: sample.len(),
            });
        }
        if let Some((index, &value)) = sample.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::NonFiniteInput { index, value });
        }
        let scaled = self.scaler.apply(sample);
        let normalized = normalize_intensity(&scaled)?;
        let model_scaled = apply_model_scaling(&normalized, &self.config);
        let mc_input = heterogeneous_duplicate(&model_scaled, &self.projection, self.config.target_max_current)?;
        Ok(Stages {
            scaled,
            normalized,
            model_scaled,
            mc_input,
        })
    }

    /// Raw sensor vector to mitral-cell input currents.
    pub fn process(&self, sample: &[f64]) -> Result<Vec<f64>> {
        Ok(self.stages(sample)?.mc_input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_halves_when_max_is_forty() {
        let out = scale(&[vec![40.0, 10.0], vec![20.0, 0.0]], 20.0).unwrap();
        assert_eq!(out, vec![vec![20.0, 5.0], vec![10.0, 0.0]]);
    }

    #[test]
    fn frozen_reference_clamps_later_batches() {
        let scaler = Scaler::fit(&[vec![10.0, 5.0]], 20.0).unwrap();
        assert_eq!(scaler.apply(&[30.0, 5.0]), vec![20.0, 10.0]);
        assert_eq!(scaler.scale_unclamped(&[30.0]), vec![60.0]);
    }

    #[test]
    fn non_finite_sample_is_rejected() {
        let p = Preprocessor::fit(PreprocessConfig::default(), &[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            p.process(&[1.0, f64::INFINITY, 0.0]),
            Err(Error::NonFiniteInput { index: 1, .. })
        ));
    }

    #[test]
    fn all_zero_reference_is_an_error() {
        assert!(matches!(scale(&[vec![0.0, 0.0]], 20.0), Err(Error::ZeroReference)));
    }

    #[test]
    fn normalize_example() {
        assert_eq!(normalize_intensity(&[1.0, 1.0, 2.0]).unwrap(), vec![0.25, 0.25, 0.5]);
        assert!(matches!(normalize_intensity(&[0.0, 0.0]), Err(Error::ZeroSample)));
    }

    #[test]
    fn concentration_tolerance() {
        let x = [0.3, 1.7, 4.0, 0.0, 2.2];
        let tripled: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        let a = normalize_intensity(&x).unwrap();
        let b = normalize_intensity(&tripled).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn model_scaling_factors() {
        let cfg = PreprocessConfig::default();
        let x20 = vec![0.05; 20];
        assert!(apply_model_scaling(&x20, &cfg).iter().all(|v| (v - 0.5).abs() < 1e-12));
        let x40 = vec![0.025; 40];
        assert!(apply_model_scaling(&x40, &cfg).iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn projection_has_no_dead_slots_and_bounded_weights() {
        let cfg = PreprocessConfig {
            et_density: 0.05,
            ..Default::default()
        };
        let proj = EtMcProjection::new(12, &cfg).unwrap();
        assert_eq!(proj.n_slots(), 60);
        for (slot, row) in proj.afferents.iter().enumerate() {
            assert!(!row.is_empty());
            for &(e, w) in row {
                assert_ne!(e, slot / 5, "intraglomerular afferent");
                assert!(w > 0.0 && w <= 0.65);
            }
        }
    }

    #[test]
    fn zero_sample_maps_to_zero_mc_input() {
        let proj = EtMcProjection::new(6, &PreprocessConfig::default()).unwrap();
        let out = heterogeneous_duplicate(&[0.0; 6], &proj, 20.0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_projection_on_uniform_sample() {
        let proj = EtMcProjection::identity(4, 5, 0.65);
        let out = heterogeneous_duplicate(&[2.0; 4], &proj, 20.0).unwrap();
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|&v| (v - 1.3).abs() < 1e-12));
    }

    #[test]
    fn projection_dimension_mismatch() {
        let proj = EtMcProjection::identity(4, 5, 0.65);
        assert!(matches!(
            heterogeneous_duplicate(&[1.0; 3], &proj, 20.0),
            Err(Error::DimensionMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn threshold_scaling_rules() {
        let same = scale_thresholds_for_dimension(2.4, 10, 20, 20);
        assert_eq!(same.learning_vth_max, 2.4);
        let big = scale_thresholds_for_dimension(2.4, 10, 640, 20);
        assert!((big.learning_vth_max - 2.4 * 32.0).abs() < 1e-12);
        assert_eq!(big.nonlearning_fan_in, 10);
    }

    #[test]
    fn constant_and_single_hot_inputs_pass_through() {
        let reference = vec![vec![200.0; 10]];
        let pre = Preprocessor::fit(PreprocessConfig::default(), &reference).unwrap();
        pre.process(&[200.0; 10]).unwrap();
        let mut hot = vec![0.0; 10];
        hot[3] = 7.0;
        pre.process(&hot).unwrap();
    }

    #[test]
    fn duplicate_repeats_each_value() {
        assert_eq!(duplicate(&[1.0, 2.0], 3), vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }
}
