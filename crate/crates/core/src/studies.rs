//! The experimental protocols: regularization and scaling diagnostics, the
//! synthetic one-shot task with its ablations and noise sweeps, and online
//! learning over labelled datasets.

use serde::{Deserialize, Serialize};

use crate::datagen::{build_test_suite, generate_series, NoiseSpec, OdorSeriesSpec, Sample};
use crate::epl::{EplConfig, EplState, Topology};
use crate::error::{Error, Result};
use crate::glomerular::{duplicate, normalize_intensity, PreprocessConfig, Preprocessor, Scaler};
use crate::ingest::Group;
use crate::model::{Model, ModelConfig};
use crate::readout::{goodness_of_preprocessing, jaccard_similarity, NoSpikePenalty};

/// Pipeline stages of the regularization table, in order.
pub const STAGES: [&str; 7] = [
    "raw",
    "scaled",
    "intensity_norm",
    "duplication",
    "mc_het",
    "mc_gc_het",
    "het_duplication",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageActivity {
    pub stage: String,
    /// Fraction of MCs spiking, per sample.
    pub mc_fractions: Vec<f64>,
    /// Fraction of GCs spiking in an untrained network, per sample.
    pub gc_fractions: Vec<f64>,
    pub gp_mc: f64,
    pub gp_gc: f64,
}

fn naive_fractions(epl: &EplState, input: &[f64]) -> Result<(f64, f64)> {
    let (soma, gcs) = epl.naive_cycle(input)?;
    let mc = soma.iter().filter(|t| t.is_some()).count() as f64 / soma.len() as f64;
    Ok((mc, gcs.len() as f64 / epl.n_gc() as f64))
}

/// Spiking fractions after each preprocessing stage for a set of raw
/// samples. Stages before `mc_het` use one MC threshold, stages before
/// `mc_gc_het` one GC threshold. The last stage is the full pipeline.
pub fn regularization_study(
    samples: &[Sample],
    config: &ModelConfig,
    sparsity_threshold: f64,
    penalty: NoSpikePenalty,
) -> Result<Vec<StageActivity>> {
    let raw: Vec<Vec<f64>> = samples.iter().map(|s| s.values.clone()).collect();
    let d = raw.first().ok_or(Error::Empty("regularization samples"))?.len();
    let pre = &config.preprocess;
    let q = pre.duplication_factor;
    let scaler = Scaler::fit(&raw, pre.target_max_current)?;
    let scaled: Vec<Vec<f64>> = raw.iter().map(|x| scaler.apply(x)).collect();
    let normalized: Vec<Vec<f64>> = scaled
        .iter()
        .map(|x| normalize_intensity(x).map(|v| v.iter().map(|y| y * pre.et_input_scale).collect()))
        .collect::<Result<_>>()?;
    let duplicated: Vec<Vec<f64>> = normalized.iter().map(|x| duplicate(x, q)).collect();
    let full = Preprocessor::fit(pre.clone(), &raw)?;
    let het: Vec<Vec<f64>> = raw.iter().map(|x| full.process(x)).collect::<Result<_>>()?;

    let homogeneous = |mc_het: bool, gc_het: bool| -> EplConfig {
        let mut c = config.epl.clone();
        if !mc_het {
            c.mc_vth_max = c.mc_vth_min;
        }
        if !gc_het {
            c.gc_vth_max = c.gc_vth_min;
        }
        c
    };
    let flat = |q: usize| Topology {
        columns: d,
        sisters: q,
        reference_dimension: d,
    };
    let scaled_topology = Topology {
        columns: d,
        sisters: q,
        reference_dimension: pre.reference_dimension,
    };
    let plans: [(&str, &Vec<Vec<f64>>, EplConfig, Topology); 7] = [
        (STAGES[0], &raw, homogeneous(false, false), flat(1)),
        (STAGES[1], &scaled, homogeneous(false, false), flat(1)),
        (STAGES[2], &normalized, homogeneous(false, false), flat(1)),
        (STAGES[3], &duplicated, homogeneous(false, false), flat(q)),
        (STAGES[4], &duplicated, homogeneous(true, false), flat(q)),
        (STAGES[5], &duplicated, homogeneous(true, true), flat(q)),
        (STAGES[6], &het, config.epl.clone(), scaled_topology),
    ];
    let mut out = Vec::with_capacity(plans.len());
    for (stage, inputs, epl_config, topology) in plans {
        let epl = EplState::build(epl_config, topology)?;
        let mut mc_fractions = Vec::with_capacity(inputs.len());
        let mut gc_fractions = Vec::with_capacity(inputs.len());
        for x in inputs.iter() {
            let clamped: Vec<f64> = x.iter().map(|v| v.min(epl.config.neuron.max_input_current)).collect();
            let (mc, gc) = naive_fractions(&epl, &clamped)?;
            mc_fractions.push(mc);
            gc_fractions.push(gc);
        }
        out.push(StageActivity {
            stage: stage.to_string(),
            gp_mc: goodness_of_preprocessing(&mc_fractions, sparsity_threshold, penalty)?,
            gp_gc: goodness_of_preprocessing(&gc_fractions, sparsity_threshold, penalty)?,
            mc_fractions,
            gc_fractions,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub dimension: usize,
    /// Mean fraction of MCs spiking with model scaling.
    pub mc_fraction: f64,
    /// The same without model scaling.
    pub mc_fraction_unscaled: f64,
    /// Mean fraction of non-learning GCs spiking with model scaling.
    pub nl_gc_fraction: f64,
}

/// MC and non-learning GC activity of untrained networks across input
/// dimensions, for the synthetic odor series generated at each dimension.
pub fn model_scaling_study(dimensions: &[usize], config: &ModelConfig, seed: u64) -> Result<Vec<ScalingPoint>> {
    let mut out = Vec::with_capacity(dimensions.len());
    for &d in dimensions {
        let odors = generate_series(&OdorSeriesSpec {
            dimension: d,
            rng_seed: seed,
            ..OdorSeriesSpec::default()
        })?;
        let raw: Vec<Vec<f64>> = odors.iter().map(|s| s.values.clone()).collect();
        let mut c = config.with_seed(seed);
        c.epl.n_learning_gc_per_column = 0;
        let scaled = Model::new(c.clone(), &raw)?;
        c.preprocess.model_scaling = false;
        let unscaled = Model::new(c, &raw)?;
        let (mut mc, mut mc_u, mut gc) = (0.0, 0.0, 0.0);
        for x in &raw {
            let (m, g) = naive_fractions(&scaled.epl, &scaled.preprocessor.process(x)?)?;
            mc += m;
            gc += g;
            let (soma, _) = unscaled.epl.naive_cycle(&unscaled.preprocessor.process(x)?)?;
            mc_u += soma.iter().filter(|t| t.is_some()).count() as f64 / soma.len() as f64;
        }
        let n = raw.len() as f64;
        out.push(ScalingPoint {
            dimension: d,
            mc_fraction: mc / n,
            mc_fraction_unscaled: mc_u / n,
            nl_gc_fraction: gc / n,
        });
    }
    Ok(out)
}

/// Network variants of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    All,
    #[serde(rename = "no_nl")]
    NoNonlearning,
    NoNeurogenesis,
    #[serde(rename = "no_neurogenesis_no_nl")]
    NoNeurogenesisNoNonlearning,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::All,
        Ablation::NoNonlearning,
        Ablation::NoNeurogenesis,
        Ablation::NoNeurogenesisNoNonlearning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::All => "all",
            Ablation::NoNonlearning => "no_nl",
            Ablation::NoNeurogenesis => "no_neurogenesis",
            Ablation::NoNeurogenesisNoNonlearning => "no_neurogenesis_no_nl",
        }
    }

    pub fn apply(self, config: &mut ModelConfig) {
        if matches!(self, Ablation::NoNonlearning | Ablation::NoNeurogenesisNoNonlearning) {
            config.epl.n_nonlearning_gc_per_column = 0;
        }
        if matches!(self, Ablation::NoNeurogenesis | Ablation::NoNeurogenesisNoNonlearning) {
            config.epl.neurogenesis = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTask {
    pub series: OdorSeriesSpec,
    pub noise: NoiseSpec,
    pub n_noisy: usize,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            series: OdorSeriesSpec::default(),
            noise: NoiseSpec::default(),
            n_noisy: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub accuracy: f64,
    pub n_test: usize,
    /// Test samples whose cycle-8 pattern is closer to their trained
    /// pattern than their cycle-1 pattern.
    pub converged: usize,
    pub rejected: usize,
}

/// Trains the odor series one shot each, then tests on the noisy suite.
/// Odors and noise are drawn from `seed`, the network from `seed` too.
pub fn synthetic_task(config: &ModelConfig, task: &SyntheticTask, seed: u64) -> Result<TaskOutcome> {
    let series = OdorSeriesSpec {
        rng_seed: seed,
        ..task.series.clone()
    };
    let noise = NoiseSpec {
        rng_seed: seed.wrapping_add(100),
        ..task.noise.clone()
    };
    let train = generate_series(&series)?;
    let test = build_test_suite(&train, Some(&noise), task.n_noisy)?;
    let raw: Vec<Vec<f64>> = train.iter().map(|s| s.values.clone()).collect();
    let mut model = Model::new(config.with_seed(seed), &raw)?;
    for s in &train {
        model.train(&s.values, &s.label)?;
    }
    let bin = config.classifier.bin_ms;
    let (mut correct, mut converged, mut rejected) = (0, 0, 0);
    for s in &test {
        let r = model.recall(&s.values)?;
        correct += usize::from(r.prediction.label == s.label);
        rejected += usize::from(r.prediction.is_rejected());
        let stored = &model
            .epl
            .store
            .iter()
            .find(|p| p.label == s.label)
            .expect("test labels are trained")
            .pattern;
        let cycles = &r.record.pattern.cycles;
        let first = jaccard_similarity(&cycles[0], stored, bin);
        let last = jaccard_similarity(cycles.last().expect("non-empty sniff"), stored, bin);
        converged += usize::from(last > first);
    }
    Ok(TaskOutcome {
        accuracy: 100.0 * correct as f64 / test.len() as f64,
        n_test: test.len(),
        converged,
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub trained: String,
    pub accuracy: f64,
    pub n_test: usize,
    /// Per trained class: (label, accuracy on that class's test samples).
    pub per_class: Vec<(String, f64)>,
}

/// Runs an online schedule on one fresh network whose preprocessing is
/// frozen on `reference`.
pub fn online_learning<S: AsRef<[f64]>>(
    config: &ModelConfig,
    reference: &[S],
    groups: &[Group],
    seed: u64,
) -> Result<Vec<GroupOutcome>> {
    let mut model = Model::new(config.with_seed(seed), reference)?;
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        model.train(&g.train.values, &g.train.label)?;
        let mut per: Vec<(String, usize, usize)> = Vec::new();
        let mut correct = 0;
        for s in &g.test {
            let ok = model.predict(&s.values)?.label == s.label;
            correct += usize::from(ok);
            match per.iter_mut().find(|(l, _, _)| *l == s.label) {
                Some(e) => {
                    e.1 += usize::from(ok);
                    e.2 += 1;
                }
                None => per.push((s.label.clone(), usize::from(ok), 1)),
            }
        }
        out.push(GroupOutcome {
            trained: g.train.label.clone(),
            accuracy: if g.test.is_empty() {
                0.0
            } else {
                100.0 * correct as f64 / g.test.len() as f64
            },
            n_test: g.test.len(),
            per_class: per
                .into_iter()
                .map(|(l, c, n)| (l, 100.0 * c as f64 / n as f64))
                .collect(),
        });
    }
    Ok(out)
}

/// Default preprocessing for real datasets frozen on a reference batch.
pub fn preprocess_for(reference_dimension: usize) -> PreprocessConfig {
    PreprocessConfig {
        reference_dimension,
        ..PreprocessConfig::default()
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
