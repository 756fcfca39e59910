#![allow(dead_code)]

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use bulbnet::datagen::{build_test_suite, generate_series, NoiseSpec, OdorSeriesSpec, Sample};
use bulbnet::epl::{stdp_update, EplConfig, Granule, StdpConfig, Synapse};
use bulbnet::glomerular::PreprocessConfig;
use bulbnet::model::{Model, ModelConfig};
use bulbnet::readout::{goodness_of_preprocessing, jaccard_similarity, NoSpikePenalty};

pub type Check = Result<(), TestCaseError>;

pub const BIN: f64 = 0.025;
pub const NETWORK_CASES: u32 = 12;

/// Small network: `d` columns of 5 sisters, 4 learning and 6 non-learning
/// granule cells per column.
pub fn small_config(d: usize, neurogenesis: bool) -> ModelConfig {
    ModelConfig {
        preprocess: PreprocessConfig {
            reference_dimension: d,
            ..PreprocessConfig::default()
        },
        epl: EplConfig {
            n_learning_gc_per_column: 4,
            n_nonlearning_gc_per_column: 6,
            neurogenesis,
            ..EplConfig::default()
        },
        ..ModelConfig::default()
    }
}

pub fn odors(d: usize, n: usize, iod: f64, seed: u64) -> Vec<Sample> {
    generate_series(&OdorSeriesSpec {
        dimension: d,
        n_similar: n,
        inter_odor_distance: iod,
        rng_seed: seed,
        ..OdorSeriesSpec::default()
    })
    .unwrap()
}

pub fn model(c: &ModelConfig, odors: &[Sample], seed: u64) -> Model {
    let refs: Vec<&[f64]> = odors.iter().map(|s| s.values.as_slice()).collect();
    Model::new(c.with_seed(seed), &refs).unwrap()
}

/// (dimension, similar odors, inter-odor distance, seed)
pub type Setting = (usize, usize, f64, u64);

pub fn settings() -> impl Strategy<Value = Setting> {
    (4usize..9, 2usize..5, 0.1..1.0_f64, any::<u64>())
}

pub fn weights_stay_within_bounds((d, n, iod, seed): Setting) -> Check {
    let odors = odors(d, n, iod, seed);
    let mut m = model(&small_config(d, true), &odors, seed);
    let w_init = m.config.epl.w_init;
    let cap_max = w_init * m.config.epl.w_cap_factor;
    for s in &odors {
        m.train(&s.values, &s.label).unwrap();
        for gc in &m.epl.granules {
            for syn in &gc.synapses {
                prop_assert!(syn.weight >= 0.0 && syn.weight <= syn.cap);
                prop_assert!(syn.cap >= w_init && syn.cap <= cap_max);
            }
            if !gc.is_learning() {
                prop_assert!(gc.synapses.iter().all(|s| s.weight == w_init));
            }
        }
    }
    Ok(())
}

pub fn locked_cells_never_change((d, n, iod, seed): Setting) -> Check {
    let odors = odors(d, n, iod, seed);
    let mut m = model(&small_config(d, true), &odors, seed);
    let mut frozen: Vec<(usize, Granule)> = Vec::new();
    for s in &odors {
        let record = m.train(&s.values, &s.label).unwrap();
        for (j, g) in &frozen {
            prop_assert_eq!(&m.epl.granules[*j], g);
        }
        for &j in &record.newly_locked {
            let g = &m.epl.granules[j];
            prop_assert!(g.locked && g.is_learning());
            prop_assert!(g.synapses.iter().all(|s| s.weight > 0.0));
            prop_assert!(g.synapses.iter().any(|s| s.weight >= s.cap));
            frozen.push((j, g.clone()));
        }
    }
    Ok(())
}

pub fn one_spike_per_cell_per_cycle((d, n, iod, seed): Setting) -> Check {
    let odors = odors(d, n, iod, seed);
    let mut m = model(&small_config(d, true), &odors, seed);
    let period = m.config.epl.neuron.cycle_period_ms;
    let mut records = Vec::new();
    for s in &odors {
        records.push(m.train(&s.values, &s.label).unwrap());
    }
    for s in &odors {
        records.push(m.recall(&s.values).unwrap().record);
    }
    for r in &records {
        prop_assert_eq!(r.pattern.cycles.len(), m.config.epl.neuron.cycles_per_sniff);
        prop_assert_eq!(r.gc_spikes.len(), r.pattern.cycles.len());
        for (cycle, gcs) in r.pattern.cycles.iter().zip(&r.gc_spikes) {
            prop_assert_eq!(cycle.len(), m.epl.n_mc());
            prop_assert!(cycle.iter().flatten().all(|t| (0.0..period).contains(t)));
            prop_assert!(gcs.windows(2).all(|w| w[0] < w[1]));
        }
    }
    Ok(())
}

pub fn neurogenesis_refills_up_to_the_cap(((d, n, iod, seed), neurogenesis): (Setting, bool)) -> Check {
    let odors = odors(d, n, iod, seed);
    let mut m = model(&small_config(d, neurogenesis), &odors, seed);
    let cap = m.config.epl.n_learning_gc_per_column;
    for s in &odors {
        let before = m.epl.n_gc();
        let record = m.train(&s.values, &s.label).unwrap();
        let expected = if neurogenesis { record.newly_locked.len() } else { 0 };
        prop_assert_eq!(record.born, expected);
        prop_assert_eq!(m.epl.n_gc(), before + record.born);
        for column in 0..m.epl.topology.columns {
            let plastic = m.epl.granules.iter().filter(|g| g.column == column && g.is_plastic()).count();
            prop_assert!(plastic <= cap);
            if neurogenesis {
                prop_assert_eq!(plastic, cap);
            }
        }
        for g in &m.epl.granules[before..] {
            prop_assert!(g.is_plastic() && g.drive.is_none());
            prop_assert!(g.synapses.iter().all(|s| s.weight == m.config.epl.w_init));
        }
    }
    Ok(())
}

pub fn seeded_runs_are_identical((d, n, iod, seed): Setting) -> Check {
    let odors = odors(d, n, iod, seed);
    let c = small_config(d, true);
    let (mut a, mut b) = (model(&c, &odors, seed), model(&c, &odors, seed));
    prop_assert_eq!(&a, &b);
    for s in &odors {
        prop_assert_eq!(a.train(&s.values, &s.label).unwrap(), b.train(&s.values, &s.label).unwrap());
    }
    let snapshot = a.to_checkpoint_json().unwrap();
    prop_assert_eq!(&snapshot, &b.to_checkpoint_json().unwrap());
    let noise = NoiseSpec {
        rng_seed: seed,
        ..NoiseSpec::default()
    };
    let suite = build_test_suite(&odors, Some(&noise), 2).unwrap();
    for s in &suite {
        prop_assert_eq!(a.recall(&s.values).unwrap(), b.recall(&s.values).unwrap());
    }
    prop_assert_eq!(a.to_checkpoint_json().unwrap(), snapshot);
    let restored = Model::from_checkpoint_json(&b.to_checkpoint_json().unwrap()).unwrap();
    for s in &suite {
        prop_assert_eq!(restored.predict(&s.values).unwrap(), a.predict(&s.values).unwrap());
    }
    Ok(())
}

pub fn trained_patterns_are_fixed_points((d, n, iod, seed): Setting) -> Check {
    let odors = odors(d, n, iod, seed);
    let mut m = model(&small_config(d, true), &odors, seed);
    for s in &odors {
        m.train(&s.values, &s.label).unwrap();
    }
    for (s, stored) in odors.iter().zip(&m.epl.store) {
        let r = m.recall(&s.values).unwrap();
        prop_assert_eq!(r.record.pattern.last_cycle(), stored.pattern.as_slice());
    }
    Ok(())
}

pub type Pattern = Vec<Option<f64>>;

fn pattern(n: usize) -> impl Strategy<Value = Pattern> {
    vec(proptest::option::of(0.0..1.0_f64), n)
}

pub fn three_patterns() -> impl Strategy<Value = (Pattern, Pattern, Pattern)> {
    (1usize..12).prop_flat_map(|n| (pattern(n), pattern(n), pattern(n)))
}

pub fn jaccard_metric_axioms((a, b, c): (Pattern, Pattern, Pattern)) -> Check {
    let ab = jaccard_similarity(&a, &b, BIN);
    prop_assert!((0.0..=1.0).contains(&ab));
    prop_assert_eq!(ab, jaccard_similarity(&b, &a, BIN));
    prop_assert_eq!(jaccard_similarity(&a, &a, BIN), 1.0);
    let d = |x: &[Option<f64>], y: &[Option<f64>]| 1.0 - jaccard_similarity(x, y, BIN);
    prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    if ab == 1.0 {
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.map(|t| (t / BIN).floor()), y.map(|t| (t / BIN).floor()));
        }
    }
    Ok(())
}

pub fn goodness_inputs() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (vec(0.0..=1.0_f64, 1..50), 0.01..=1.0_f64)
}

pub fn goodness_lies_in_unit_interval((fractions, threshold): (Vec<f64>, f64)) -> Check {
    for penalty in [NoSpikePenalty::Indicator, NoSpikePenalty::MinFraction] {
        let g = goodness_of_preprocessing(&fractions, threshold, penalty).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        let max = fractions.iter().copied().fold(0.0, f64::max);
        if fractions.contains(&0.0) || max >= threshold {
            prop_assert_eq!(g, 0.0);
        }
    }
    Ok(())
}

/// ((weight, cap factor) per synapse, MC times, GC time, (a_p, a_n, w_scale))
pub type StdpCase = (Vec<(f64, f64)>, Pattern, f64, (f64, f64, f64));

pub fn stdp_cases() -> impl Strategy<Value = StdpCase> {
    (
        vec((0.0..30.0_f64, 1.0..1.5_f64), 1..8),
        vec(proptest::option::of(0.0..25.0_f64), 8),
        0.0..25.0_f64,
        (0.0..20.0_f64, 0.0..20.0_f64, 0.0..20.0_f64),
    )
}

pub fn stdp_keeps_weights_within_zero_and_cap((weights, times, gc_time, (a_p, a_n, w_scale)): StdpCase) -> Check {
    let mut syn: Vec<Synapse> = weights
        .iter()
        .enumerate()
        .map(|(i, &(w, f))| Synapse {
            mc: i as u32,
            weight: w,
            cap: w * f,
        })
        .collect();
    let before = syn.clone();
    let stdp = StdpConfig {
        a_p,
        a_n,
        tau_p: 5.0,
        tau_n: 25.0,
        w_scale,
    };
    stdp_update(&mut syn, &times, gc_time, &stdp);
    for (s, b) in syn.iter().zip(&before) {
        prop_assert!(s.weight >= 0.0 && s.weight <= s.cap);
        prop_assert_eq!(s.cap, b.cap);
        match times[s.mc as usize] {
            Some(v) if v <= gc_time => prop_assert!(s.weight >= b.weight),
            _ => prop_assert!(s.weight <= b.weight),
        }
    }
    Ok(())
}
