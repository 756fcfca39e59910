mod common;

use common::*;
use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bulbnet::datagen::{add_noise, generate_series, NoiseKind, NoiseSpec, OdorSeriesSpec};
use bulbnet::glomerular::{heterogeneous_duplicate, normalize_intensity, EtMcProjection, PreprocessConfig, Preprocessor, Scaler};
use bulbnet::neuron::{ApicalDendrite, GammaClock, NeuronConfig};
use bulbnet::readout::{goodness_of_preprocessing, NoSpikePenalty};

proptest! {
    #[test]
    fn jaccard_distance_is_a_metric(p in three_patterns()) {
        common::jaccard_metric_axioms(p)?;
    }

    #[test]
    fn goodness_lies_in_unit_interval(g in goodness_inputs()) {
        common::goodness_lies_in_unit_interval(g)?;
    }

    #[test]
    fn stdp_keeps_weights_within_zero_and_cap(c in stdp_cases()) {
        common::stdp_keeps_weights_within_zero_and_cap(c)?;
    }

    #[test]
    fn uniform_activity_scores_one(f in 0.01..0.89_f64, n in 1usize..40) {
        let g = goodness_of_preprocessing(&vec![f; n], 0.9, NoSpikePenalty::Indicator).unwrap();
        prop_assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apical_dendrite_spikes_at_most_once_per_cycle(current in 0.0..40.0_f64, v_th in 0.1..15.0_f64) {
        let c = NeuronConfig::default();
        let mut cell = ApicalDendrite::new(&c, v_th, current);
        let mut clock = GammaClock::new(&c);
        let mut spikes = Vec::new();
        loop {
            if let Some(t) = cell.step(&clock, &c).unwrap() {
                spikes.push(t);
            }
            if clock.tick() {
                break;
            }
        }
        prop_assert!(spikes.len() <= 1);
        let closed = ApicalDendrite::cycle_spike_time(&c, v_th, current).unwrap();
        prop_assert_eq!(spikes.first().copied(), closed);
        if let Some(t) = closed {
            prop_assert!((0.0..c.cycle_period_ms).contains(&t));
        }
    }

    #[test]
    fn scaling_and_normalization_bounds(sample in vec(0.0..100.0_f64, 1..30), target in 1.0..40.0_f64) {
        prop_assume!(sample.iter().any(|&x| x > 0.0));
        let scaler = Scaler::fit(&[sample.clone()], target).unwrap();
        let scaled = scaler.apply(&sample);
        prop_assert!(scaled.iter().all(|&x| (0.0..=target + 1e-9).contains(&x)));
        let max = scaled.iter().copied().fold(0.0, f64::max);
        prop_assert!((max - target).abs() < 1e-9);
        let n = normalize_intensity(&scaled).unwrap();
        prop_assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn projection_skips_the_home_glomerulus(d in 2usize..30, q in 1usize..6, seed in any::<u64>()) {
        let config = PreprocessConfig { duplication_factor: q, reference_dimension: d, rng_seed: seed, ..PreprocessConfig::default() };
        let p = EtMcProjection::new(d, &config).unwrap();
        prop_assert_eq!(p.n_slots(), d * q);
        for (slot, row) in p.afferents.iter().enumerate() {
            for &(e, w) in row {
                prop_assert!(e < d && e != slot / q);
                prop_assert!(w > 0.0 && w <= config.et_weight_max);
            }
        }
    }

    #[test]
    fn preprocessed_currents_are_bounded(
        d in 2usize..25,
        seed in any::<u64>(),
        reference in vec(vec(0.0..50.0_f64, 25), 1..5),
        scale in 0.0..3.0_f64,
    ) {
        let reference: Vec<Vec<f64>> = reference.into_iter().map(|r| r[..d].to_vec()).collect();
        prop_assume!(reference.iter().all(|r| r.iter().any(|&x| x > 0.0)));
        let config = PreprocessConfig { reference_dimension: d, rng_seed: seed, ..PreprocessConfig::default() };
        let p = Preprocessor::fit(config.clone(), &reference).unwrap();
        for r in &reference {
            let sample: Vec<f64> = r.iter().map(|x| x * scale).collect();
            if !sample.iter().any(|&x| x > 0.0) {
                continue;
            }
            let out = p.process(&sample).unwrap();
            prop_assert_eq!(out.len(), d * config.duplication_factor);
            prop_assert!(out.iter().all(|&x| (0.0..=config.target_max_current).contains(&x)));
            let stages = p.stages(&sample).unwrap();
            prop_assert_eq!(heterogeneous_duplicate(&stages.model_scaled, &p.projection, config.target_max_current).unwrap(), out);
        }
    }

    #[test]
    fn odor_series_steps_are_exact(
        d in 2usize..40,
        n in 1usize..6,
        iod in 0.0..1.5_f64,
        seed in any::<u64>(),
        control in any::<bool>(),
    ) {
        let spec = OdorSeriesSpec { dimension: d, n_similar: n, inter_odor_distance: iod, include_nonoverlapping: control, rng_seed: seed, ..OdorSeriesSpec::default() };
        let odors = generate_series(&spec).unwrap();
        prop_assert_eq!(odors.len(), n + usize::from(control));
        prop_assert_eq!(&odors, &generate_series(&spec).unwrap());
        for o in &odors {
            prop_assert_eq!(o.values.len(), d);
            prop_assert!(o.values.iter().all(|&x| x >= 0.0 && x.is_finite()));
        }
        for w in odors[..n].windows(2) {
            let dist = w[0].values.iter().zip(&w[1].values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!((dist - iod * spec.amplitude).abs() <= 1e-6 * spec.amplitude, "{} vs {}", dist, iod * spec.amplitude);
        }
        let base_norm = odors[0].values.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((base_norm - spec.amplitude).abs() < 1e-9 * spec.amplitude);
        if control {
            let mut a = odors[0].values.clone();
            let mut b = odors[n].values.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn noise_touches_only_the_occluded_fraction(
        sample in vec(0.0..50.0_f64, 1..40),
        occlusion in 0.0..=1.0_f64,
        impulse in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let spec = NoiseSpec {
            kind: if impulse { NoiseKind::Impulse } else { NoiseKind::Gaussian },
            occlusion,
            ..NoiseSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy = add_noise(&sample, &spec, &mut rng);
        prop_assert_eq!(noisy.len(), sample.len());
        prop_assert!(noisy.iter().all(|&x| x >= 0.0 && x.is_finite()));
        let changed = noisy.iter().zip(&sample).filter(|(a, b)| a != b).count();
        prop_assert!(changed <= (occlusion * sample.len() as f64 + 1e-9).floor() as usize);
    }
}
