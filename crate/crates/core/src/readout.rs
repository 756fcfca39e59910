//! Classification by spike-pattern similarity, plus population diagnostics.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::epl::{SpikePattern, TrainedPattern};
use crate::error::{Error, Result};

pub const NONE_OF_THE_ABOVE: &str = "NONE_OF_THE_ABOVE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Largest Jaccard distance still accepted as a match.
    pub confidence: f64,
    /// 1-based test cycles compared against the stored patterns; empty means all.
    pub compare_cycles: Vec<usize>,
    /// Width of the spike-time bins, normally one integration step.
    pub bin_ms: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            confidence: 0.5,
            compare_cycles: Vec::new(),
            bin_ms: 0.025,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Config("classifier confidence must lie in [0, 1]".into()));
        }
        if !(self.bin_ms > 0.0) {
            return Err(Error::Config("bin_ms must be positive".into()));
        }
        if self.compare_cycles.contains(&0) {
            return Err(Error::Config("compare_cycles are 1-based".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Winning class, or [`NONE_OF_THE_ABOVE`].
    pub label: String,
    pub similarity: f64,
    /// Similarity to every stored class, in store order.
    pub per_class: Vec<(String, f64)>,
}

impl Prediction {
    pub fn is_rejected(&self) -> bool {
        self.label == NONE_OF_THE_ABOVE
    }
}

fn events(cycle: &[Option<f64>], bin_ms: f64) -> HashSet<(usize, i64)> {
    cycle
        .iter()
        .enumerate()
        .filter_map(|(mc, t)| t.map(|t| (mc, (t / bin_ms).floor() as i64)))
        .collect()
}

/// Jaccard similarity of two single-cycle patterns viewed as sets of
/// (cell, time bin) events. Two empty patterns are identical.
pub fn jaccard_similarity(a: &[Option<f64>], b: &[Option<f64>], bin_ms: f64) -> f64 {
    let sa = events(a, bin_ms);
    let sb = events(b, bin_ms);
    set_jaccard(&sa, &sb)
}

fn set_jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Scores `test` against every stored pattern, taking for each class the
/// best match over the compared cycles. Ties go to the earliest stored class.
pub fn classify(test: &SpikePattern, store: &[TrainedPattern], config: &ClassifierConfig) -> Result<Prediction> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let cycles: Vec<&[Option<f64>]> = if config.compare_cycles.is_empty() {
        test.cycles.iter().map(Vec::as_slice).collect()
    } else {
        config
            .compare_cycles
            .iter()
            .filter_map(|&c| test.cycles.get(c - 1).map(Vec::as_slice))
            .collect()
    };
    let test_sets: Vec<_> = cycles.iter().map(|c| events(c, config.bin_ms)).collect();
    let mut per_class = Vec::with_capacity(store.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, trained) in store.iter().enumerate() {
        let stored = events(&trained.pattern, config.bin_ms);
        let sim = test_sets
            .iter()
            .map(|s| set_jaccard(s, &stored))
            .fold(0.0_f64, f64::max);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((i, sim));
        }
        per_class.push((trained.label.clone(), sim));
    }
    let (idx, similarity) = best.expect("store is non-empty");
    let label = if 1.0 - similarity > config.confidence {
        NONE_OF_THE_ABOVE.to_string()
    } else {
        store[idx].label.clone()
    };
    Ok(Prediction {
        label,
        similarity,
        per_class,
    })
}

/// How the zero-activity case enters the goodness score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoSpikePenalty {
    /// 1 when every sample evokes activity, 0 otherwise.
    #[default]
    Indicator,
    /// The smallest active fraction itself.
    MinFraction,
}

/// Goodness of a preprocessing stage from the fraction of a population
/// active for each sample: zero if any sample is silent or any exceeds the
/// sparsity threshold, otherwise the mean of the fractions relative to the
/// largest one.
pub fn goodness_of_preprocessing(fractions: &[f64], threshold: f64, penalty: NoSpikePenalty) -> Result<f64> {
    if fractions.is_empty() {
        return Err(Error::Empty("goodness of preprocessing needs at least one sample"));
    }
    let min = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    let max = fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max >= threshold || min <= 0.0 {
        return Ok(0.0);
    }
    let no_spike = match penalty {
        NoSpikePenalty::Indicator => 1.0,
        NoSpikePenalty::MinFraction => min,
    };
    let uniformity = fractions.iter().map(|v| v / max).sum::<f64>() / fractions.len() as f64;
    Ok(no_spike * uniformity)
}

/// Pairwise Jaccard overlap between the granule-cell sets activated by
/// different stimuli.
pub fn interneuron_overlap(sets: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let hashed: Vec<HashSet<usize>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
    let n = hashed.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = set_jaccard(&hashed[i], &hashed[j]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistances {
    pub labels: Vec<String>,
    /// Mean within-class distance; `None` for singleton classes.
    pub intra: Vec<Option<f64>>,
    /// Mean between-class distance; the diagonal repeats `intra`.
    pub inter: Vec<Vec<Option<f64>>>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distances within and between label groups. Labels are
/// reported in order of first appearance.
pub fn cluster_distances<S: AsRef<[f64]>>(samples: &[S], labels: &[String]) -> Result<ClusterDistances> {
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            actual: labels.len(),
        });
    }
    let mut order: Vec<String> = Vec::new();
    for l in labels {
        if !order.contains(l) {
            order.push(l.clone());
        }
    }
    let groups: Vec<Vec<&[f64]>> = order
        .iter()
        .map(|l| {
            samples
                .iter()
                .zip(labels)
                .filter(|(_, m)| *m == l)
                .map(|(s, _)| s.as_ref())
                .collect()
        })
        .collect();
    let k = order.len();
    let mut inter = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let (mut sum, mut n) = (0.0, 0usize);
            for (ai, a) in groups[i].iter().enumerate() {
                let start = if i == j { ai + 1 } else { 0 };
                for b in &groups[j][start..] {
                    sum += euclidean(a, b);
                    n += 1;
                }
            }
            let v = (n > 0).then(|| sum / n as f64);
            inter[i][j] = v;
            inter[j][i] = v;
        }
    }
    let intra = (0..k).map(|i| inter[i][i]).collect();
    Ok(ClusterDistances {
        labels: order,
        intra,
        inter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.025;

    #[test]
    fn jaccard_examples() {
        let a = vec![Some(1.0), Some(2.0)];
        assert_eq!(jaccard_similarity(&a, &a, DT), 1.0);
        let b = vec![Some(1.0), Some(3.0)];
        assert!((jaccard_similarity(&a, &b, DT) - 1.0 / 3.0).abs() < 1e-12);
        let c = vec![None, None];
        assert_eq!(jaccard_similarity(&c, &c, DT), 1.0);
        let d = vec![Some(5.0), None];
        let e = vec![None, Some(5.0)];
        assert_eq!(jaccard_similarity(&d, &e, DT), 0.0);
    }

    fn stored(label: &str, pattern: Vec<Option<f64>>) -> TrainedPattern {
        TrainedPattern {
            label: label.into(),
            pattern,
        }
    }

    #[test]
    fn classify_self_recall_and_rejection() {
        let p = vec![Some(1.0), Some(2.0), None, Some(4.0)];
        let q = vec![None, Some(7.0), Some(8.0), None];
        let store = vec![stored("a", p.clone()), stored("b", q)];
        let test = SpikePattern {
            cycles: vec![vec![None; 4], p],
            label: None,
        };
        let pred = classify(&test, &store, &ClassifierConfig::default()).unwrap();
        assert_eq!(pred.label, "a");
        assert_eq!(pred.similarity, 1.0);

        let noise = SpikePattern {
            cycles: vec![vec![Some(20.0), None, None, Some(11.0)]],
            label: None,
        };
        let pred = classify(&noise, &store, &ClassifierConfig::default()).unwrap();
        assert!(pred.is_rejected());
        assert!(matches!(classify(&noise, &[], &ClassifierConfig::default()), Err(Error::EmptyStore)));
    }

    #[test]
    fn goodness_examples() {
        let g = goodness_of_preprocessing(&[0.5, 0.5, 0.5], 0.9, NoSpikePenalty::Indicator).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let g = goodness_of_preprocessing(&[0.5, 0.5, 0.5], 0.9, NoSpikePenalty::MinFraction).unwrap();
        assert!((g - 0.5).abs() < 1e-12);
        assert_eq!(goodness_of_preprocessing(&[0.0, 0.4], 0.9, NoSpikePenalty::Indicator).unwrap(), 0.0);
        assert_eq!(goodness_of_preprocessing(&[0.95, 0.4], 0.9, NoSpikePenalty::Indicator).unwrap(), 0.0);
        let g = goodness_of_preprocessing(&[0.2, 0.4], 0.9, NoSpikePenalty::Indicator).unwrap();
        assert!((g - 0.75).abs() < 1e-12);
        assert!(goodness_of_preprocessing(&[], 0.9, NoSpikePenalty::Indicator).is_err());
    }

    #[test]
    fn overlap_matrix_shape() {
        let m = interneuron_overlap(&[vec![1, 2, 3], vec![2, 3, 4], vec![1, 2, 3]]);
        assert_eq!(m[0][2], 1.0);
        assert!((m[0][1] - 0.5).abs() < 1e-12);
        assert_eq!(m[1][0], m[0][1]);
    }

    #[test]
    fn cluster_distance_examples() {
        let samples = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![3.0, 4.0]];
        let labels = vec!["x".to_string(), "x".into(), "y".into()];
        let c = cluster_distances(&samples, &labels).unwrap();
        assert_eq!(c.intra[0], Some(0.0));
        assert_eq!(c.intra[1], None);
        assert_eq!(c.inter[0][1], Some(5.0));
        assert_eq!(c.inter[0][0], c.intra[0]);
    }
}
