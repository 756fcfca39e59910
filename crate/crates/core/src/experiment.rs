//! Declarative experiments and their tidy reports.
//!
//! A report is a list of `(group, metric, seed, value)` rows plus a
//! `(group, metric, n, mean, std)` summary per group and metric. Reports
//! are pure functions of the configuration, so the same file yields
//! byte-identical output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{wild_samples, NoiseKind, Sample};
use crate::error::{Error, Result};
use crate::fetch;
use crate::ingest::{
    self, load_drift_batch, load_wind_tunnel, online_groups, online_learning_protocol, wind_tunnel_split,
    DriftConfig, TrainingOrder, WindTunnelConfig,
};
use crate::model::ModelConfig;
use crate::readout::NoSpikePenalty;
use crate::studies::{
    mean_std, model_scaling_study, online_learning, regularization_study, synthetic_task, Ablation, SyntheticTask,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RegularizationStudy,
    ModelScalingStudy,
    SyntheticAttractor,
    KSweep,
    GcCountSweep,
    Ablation,
    ImpulseStudy,
    GaussianStudy,
    DriftOnline,
    WindtunnelOnline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweep {
    pub inter_odor_distance: Vec<f64>,
    pub std: Vec<f64>,
    pub occlusion: Vec<f64>,
    pub k_cp: Vec<f64>,
    pub k_vth: Vec<f64>,
    pub learning_gc_per_column: Vec<usize>,
    pub dimensions: Vec<usize>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            inter_odor_distance: vec![0.25, 0.5, 0.75, 1.0],
            std: vec![2.0, 6.0, 18.0],
            occlusion: vec![0.25, 0.5, 0.75],
            k_cp: vec![-0.9, -0.45, 0.0, 0.45, 0.9],
            k_vth: vec![-0.9, -0.45, 0.0, 0.45, 0.9],
            learning_gc_per_column: vec![5, 10, 20, 50, 100],
            dimensions: vec![10, 20, 40, 80, 160, 320, 640],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizationSettings {
    pub dimension: usize,
    pub sparsity_threshold: f64,
    pub penalty: NoSpikePenalty,
}

impl Default for RegularizationSettings {
    fn default() -> Self {
        Self {
            dimension: 100,
            sparsity_threshold: 0.9,
            penalty: NoSpikePenalty::Indicator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSettings {
    /// Dataset directory; defaults to the dataset's folder in the cache.
    pub dir: Option<PathBuf>,
    pub batches: Vec<usize>,
    /// Batch whose maximum freezes the input scaling.
    pub reference_batch: usize,
    pub order: TrainingOrder,
    pub drift: DriftConfig,
    pub windtunnel: WindTunnelConfig,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self {
            dir: None,
            batches: vec![1],
            reference_batch: 1,
            order: TrainingOrder::EthanolFirst,
            drift: DriftConfig::default(),
            windtunnel: WindTunnelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub task: SyntheticTask,
    pub ablations: Vec<Ablation>,
    pub sweep: Sweep,
    pub regularization: RegularizationSettings,
    pub data: DataSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::SyntheticAttractor,
            name: String::new(),
            n_seeds: 5,
            base_seed: 0,
            output_dir: PathBuf::from("results"),
            model: ModelConfig::default(),
            task: SyntheticTask::default(),
            ablations: vec![Ablation::All],
            sweep: Sweep::default(),
            regularization: RegularizationSettings::default(),
            data: DataSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    /// Every configuration problem, collected before any compute.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_seeds == 0 {
            out.push("n_seeds must be >= 1".into());
        }
        if let Err(e) = self.model.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.task.series.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.task.noise.validate() {
            out.push(e.to_string());
        }
        let s = &self.sweep;
        let empty = |name: &str, n: usize, out: &mut Vec<String>| {
            if n == 0 {
                out.push(format!("sweep.{name} must not be empty"));
            }
        };
        match self.kind {
            ExperimentKind::Ablation | ExperimentKind::SyntheticAttractor if self.ablations.is_empty() => {
                out.push("ablations must not be empty".into())
            }
            ExperimentKind::KSweep => {
                empty("k_cp", s.k_cp.len(), &mut out);
                empty("k_vth", s.k_vth.len(), &mut out);
                if s.k_cp.iter().chain(&s.k_vth).any(|k| !(*k > -1.0 && *k < 1.0)) {
                    out.push("sweep k values must lie in (-1, 1)".into());
                }
            }
            ExperimentKind::GcCountSweep => empty("learning_gc_per_column", s.learning_gc_per_column.len(), &mut out),
            ExperimentKind::ModelScalingStudy => {
                empty("dimensions", s.dimensions.len(), &mut out);
                if s.dimensions.contains(&0) {
                    out.push("sweep.dimensions must be >= 1".into());
                }
            }
            ExperimentKind::ImpulseStudy => {
                empty("inter_odor_distance", s.inter_odor_distance.len(), &mut out);
                empty("occlusion", s.occlusion.len(), &mut out);
            }
            ExperimentKind::GaussianStudy => {
                empty("inter_odor_distance", s.inter_odor_distance.len(), &mut out);
                empty("std", s.std.len(), &mut out);
                empty("occlusion", s.occlusion.len(), &mut out);
            }
            ExperimentKind::DriftOnline => {
                if self.data.batches.is_empty() || self.data.batches.iter().any(|b| !(1..=10).contains(b)) {
                    out.push("data.batches must be a non-empty subset of 1..=10".into());
                }
                if !(1..=10).contains(&self.data.reference_batch) {
                    out.push("data.reference_batch must lie in 1..=10".into());
                }
            }
            ExperimentKind::RegularizationStudy if self.regularization.dimension == 0 => {
                out.push("regularization.dimension must be >= 1".into())
            }
            _ => {}
        }
        if s.occlusion.iter().any(|o| !(*o > 0.0 && *o <= 1.0)) {
            out.push("sweep.occlusion values must lie in (0, 1]".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.base_seed + i).collect()
    }

    fn data_dir(&self, dataset: &str) -> PathBuf {
        self.data
            .dir
            .clone()
            .unwrap_or_else(|| fetch::dataset_dir(&fetch::cache_dir(), dataset))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub group: String,
    pub metric: String,
    pub seed: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub name: String,
    pub library_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<Row>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig, rows: Vec<Row>) -> Self {
        Self {
            kind: config.kind,
            name: config.name.clone(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seeds: config.seeds(),
            summary: summarize(&rows),
            rows,
        }
    }

    pub fn mean(&self, group: &str, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.group == group && s.metric == metric)
            .map(|s| s.mean)
    }
}

/// Mean and population standard deviation per (group, metric), in order of
/// first appearance.
pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.group.as_str(), r.metric.as_str())) {
            keys.push((&r.group, &r.metric));
        }
    }
    keys.into_iter()
        .map(|(g, m)| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.group == g && r.metric == m)
                .map(|r| r.value)
                .collect();
            let (mean, std) = mean_std(&values);
            SummaryRow {
                group: g.to_string(),
                metric: m.to_string(),
                n: values.len(),
                mean,
                std,
            }
        })
        .collect()
}

fn row(group: impl Into<String>, metric: &str, seed: u64, value: f64) -> Row {
    Row {
        group: group.into(),
        metric: metric.to_string(),
        seed,
        value,
    }
}

fn synthetic_rows(config: &ModelConfig, task: &SyntheticTask, group: String, seed: u64) -> Result<Vec<Row>> {
    let o = synthetic_task(config, task, seed)?;
    Ok(vec![
        row(group.clone(), "accuracy", seed, o.accuracy),
        row(group, "converged_fraction", seed, o.converged as f64 / o.n_test as f64),
    ])
}

/// Loaded real-data inputs shared by every seed.
enum Prepared {
    None,
    Drift {
        reference: Vec<Vec<f64>>,
        batches: Vec<ingest::DriftBatch>,
    },
    Wind(Vec<ingest::Trial>),
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    Ok(match config.kind {
        ExperimentKind::DriftOnline => {
            let dir = config.data_dir("drift");
            let dir = fetch::find_file(&dir, "batch1.dat")
                .and_then(|p| p.parent().map(Path::to_path_buf))
                .unwrap_or(dir);
            let reference: Vec<Vec<f64>> = load_drift_batch(&dir, config.data.reference_batch, &config.data.drift)?
                .samples
                .into_iter()
                .map(|s| s.values)
                .collect();
            let batches = config
                .data
                .batches
                .iter()
                .map(|&b| load_drift_batch(&dir, b, &config.data.drift))
                .collect::<Result<_>>()?;
            Prepared::Drift { reference, batches }
        }
        ExperimentKind::WindtunnelOnline => {
            Prepared::Wind(load_wind_tunnel(&config.data_dir("windtunnel"), &config.data.windtunnel)?)
        }
        _ => Prepared::None,
    })
}

fn grid_label(parts: &[(&str, f64)]) -> String {
    parts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn run_seed(config: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Result<Vec<Row>> {
    let model = &config.model;
    let task = &config.task;
    let s = &config.sweep;
    let mut rows = Vec::new();
    match config.kind {
        ExperimentKind::RegularizationStudy => {
            let samples = wild_samples(config.regularization.dimension, seed);
            let reg = &config.regularization;
            for st in regularization_study(&samples, &model.with_seed(seed), reg.sparsity_threshold, reg.penalty)? {
                let (mc, _) = mean_std(&st.mc_fractions);
                let (gc, _) = mean_std(&st.gc_fractions);
                rows.push(row(st.stage.clone(), "gp_mc", seed, st.gp_mc));
                rows.push(row(st.stage.clone(), "gp_gc", seed, st.gp_gc));
                rows.push(row(st.stage.clone(), "mc_fraction", seed, mc));
                rows.push(row(st.stage, "gc_fraction", seed, gc));
            }
        }
        ExperimentKind::ModelScalingStudy => {
            for p in model_scaling_study(&s.dimensions, model, seed)? {
                let g = format!("d={}", p.dimension);
                rows.push(row(g.clone(), "mc_fraction", seed, p.mc_fraction));
                rows.push(row(g.clone(), "mc_fraction_unscaled", seed, p.mc_fraction_unscaled));
                rows.push(row(g, "nl_gc_fraction", seed, p.nl_gc_fraction));
            }
        }
        ExperimentKind::SyntheticAttractor | ExperimentKind::Ablation => {
            for &a in &config.ablations {
                let mut c = model.clone();
                a.apply(&mut c);
                rows.extend(synthetic_rows(&c, task, a.name().to_string(), seed)?);
            }
        }
        ExperimentKind::KSweep => {
            for &k_cp in &s.k_cp {
                for &k_vth in &s.k_vth {
                    let mut c = model.clone();
                    c.epl.k_cp = k_cp;
                    c.epl.k_vth = k_vth;
                    let g = grid_label(&[("k_cp", k_cp), ("k_vth", k_vth)]);
                    rows.extend(synthetic_rows(&c, task, g, seed)?);
                }
            }
        }
        ExperimentKind::GcCountSweep => {
            for &n in &s.learning_gc_per_column {
                let mut c = model.clone();
                c.epl.n_learning_gc_per_column = n;
                rows.extend(synthetic_rows(&c, task, format!("learning_gc={n}"), seed)?);
            }
        }
        ExperimentKind::ImpulseStudy | ExperimentKind::GaussianStudy => {
            let impulse = config.kind == ExperimentKind::ImpulseStudy;
            let stds = if impulse { vec![task.noise.std] } else { s.std.clone() };
            for &iod in &s.inter_odor_distance {
                for &std in &stds {
                    for &occ in &s.occlusion {
                        let mut t = task.clone();
                        t.series.inter_odor_distance = iod;
                        t.noise.occlusion = occ;
                        t.noise.kind = if impulse { NoiseKind::Impulse } else { NoiseKind::Gaussian };
                        t.noise.std = std;
                        let g = if impulse {
                            grid_label(&[("iod", iod), ("occlusion", occ)])
                        } else {
                            grid_label(&[("iod", iod), ("std", std), ("occlusion", occ)])
                        };
                        rows.extend(synthetic_rows(model, &t, g, seed)?);
                    }
                }
            }
        }
        ExperimentKind::DriftOnline => {
            let Prepared::Drift { reference, batches } = prepared else {
                unreachable!("drift data is prepared")
            };
            for batch in batches {
                let groups = online_learning_protocol(batch, &config.data.order, seed);
                let outcomes = online_learning(model, reference, &groups, seed)?;
                rows.extend(online_rows(&format!("batch{}", batch.batch), &outcomes, seed));
            }
        }
        ExperimentKind::WindtunnelOnline => {
            let Prepared::Wind(trials) = prepared else {
                unreachable!("wind tunnel data is prepared")
            };
            let split = wind_tunnel_split(trials, &config.data.windtunnel, seed);
            let reference: Vec<&[f64]> = split
                .train
                .iter()
                .chain(&split.test)
                .map(|s: &Sample| s.values.as_slice())
                .collect();
            let groups = online_groups(split.train.clone(), &split.test);
            let outcomes = online_learning(model, &reference, &groups, seed)?;
            rows.extend(online_rows("windtunnel", &outcomes, seed));
        }
    }
    Ok(rows)
}

fn online_rows(prefix: &str, outcomes: &[crate::studies::GroupOutcome], seed: u64) -> Vec<Row> {
    let mut rows = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let g = format!("{prefix}/group{}:{}", i + 1, o.trained);
        rows.push(row(g.clone(), "accuracy", seed, o.accuracy));
        for (label, acc) in &o.per_class {
            rows.push(row(g.clone(), &format!("accuracy_{label}"), seed, *acc));
        }
    }
    let (mean, _) = mean_std(&outcomes.iter().map(|o| o.accuracy).collect::<Vec<_>>());
    rows.push(row(prefix.to_string(), "mean_accuracy", seed, mean));
    rows
}

/// Runs every seed, at most `jobs` at a time, and assembles the report in
/// seed order.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let prepared = prepare(config)?;
    let seeds = config.seeds();
    let jobs = jobs.clamp(1, seeds.len());
    let mut results: Vec<Option<Result<Vec<Row>>>> = (0..seeds.len()).map(|_| None).collect();
    for chunk in seeds.chunks(jobs).zip(results.chunks_mut(jobs)) {
        let (chunk_seeds, slots) = chunk;
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk_seeds
                .iter()
                .map(|&seed| {
                    let prepared = &prepared;
                    scope.spawn(move || run_seed(config, prepared, seed))
                })
                .collect();
            for (slot, h) in slots.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(Error::Build("worker panicked".into()))));
            }
        });
    }
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r.expect("every seed ran")?);
    }
    Ok(ExperimentReport::new(config, rows))
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `group,metric,seed,value`; per-seed rows first, then a `mean` and a
/// `std` row per group and metric.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("group,metric,seed,value\n");
    for r in &report.rows {
        out.push_str(&format!("{},{},{},{}\n", csv_field(&r.group), csv_field(&r.metric), r.seed, r.value));
    }
    for s in &report.summary {
        let (g, m) = (csv_field(&s.group), csv_field(&s.metric));
        out.push_str(&format!("{g},{m},mean,{}\n", s.mean));
        out.push_str(&format!("{g},{m},std,{}\n", s.std));
    }
    out
}

/// Writes `report.json` and `report.csv` into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    let csv = dir.join("report.csv");
    std::fs::write(&json, report_json(report)?)?;
    std::fs::write(&csv, report_csv(report))?;
    Ok(vec![json, csv])
}

pub fn read_report(dir: &Path) -> Result<ExperimentReport> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData(path.clone()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig {
            kind: ExperimentKind::Ablation,
            n_seeds: 2,
            ablations: vec![Ablation::All, Ablation::NoNonlearning],
            ..ExperimentConfig::default()
        };
        c.task.series.dimension = 4;
        c.task.n_noisy = 1;
        c.model.epl.n_learning_gc_per_column = 3;
        c.model.epl.n_nonlearning_gc_per_column = 3;
        c
    }

    #[test]
    fn problems_are_collected_together() {
        let mut c = tiny();
        c.n_seeds = 0;
        c.model.epl.k_cp = 2.0;
        c.ablations.clear();
        assert_eq!(c.problems().len(), 3);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let c = tiny();
        let text = toml::to_string(&c).unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut d = c.clone();
        d.base_seed = 9;
        assert_ne!(d.hash(), c.hash());
        let minimal = ExperimentConfig::from_toml("kind = \"k_sweep\"\n").unwrap();
        assert_eq!(minimal.n_seeds, 5);
        assert!(ExperimentConfig::from_toml("kind = \"nope\"\n").is_err());
    }

    #[test]
    fn report_shape_and_determinism() {
        let c = tiny();
        let a = run_experiment(&c, 2).unwrap();
        let b = run_experiment(&c, 1).unwrap();
        assert_eq!(report_json(&a).unwrap(), report_json(&b).unwrap());
        assert_eq!(a.config_hash, c.hash());
        let csv = report_csv(&a);
        let n_groups = 2;
        let n_metrics = 2;
        assert_eq!(csv.lines().count(), 1 + (2 * n_groups + 2 * n_groups) * n_metrics);
        let s = &a.summary[0];
        let vals: Vec<f64> = a
            .rows
            .iter()
            .filter(|r| r.group == s.group && r.metric == s.metric)
            .map(|r| r.value)
            .collect();
        assert_eq!(mean_std(&vals), (s.mean, s.std));
        let dir = tempfile::tempdir().unwrap();
        emit_report(&a, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("report.csv")).unwrap();
        emit_report(&a, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("report.csv")).unwrap(), first);
        assert_eq!(read_report(dir.path()).unwrap(), a);
    }

    #[test]
    fn missing_dataset_is_a_data_error() {
        let c = ExperimentConfig {
            kind: ExperimentKind::DriftOnline,
            data: DataSettings {
                dir: Some(PathBuf::from("/nonexistent/bulbnet")),
                ..DataSettings::default()
            },
            ..ExperimentConfig::default()
        };
        let e = run_experiment(&c, 1).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
