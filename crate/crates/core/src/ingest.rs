//! Loaders for the two public chemosensor datasets and the canonical CSV
//! format, plus the one-shot online-learning schedule.
//!
//! Loaders only read local files; see `fetch` for acquisition.

use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Sample;
use crate::error::{Error, Result};

/// Drift-dataset gas names indexed by class id minus one.
pub const DRIFT_GASES: [&str; 6] = ["ethanol", "ethylene", "ammonia", "acetaldehyde", "acetone", "toluene"];

/// Published sample count of each drift batch.
pub const DRIFT_BATCH_SIZES: [usize; 10] = [445, 1244, 1586, 161, 197, 2300, 3613, 294, 470, 3600];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftConfig {
    pub n_sensors: usize,
    pub features_per_sensor: usize,
    /// Which of each sensor's features forms the input (0 = steady-state ΔR).
    pub feature: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            n_sensors: 16,
            features_per_sensor: 8,
            feature: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftBatch {
    pub batch: usize,
    pub samples: Vec<Sample>,
}

impl DriftBatch {
    /// Gases present, in [`DRIFT_GASES`] order.
    pub fn gases(&self) -> Vec<&'static str> {
        DRIFT_GASES
            .iter()
            .copied()
            .filter(|g| self.samples.iter().any(|s| s.label == *g))
            .collect()
    }
}

pub fn drift_batch_path(dir: &Path, batch: usize) -> PathBuf {
    dir.join(format!("batch{batch}.dat"))
}

/// Parses one drift batch file: `class;concentration idx:value ...`, one
/// sample per line, 1-based feature indices.
pub fn parse_drift(text: &str, batch: usize, config: &DriftConfig, path: &Path) -> Result<DriftBatch> {
    let n_features = config.n_sensors * config.features_per_sensor;
    if config.feature >= config.features_per_sensor {
        return Err(Error::Config("drift feature index out of range".into()));
    }
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let head = fields.next().expect("non-empty line");
        let (class, conc) = head
            .split_once(';')
            .ok_or_else(|| err(line_no, format!("expected `class;concentration`, got {head:?}")))?;
        let class: usize = class.parse().map_err(|_| err(line_no, format!("bad class {class:?}")))?;
        let gas = class
            .checked_sub(1)
            .and_then(|c| DRIFT_GASES.get(c))
            .ok_or_else(|| err(line_no, format!("class {class} outside 1..=6")))?;
        let concentration: f64 = conc.parse().map_err(|_| err(line_no, format!("bad concentration {conc:?}")))?;
        let mut features = vec![None; n_features];
        for f in fields {
            let (idx, val) = f
                .split_once(':')
                .ok_or_else(|| err(line_no, format!("expected `index:value`, got {f:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(line_no, format!("bad index {idx:?}")))?;
            if idx == 0 || idx > n_features {
                return Err(err(line_no, format!("feature index {idx} outside 1..={n_features}")));
            }
            let val: f64 = val.parse().map_err(|_| err(line_no, format!("bad value {val:?}")))?;
            features[idx - 1] = Some(val);
        }
        let values = (0..config.n_sensors)
            .map(|s| {
                let idx = s * config.features_per_sensor + config.feature;
                features[idx].ok_or_else(|| err(line_no, format!("missing feature {}", idx + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample {
            label: gas.to_string(),
            concentration,
            values,
        });
    }
    Ok(DriftBatch { batch, samples })
}

/// Reads `batch{n}.dat` from `dir`.
pub fn load_drift_batch(dir: &Path, batch: usize, config: &DriftConfig) -> Result<DriftBatch> {
    if !(1..=10).contains(&batch) {
        return Err(Error::Config(format!("drift batch {batch} outside 1..=10")));
    }
    let path = drift_batch_path(dir, batch);
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData(path.clone()),
        _ => Error::Io(e),
    })?;
    parse_drift(&text, batch, config, &path)
}

/// Gas presentation order for the online protocol.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingOrder {
    /// Ethanol, ethylene, ammonia, acetaldehyde, acetone, toluene.
    #[default]
    EthanolFirst,
    /// Ammonia, acetaldehyde, acetone, ethylene, ethanol, toluene.
    AmmoniaFirst,
    Custom(Vec<String>),
}

impl TrainingOrder {
    pub fn labels(&self) -> Vec<String> {
        let v: &[&str] = match self {
            TrainingOrder::EthanolFirst => &DRIFT_GASES,
            TrainingOrder::AmmoniaFirst => &["ammonia", "acetaldehyde", "acetone", "ethylene", "ethanol", "toluene"],
            TrainingOrder::Custom(v) => return v.clone(),
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

/// One step of online learning: train on one sample, then test on every
/// sample of the classes trained so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub train: Sample,
    pub test: Vec<Sample>,
}

/// Builds the online schedule from one training sample per class, in order.
pub fn online_groups(train: Vec<Sample>, test: &[Sample]) -> Vec<Group> {
    let mut seen: Vec<String> = Vec::new();
    train
        .into_iter()
        .map(|t| {
            seen.push(t.label.clone());
            let test = test.iter().filter(|s| seen.contains(&s.label)).cloned().collect();
            Group { train: t, test }
        })
        .collect()
}

/// Drift online protocol: per gas in `order`, one training sample drawn at
/// random from the batch, then a test over all samples of the gases
/// trained so far. Gases missing from the batch are skipped.
pub fn online_learning_protocol(batch: &DriftBatch, order: &TrainingOrder, seed: u64) -> Vec<Group> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    for gas in order.labels() {
        let pool: Vec<&Sample> = batch.samples.iter().filter(|s| s.label == gas).collect();
        match pool.choose(&mut rng) {
            Some(s) => train.push((*s).clone()),
            None => warn!("batch {}: no {gas} samples, skipping", batch.batch),
        }
    }
    online_groups(train, &batch.samples)
}

/// Which wind-tunnel sensors form the input.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorSelection {
    /// The three central modules, 24 sensors.
    #[default]
    Middle,
    /// All 72 sensors.
    Full,
    /// Explicit 0-based sensor indices.
    Sensors(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindTunnelConfig {
    /// Directory name of the sensing location.
    pub line: String,
    /// Substrings a trial file name must contain (heater and fan set points).
    pub filename_tokens: Vec<String>,
    pub selection: SensorSelection,
    pub time_column: usize,
    /// Multiplier turning the time column into seconds.
    pub time_scale: f64,
    pub first_sensor_column: usize,
    pub n_sensors: usize,
    pub train_time_s: f64,
    pub test_start_s: f64,
    pub test_end_s: f64,
    pub test_step_s: f64,
}

impl Default for WindTunnelConfig {
    fn default() -> Self {
        Self {
            line: "L4".into(),
            filename_tokens: vec!["board_setPoint_500V".into(), "fan_setPoint_060".into()],
            selection: SensorSelection::Middle,
            time_column: 0,
            time_scale: 1e-3,
            first_sensor_column: 3,
            n_sensors: 72,
            train_time_s: 90.0,
            test_start_s: 30.0,
            test_end_s: 180.0,
            test_step_s: 5.0,
        }
    }
}

impl WindTunnelConfig {
    pub fn sensors(&self) -> Vec<usize> {
        match &self.selection {
            SensorSelection::Middle => (24..48).collect(),
            SensorSelection::Full => (0..self.n_sensors).collect(),
            SensorSelection::Sensors(v) => v.clone(),
        }
    }

    /// Test time points in seconds: `[start, end)` every `step`.
    pub fn test_times(&self) -> Vec<f64> {
        let n = ((self.test_end_s - self.test_start_s) / self.test_step_s).round() as usize;
        (0..n).map(|i| self.test_start_s + i as f64 * self.test_step_s).collect()
    }
}

/// One recorded gas presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: String,
    pub label: String,
    /// Seconds.
    pub times: Vec<f64>,
    /// Selected sensor readings per row.
    pub rows: Vec<Vec<f64>>,
}

impl Trial {
    /// Readings at the first row at or after `t`.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        let i = self.times.partition_point(|&x| x < t);
        self.rows.get(i).map(Vec::as_slice)
    }
}

fn gas_label(dir_name: &str) -> String {
    dir_name.split('_').next().unwrap_or(dir_name).to_lowercase()
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Parses one trial file of whitespace- or comma-separated numeric rows.
pub fn parse_trial(text: &str, id: &str, label: &str, config: &WindTunnelConfig, path: &Path) -> Result<Trial> {
    let sensors = config.sensors();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>().map_err(|_| err(format!("bad number {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let need = config.first_sensor_column + sensors.iter().max().map_or(0, |m| m + 1);
        if fields.len() < need.max(config.time_column + 1) {
            return Err(err(format!("expected at least {need} columns, got {}", fields.len())));
        }
        times.push(fields[config.time_column] * config.time_scale);
        rows.push(sensors.iter().map(|&s| fields[config.first_sensor_column + s]).collect());
    }
    Ok(Trial {
        id: id.to_string(),
        label: label.to_string(),
        times,
        rows,
    })
}

/// Loads every matching trial under `root` (`<gas>_<conc>/<line>/<file>`),
/// sorted by trial id.
pub fn load_wind_tunnel(root: &Path, config: &WindTunnelConfig) -> Result<Vec<Trial>> {
    if !root.is_dir() {
        return Err(Error::MissingData(root.to_path_buf()));
    }
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    let mut trials = Vec::new();
    for path in files {
        let Some(line_dir) = path.parent() else { continue };
        if line_dir.file_name().and_then(|n| n.to_str()) != Some(config.line.as_str()) {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if !config.filename_tokens.iter().all(|t| name.contains(t.as_str())) {
            continue;
        }
        let Some(gas_dir) = line_dir.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str()) else {
            continue;
        };
        let id = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().into_owned();
        let text = std::fs::read_to_string(&path)?;
        trials.push(parse_trial(&text, &id, &gas_label(gas_dir), config, &path)?);
    }
    if trials.is_empty() {
        return Err(Error::MissingData(root.join(&config.line)));
    }
    trials.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(trials)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindTunnelSplit {
    /// One near-peak snapshot per gas, in order of first appearance.
    pub train: Vec<Sample>,
    /// Plume samples of every trial.
    pub test: Vec<Sample>,
}

/// Picks one random trial per gas for training and samples every trial
/// over the test window. Short trials are truncated.
pub fn wind_tunnel_split(trials: &[Trial], config: &WindTunnelConfig, seed: u64) -> WindTunnelSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<&str> = Vec::new();
    for t in trials {
        if !labels.contains(&t.label.as_str()) {
            labels.push(&t.label);
        }
    }
    let sample = |t: &Trial, row: &[f64]| Sample {
        label: t.label.clone(),
        concentration: 0.0,
        values: row.to_vec(),
    };
    let mut train = Vec::new();
    for label in labels {
        let pool: Vec<&Trial> = trials
            .iter()
            .filter(|t| t.label == label && t.at(config.train_time_s).is_some())
            .collect();
        if let Some(t) = pool.choose(&mut rng) {
            train.push(sample(t, t.at(config.train_time_s).expect("filtered")));
        } else {
            warn!("no {label} trial reaches {} s, skipping", config.train_time_s);
        }
    }
    let mut test = Vec::new();
    for t in trials {
        let last = t.times.last().copied().unwrap_or(0.0);
        if last < config.test_end_s {
            warn!("trial {} ends at {last:.1} s, truncating", t.id);
        }
        test.extend(config.test_times().into_iter().filter_map(|time| t.at(time).map(|r| sample(t, r))));
    }
    WindTunnelSplit { train, test }
}

/// Reads the canonical CSV written by [`crate::datagen::write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut lines = text.lines().enumerate();
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = lines.next().ok_or_else(|| err(1, "missing header".into()))?.1;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "label" || cols[1] != "concentration" {
        return Err(err(1, "header must start with label,concentration".into()));
    }
    let d = cols.len() - 2;
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(err(i + 1, format!("expected {} fields, got {}", d + 2, fields.len())));
        }
        let num = |f: &str| f.trim().parse::<f64>().map_err(|_| err(i + 1, format!("bad number {f:?}")));
        out.push(Sample {
            label: fields[0].to_string(),
            concentration: num(fields[1])?,
            values: fields[2..].iter().map(|f| num(f)).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}
