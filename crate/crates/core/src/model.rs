//! End-to-end model: preprocessing, the mitral/granule layer and the readout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::epl::{EplConfig, EplState, SniffRecord, Topology};
use crate::error::{Error, Result};
use crate::glomerular::{PreprocessConfig, Preprocessor};
use crate::readout::{classify, ClassifierConfig, Prediction};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub preprocess: PreprocessConfig,
    pub epl: EplConfig,
    pub classifier: ClassifierConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.epl.validate()?;
        self.classifier.validate()
    }

    /// Same configuration with both random streams derived from `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.preprocess.rng_seed = seed;
        c.epl.rng_seed = seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(1);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub preprocessor: Preprocessor,
    pub epl: EplState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recall {
    pub prediction: Prediction,
    pub record: SniffRecord,
}

impl Model {
    /// Freezes preprocessing on `reference` and builds a naive network.
    pub fn new<S: AsRef<[f64]>>(config: ModelConfig, reference: &[S]) -> Result<Self> {
        config.validate()?;
        let preprocessor = Preprocessor::fit(config.preprocess.clone(), reference)?;
        let topology = Topology {
            columns: preprocessor.dimension(),
            sisters: config.preprocess.duplication_factor,
            reference_dimension: config.preprocess.reference_dimension,
        };
        let epl = EplState::build(config.epl.clone(), topology)?;
        Ok(Self {
            config,
            preprocessor,
            epl,
        })
    }

    pub fn dimension(&self) -> usize {
        self.preprocessor.dimension()
    }

    pub fn train(&mut self, sample: &[f64], label: &str) -> Result<SniffRecord> {
        let input = self.preprocessor.process(sample)?;
        self.epl.train_one_shot(&input, label)
    }

    pub fn recall(&self, sample: &[f64]) -> Result<Recall> {
        let input = self.preprocessor.process(sample)?;
        let record = self.epl.test(&input)?;
        let prediction = classify(&record.pattern, &self.epl.store, &self.config.classifier)?;
        Ok(Recall { prediction, record })
    }

    pub fn predict(&self, sample: &[f64]) -> Result<Prediction> {
        Ok(self.recall(sample)?.prediction)
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let ck = CheckpointRef {
            format: CHECKPOINT_FORMAT,
            library_version: env!("CARGO_PKG_VERSION"),
            model: self,
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {} (expected {CHECKPOINT_FORMAT})",
                ck.format
            )));
        }
        ck.model.config.validate()?;
        Ok(ck.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_checkpoint_json(&text)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: u32,
    library_version: &'a str,
    model: &'a Model,
}

#[derive(Deserialize)]
struct Checkpoint {
    format: u32,
    #[allow(dead_code)]
    library_version: String,
    model: Model,
}
