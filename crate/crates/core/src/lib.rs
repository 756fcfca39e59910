//! Spiking model of the olfactory bulb for one-shot odor learning.

pub mod datagen;
pub mod epl;
pub mod error;
pub mod experiment;
pub mod fetch;
pub mod glomerular;
pub mod ingest;
pub mod model;
pub mod neuron;
pub mod readout;
pub mod studies;

pub use error::{Error, Result};
