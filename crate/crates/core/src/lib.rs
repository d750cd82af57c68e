//! Motion-sensor device fingerprinting: feature extraction, feature
//! selection and classification, plus the calibration and obfuscation
//! countermeasures and a synthetic device-fleet generator to evaluate them.

pub mod calibrate;
pub mod classify;
pub mod error;
pub mod experiment;
pub mod features;
pub mod obfuscate;
pub mod preprocess;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
