//! Complex-valued sparse representation classification (SRC) of WiFi channel
//! state information for device-free activity recognition.
//!
//! The crate covers the full pipeline: CSI data files, phase sanitisation,
//! a complex basis-pursuit-denoising solver, single-sample and window-fusion
//! SRC classifiers, a kNN baseline, SNR-based walking detection, the
//! cross-validation harness with its metrics, and a synthetic CSI generator.

pub mod channel_sim;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod solver;
pub mod walking;

pub use error::{Error, Result};
pub use model::{
    build_dictionary, ActivityClass, BandDescriptor, ClassBlock, CoefficientVector, CsiVector, Dictionary,
    LabeledSample, Sample,
};
