//! Core algorithms for predicting chemotherapy response (CRS 1-2 vs CRS 3)
//! from a pre-treatment CT volume, its lesion mask and a handful of clinical
//! variables.
//!
//! The pipeline is split into small, pure stages:
//!
//! * [`volume`] reads RVOL files and runs the resample / resize / window /
//!   mask chain.
//! * [`sliceselect`] picks the three lesion-densest axial slices and stacks
//!   them into a 3-channel image.
//! * [`encoder`] is a frozen ViT-S/16 forward pass producing a 384-d CLS
//!   embedding.
//! * [`fusion`] encodes clinical variables and scores the concatenated
//!   representation with a small batch-normalized MLP head.
//! * [`training`] fits the head (WBCE, AdamW, warmup/decay, weighted
//!   sampling, early stopping).
//! * [`evaluation`] covers ROC analysis, thresholds, bootstrap intervals,
//!   reliability bins and ablations.
//! * [`morphology`] measures lesion volume, surface area and connectivity.
//! * [`synth`] generates synthetic cohorts with a known label model.

pub mod cohort;
pub mod csvio;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod morphology;
pub mod pipeline;
pub mod rng;
pub mod sliceselect;
pub mod synth;
pub mod tarc;
pub mod training;
pub mod volume;

pub use cohort::{response_label, ClinicalRecord, Crs, Split};
pub use encoder::{Embedding, EncoderConfig, EncoderParams};
pub use error::{Error, Result};
pub use fusion::{ClinicalStats, HeadConfig, HeadParams, Prediction};
pub use sliceselect::SliceStack;
pub use tarc::{Tensor, TensorArchive};
pub use volume::{CtVolume, Geometry, LesionMask, MaskedVolume, NormalizedVolume};
