//! Evidential survival analysis on slide-level feature embeddings.
//!
//! The pipeline summarizes each slide's patch embeddings with a diagonal
//! Gaussian mixture ([`gmm`]), maps every mixture component to Gaussian random
//! fuzzy number evidence through trainable component prototypes
//! ([`evidence`]), mixes the component evidence into belief/plausibility bounds
//! on the survival function, and trains the prototypes with a discrete-time
//! likelihood ([`training`]). [`metrics`] scores discrimination and
//! calibration, [`data_io`] owns the file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_io;
pub mod evidence;
pub mod gmm;
pub mod grfn;
pub mod metrics;
pub mod rng;
pub mod special;
pub mod training;

mod error;

pub use error::{Error, Result};
pub use evidence::{ComponentPrototype, PrototypeBank};
pub use gmm::{AssignmentMap, GmmParams, PatchMatrix, PatchPrototypes, SlideEmbedding};
pub use grfn::{Grfn, Interval, MixtureGrfn};
pub use training::{BinGrid, SurvivalRecord, TrainConfig};
