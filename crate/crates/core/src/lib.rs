//! Concept-representation learning and trajectory tooling for longitudinal
//! clinical records.
//!
//! The crate turns a concept vocabulary plus a concept-relation graph into
//! dense representations (text embeddings refined by graph contrastive
//! learning with a distillation tether), extracts exact nearest-neighbor
//! sets from them, builds padded patient trajectories from raw records, and
//! evaluates how well frozen representations transfer across cohort shifts,
//! with neighbor-replacement augmentation as the lever under test.

pub mod augment;
pub mod container;
pub mod error;
pub mod eval;
pub mod graph;
pub mod neighbors;
pub mod pipeline;
pub mod repr;
pub mod synth;
pub mod text;
pub mod trajectory;
pub mod vocab;

pub use error::{Error, ErrorClass, Result};
