//! Multi-view hand mesh reconstruction: triangulated skeletons are lifted to
//! a full mesh by a per-bone, per-axis MLP model, optionally refined with
//! multi-view image features through zero-initialized fusion layers.

pub mod camera;
pub mod error;
pub mod fusion;
pub mod hand;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod s2m;

pub use error::{Error, Result};
