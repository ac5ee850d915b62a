//! Dense linear algebra, MLP stacks with manual backpropagation, Adam and
//! SVD utilities.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod svd;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, finite_diff_check_at};
pub use matrix::{dot, Matrix};
pub use mlp::{Activation, Dense, DenseGrads, Mlp, MlpCache, MlpGrads, DEFAULT_LEAKY_SLOPE};
pub use svd::{svd, svd_smallest, Svd};
