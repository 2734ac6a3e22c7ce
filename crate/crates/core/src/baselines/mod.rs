//! Reference estimators: the function-on-function linear model and a dense vector network.

pub mod fflm;
pub mod vnn;

pub use fflm::{fflm_fit, fflm_tune, FflmModel};
pub use vnn::{VectorNN, VnnConfig};
