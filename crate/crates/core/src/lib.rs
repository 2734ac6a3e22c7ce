//! Function-on-function regression with continuous hidden layers.
//!
//! Two network families map R predictor curves to a response curve:
//!
//! - [`fdnn`]: intercept functions and weight surfaces discretized directly on grids.
//! - [`fbnn`]: the same architecture with every parameter function expanded in B-splines.
//!
//! Around them sit the numeric substrate ([`grid`], [`bspline`], [`gp`], [`linalg`]),
//! the training machinery ([`training`]), simulation scenarios ([`datagen`]) and
//! reference estimators ([`baselines`]).
//!
//! The crate is `no_std` and needs only `alloc`. Enable the `std` feature to let the
//! GEMM kernels detect CPU features at runtime.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod activation;
pub mod baselines;
pub mod bspline;
pub mod datagen;
pub mod error;
pub mod fbnn;
pub mod fdnn;
pub mod gp;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod training;

pub use activation::Activation;
pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, GridSurface};
pub use model::{Model, Predictor};
