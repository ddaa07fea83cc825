//! Fully-connected highway networks built from first principles: dense
//! `f64` kernels, hand-derived backward passes, SGD with momentum, random
//! hyperparameter search, and the gate/lesion analysis reports.

pub mod analyze;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod io;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Category, Error, Result};
pub use nn::{Body, BodyKind, GateMode, HighwayLayer, Network, PlainLayer};
pub use tensor::{Activation, Matrix, RngState};
