pub mod cli;
pub mod datagen;
pub mod error;
pub mod format;
pub mod glm;
pub mod imputation;
pub mod metrics;
pub mod numerics;
pub mod simstudy;
pub mod survival;
pub mod validation;

pub use error::{Error, Result};
