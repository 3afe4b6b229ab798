//! Symmetry-aware distributed beam selection for a synthetic V2I crossroad.

pub mod error;
pub mod group;
pub mod equivariant;
pub mod autodiff;
pub mod theory;
pub mod env;
pub mod nn;
pub mod sensing;
pub mod policy;
pub mod ppo;
pub mod io;
pub mod par;

pub use error::{Error, Result};
