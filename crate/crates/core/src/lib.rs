//! Precision-cooling NMPC for automotive air conditioning.

pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod nmpc;
pub mod plant;
pub mod sim;
pub mod sysid;

pub use error::{Error, Result};
