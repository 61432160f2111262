//! Rotation-equivariant implicit neural representations for arbitrary-scale
//! image super-resolution.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod filter;
pub mod group;
pub mod harness;
pub mod inr;
pub mod params;

pub use error::{Error, Result};
