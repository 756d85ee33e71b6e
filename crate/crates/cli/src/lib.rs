//! Staged command-line workflow: prior generation, simulation, training,
//! inversion and plotting, with checksummed artifacts on disk.

pub mod arrayfile;
pub mod config;
pub mod error;
pub mod manifest;
pub mod params;
pub mod store;
pub mod pipeline;
pub mod plot;
