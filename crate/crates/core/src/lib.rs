pub mod analytics;
pub mod datavec;
pub mod desk;
pub mod error;
pub mod esmda;
pub mod faultgeom;
pub mod forward;
pub mod geostat;
pub mod grid;
pub mod latentparam;
pub mod monitors;
pub mod rng;

pub use error::{Error, Result};
