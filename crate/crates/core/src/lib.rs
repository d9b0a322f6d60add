//! Climate suitability screening for dryland restoration.
//!
//! Gridded climate series are compressed into Fourier features, scored by ridge
//! (BLUP) and neural models trained on labeled reference sites, and combined with
//! vegetation rasters into opportunity maps, restoration candidates and climate
//! analogs.

pub mod binio;
pub mod blup;
pub mod bundle;
pub mod error;
pub mod geo;
pub mod grid;
pub mod linalg;
pub mod neural;
pub mod opportunity;
pub mod pipeline;
pub mod seed;
pub mod spectral;

pub use error::{Error, ErrorKind, Result};
pub use grid::{ClimateCube, GridSpec, NdviRaster, Raster, TimeAxis};
pub use linalg::Matrix;
pub use pipeline::samples::{Category, LabeledSample};
