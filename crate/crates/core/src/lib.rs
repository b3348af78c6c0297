//! Relightable object models from a single masked image fragment.
//!
//! A fragment is decomposed into albedo and shading, given a coarse
//! shape-from-contour height field, and its shading is split into the smooth
//! shading of that shape under a fitted point-light mixture plus two detail
//! layers. The model can then be reshaded under new point or spherical
//! harmonic lights and composited into rendered scenes.

pub mod color;
pub mod detail;
pub mod error;
pub mod eval;
pub mod exec;
pub mod intrinsic;
pub mod io;
pub mod lightfit;
pub mod lighting;
pub mod mask;
pub mod raster;
pub mod relight;
pub mod shape;
pub mod solver;

pub use error::{Error, Result};
pub use raster::{Dims, HeightField, LinearImage, Mask, NormalField};
