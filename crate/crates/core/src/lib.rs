//! Texel-space relighting of animated characters: geometry, lighting, ray
//! traced shading and ground truth, UV feature maps and Gaussian splatting.

pub mod camera;
pub mod dataset;
pub mod envlight;
pub mod error;
pub mod featmaps;
pub mod geom;
pub mod image;
pub mod io;
pub mod metrics;
pub mod olat;
pub mod scene;
pub mod splat;
pub mod tracer;

pub use error::{Error, Result};
