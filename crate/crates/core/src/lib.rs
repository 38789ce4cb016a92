//! Multi-spectral light-field registration.
//!
//! Peripheral views of a camera array are rotated onto horizontal epipolar
//! lines, matched against the center view, fused into one disparity map and
//! warped back. Occluded pixels are found by a layered sweep and filled with a
//! guided bilateral-grid fit against the center view.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod disparity;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod occlusion;
pub mod pipeline;
pub mod reconstruct;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use geometry::{ArrayGeometry, GeometryConfig, ViewGeometry};
pub use image::{DisparityMap, OcclusionMask, SpectralImage};
