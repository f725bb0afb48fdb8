//! Model-based 6D pose refinement by contour alignment.
//!
//! A hypothesis pose is rendered, its occluding contour is lifted to a sparse
//! 3D point set, and a rigid update is found that moves the projected points
//! onto the zero level set of the scene contour's distance field. A second
//! term runs the other way, pulling scene contour points onto the
//! hypothesis' field. The [`bench`] module replays synthetic perturbation
//! experiments on top of the refiner.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assets;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod loss;
pub mod raster;
pub mod refine;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Pose, TriangleMesh, UnitQuaternion, Vec3};
