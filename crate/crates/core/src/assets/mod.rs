//! Loading meshes and experiment descriptions.

pub mod config;
pub mod obj;
pub mod primitives;

pub use config::{ExperimentConfig, ObjectSource, ObjectSpec, OutputPaths};
pub use obj::{load_mesh_obj, parse_obj};
pub use primitives::{builtin_primitive, parse_primitive_spec, PRIMITIVE_NAMES};
