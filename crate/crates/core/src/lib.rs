//! Neural SDF surface reconstruction from posed multi-view RGB images.
//!
//! The pipeline optimizes a multi-resolution hash-encoded signed distance
//! field by differentiable SDF volume rendering, regularized with an eikonal
//! term on numerically differenced surface normals and a discrete-Laplacian
//! curvature prior, under a progressive level-of-detail schedule. Trained
//! fields are meshed with marching cubes and scored against analytic
//! ground-truth scenes (Chamfer distance, F1, PSNR).
//!
//! All numerics are generic over the scalar type ([`scalar::Real`]); training
//! binaries instantiate `f32`, finite-difference oracles `f64`. Concrete
//! aliases for the common instantiations live at the crate root.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod driver;
pub mod encoding;
pub mod field;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod mlp;
pub mod mesh;
pub mod mode;
pub mod renderer;
pub mod scalar;
pub mod sh;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

/// Training-precision scalar used by the CLI.
pub type TrainScalar = f32;
/// Scalar used by finite-difference test oracles.
pub type OracleScalar = f64;

pub type Vec3f = geometry::Vec3<f32>;
pub type Vec3d = geometry::Vec3<f64>;
pub type Cameraf = geometry::Camera<f32>;
pub type Camerad = geometry::Camera<f64>;
