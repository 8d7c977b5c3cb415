//! Functional-map shape correspondence with resolvent-based
//! Laplacian-commutativity masks.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`.

pub mod descriptors;
pub mod error;
pub mod eval;
pub mod export;
pub mod fmap;
pub mod linalg;
pub mod masks;
pub mod mesh;
pub mod p2p;
pub mod pipeline;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mesh = mesh::TriangleMesh<f64>;
pub type Spectrum = spectral::SpectralDecomposition<f64>;
