//! Sparse storage and the direct solver used by the shift-invert eigensolver.

mod cholesky;
mod ordering;
mod sparse;

pub use cholesky::EnvelopeCholesky;
pub use ordering::reverse_cuthill_mckee;
pub use sparse::CsrMatrix;
