//! Data-driven reduced-order modeling from snapshot and sample files.
//!
//! * [`dmd`]: exact dynamic mode decomposition, reconstruction and forecasting.
//! * [`podi`]: POD bases and parametric interpolation of modal coefficients.
//! * [`asub`]: active subspaces of scalar functions from gradient samples.
//! * [`morph`]: free-form deformation, IDW/RBF morphing and ASCII STL I/O.
//! * [`snapshots`]: snapshot datasets and their CSV / binary formats.
//! * [`linalg`]: the dense kernels everything above is built on.

pub mod asub;
pub mod dmd;
pub mod error;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod morph;
pub mod podi;
pub mod snapshots;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, Matrix, RankSpec};
