//! Floating isogeometric analysis for 2D Lagrangian large-deformation flow.
//!
//! The discretization couples a tensor-product B-spline patch with per-row
//! "floating" maps that slide each row's characteristic basis along one
//! parametric axis. Quadrature points are anchored at characteristic element
//! boundaries and follow the material exactly, so history variables never
//! need remapping when the parametrization is regulated or refined.
//!
//! Index convention: the literature writes `i = 1..I_j`, `j = 1..J`; this
//! crate uses 0-based indices everywhere, so a documented tuple `(i, j)`
//! appears in code as `(i - 1, j - 1)`.

pub mod error;
pub mod linalg;
pub mod patch;
pub mod quadrature;
pub mod refinement;
pub mod regulation;
pub mod solver;
pub mod spline;
#[doc(hidden)]
pub mod testing;

pub use error::{FligaError, Result};
