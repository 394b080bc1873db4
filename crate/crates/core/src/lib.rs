//! Numerical laboratory for the Ricci-DeTurck flow from low-regularity
//! initial metrics glued to the flat metric on a box in `R^n` (n = 2, 3).
//!
//! The crate is organized around five layers:
//!
//! * [`grid`] / [`field`] / [`diff`] / [`norms`] / [`io`] — tensor fields on a
//!   uniform grid, finite-difference derivatives, quadrature and the norm
//!   suite (`C^0`, `L^p`, weighted `W^{1,p}`, the parabolic X-norm).
//! * [`curvature`] — Christoffel symbols, Ricci/scalar curvature, the Riemann
//!   norm and the DeTurck vector field against the Euclidean background.
//! * [`flow`] — explicit time integration of the flow, the conjugate heat
//!   equation and its kernel, and geodesic distance under an evolving metric.
//! * [`weak`] — low-regularity constructions: cutoffs, gluing to flat,
//!   `W^{1,p}` cone data, the distributional scalar curvature pairing and the
//!   energy functional.
//! * [`verify`] — experiment harness: shrinking-ball lower-bound estimation,
//!   decay-exponent fits, the heat-kernel double-integral check and the
//!   end-to-end lower-bound pipeline.

pub mod curvature;
pub mod diff;
pub mod error;
pub mod field;
pub mod fit;
pub mod flow;
pub mod grid;
pub mod io;
pub mod norms;
pub mod verify;
pub mod weak;

pub use error::CoreError;
pub use field::{MetricField, ScalarField, Sym2Field, VectorField};
pub use grid::GridSpec;
pub use norms::{NormKind, NormResult};
