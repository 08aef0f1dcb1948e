//! Steady rotational Euler flow through a circular cylinder.
//!
//! The solution is built as a perturbation of an irrotational base flow.
//! Each iteration transports the vorticity along the streamlines of the
//! current velocity and reconstructs a velocity perturbation from it by a
//! div-curl solve; the iteration is run to a fixed point.

// Index loops mirror the stencils; negated comparisons let NaN fail checks.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod base_flow;
pub mod boundary_data;
pub mod columnar;
pub mod divcurl;
pub mod error;
pub mod euler;
pub mod field;
pub mod grid;
pub mod interp;
pub mod norm;
pub mod ops;
pub mod poisson;
pub mod transport;

pub use error::{Error, Result};
pub use field::{Frame, ScalarField, VectorField};
pub use grid::{build_grid, CylGrid, CylPoint, Face, NodeTag};
pub use norm::{norm, NormKind};
