//! Numerical laboratory for viscosity solutions of degenerate parabolic
//! equations `∂t u − F(t, x, u, Du, D²u) = 0`.
//!
//! The crate solves model problems with a monotone explicit scheme and then
//! exercises the comparison machinery on the resulting lattice functions:
//! doubling of variables, penalty-limit diagnostics, terminal-time jets and
//! the theorem of sums, Perron cone envelopes and space-time regularity
//! barriers. Every numerical type is generic over [`Scalar`] (`f32`/`f64`);
//! the aliases below fix `f64`, which is what the CLI uses.

// `!(x > 0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod doubling;
pub mod error;
pub mod fields;
pub mod jets;
pub mod linalg;
pub mod operators;
pub mod perron;
pub mod regularity;
pub mod scalar;
pub mod scheme;

pub use error::{LabError, Result};
pub use scalar::Scalar;

pub type Operator = operators::OperatorSpec<f64>;
pub type Grid = fields::GridFunction<f64>;
pub type Slice = fields::SpatialGrid<f64>;
pub type Lattice = fields::SpatialLattice<f64>;
pub type Modulus = fields::ModulusCurve<f64>;
pub type Jet = jets::Jet<f64>;

pub type Operator32 = operators::OperatorSpec<f32>;
pub type Grid32 = fields::GridFunction<f32>;
