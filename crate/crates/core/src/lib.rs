//! Discrete fully nonlinear parabolic flows `u_t = F(D²u^m)` on convex domains.
//!
//! The crate is generic over the scalar type through [`Real`]; `f64` aliases are
//! provided at the root for convenience.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barriers;
pub mod eigen;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod matrix;
pub mod scalar;
pub mod stencil;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{
    canonical_initial_data, distance_field, CbReport, Domain, DomainDescriptor, Field, Grid,
    InitialData, InitialKind, NodeClass,
};
pub use matrix::{
    pucci_minus, pucci_plus, EllipticitySpec, OperatorKind, OperatorVariant, SymMatrix,
};
pub use scalar::Real;

pub type Domain64 = Domain<f64>;
pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type SymMatrix64 = SymMatrix<f64>;
pub type Operator64 = OperatorKind<f64>;
