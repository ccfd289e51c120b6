//! Numerical laboratory for quantitative unique continuation of the
//! three-dimensional Lamé system with variable `C^1` coefficients.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleman;
pub mod cauchy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod grid;
pub mod lame;
pub mod quadrature;
pub mod solutions;
pub mod spectral;
pub mod stencil;
pub mod three_spheres;

pub use error::{LabError, Result};

/// Points and vectors in R^3.
pub type Point = nalgebra::Vector3<f64>;
