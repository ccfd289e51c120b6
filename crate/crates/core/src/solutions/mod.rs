//! Exact solutions for constant moduli and a finite-difference solver for
//! variable ones.

mod fd;
mod harmonic;
mod kelvin;

pub use fd::{interior_ratio, interior_ratio_grid, solve_dirichlet, GridSolution, SolverMeta};
pub(crate) use fd::{dot, from_flat, to_flat};
pub use harmonic::{harmonic_gradient_field, HarmonicGradient};
pub use kelvin::{kelvin_field, KelvinField, KelvinSource};
