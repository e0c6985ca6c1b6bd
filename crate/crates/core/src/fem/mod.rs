//! Finite-element building blocks: quadrature, P1 and MINI elements, dof
//! numbering and assembly.

pub mod assembly;
pub mod dofmap;
pub mod element;
pub mod fields;
pub mod quadrature;

pub use assembly::{
    assemble_advection, assemble_boundary_load, assemble_boundary_mass, assemble_lumped_mass, assemble_mass,
    assemble_mini_blocks, assemble_scalar_load, assemble_stiffness, assemble_vector_boundary_load,
    assemble_vector_load, MiniBlocks,
};
pub use dofmap::DofMap;
pub use element::TriangleGeometry;
pub use fields::{cell_values, interpolate_p1, p1_at_quad, p1_gradient, MiniVelocity, QuadField};
pub use quadrature::{interior_rule, QuadratureRule, EDGE_GAUSS2, NQ};

use std::sync::Arc;

/// Shared scalar function of position.
pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
/// Shared vector function of position.
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
/// Shared scalar function of position and time.
pub type SpaceTimeFn = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;
