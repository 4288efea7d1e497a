//! Lattice kinetic scheme solvers and adjoint-based topology optimization for
//! 2D fluid and thermal-fluid problems.

pub mod alks;
pub mod cases;
pub mod design;
pub mod error;
pub mod lattice;
pub mod lks;
pub mod manifest;
pub mod memory;
pub mod optimizer;
pub mod output;
pub mod problem;
pub mod sensitivity;
pub mod shape;
pub mod verify;

pub use design::{DesignField, FilterChain, FilterParams, InterpolationParams};
pub use error::{Error, Result};
pub use lattice::{Grid, ScalarField, TensorField, VectorField};
pub use lks::boundary::{BoundarySpec, ResolvedBoundary};
pub use lks::{Lks, Materials, PhysicsParams, StateFields, StateHistory, SteadyOptions};
