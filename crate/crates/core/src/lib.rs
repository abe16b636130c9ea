//! Discrete developable surfaces modeled as orthogonal geodesic nets.
//!
//! A net is a quad grid whose inner vertices carry four edges with equal
//! consecutive angles. The crate provides the net model with glue/cut
//! editing, the constraint residuals, a quadratic-penalty solver, geometric
//! diagnostics, constructive extension of nets and isometric interpolation
//! of 4Q nets.

pub mod analysis;
pub mod constraints;
pub mod energies;
mod error;
pub mod extension;
pub mod fixtures;
pub mod geometry;
pub mod interpolation;
pub mod io;
pub mod net;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::Vec3;
pub use net::{QuadNet, Star, StarKind, VertexId};
