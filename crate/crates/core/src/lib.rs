//! Nodal discontinuous Galerkin solver for the 2D compressible Euler
//! equations on structured curvilinear quad grids, with an overset-grid
//! subsystem and a shock-alignment workflow: detect troubled cells on a
//! coarse grid, fit a b-spline to the shock front, build a shock-aligned
//! overset grid, and re-run with limiting and a low-dissipation flux
//! confined to the overset grid.

pub mod basis;
pub mod cases;
pub mod euler;
pub mod limiter;
pub mod dg;
pub mod mesh;
pub mod overset;
pub mod shockfit;
pub mod system;

pub use basis::{cached_basis, gauss_legendre, NodalBasis, QuadratureRule1D};
pub use euler::{ConsState, FluxKind, GasModel, PrimState};
pub use mesh::{BoundaryTag, Face, GridGeometry, StructuredBlock};
