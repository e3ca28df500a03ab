//! Triangular meshes, P1 finite elements and sparse SPD solves.

mod assembly;
mod field;
pub mod io;
mod locate;
mod mesh;
mod refine;
pub mod sparse;

pub use assembly::{assemble_diffusion, assemble_scalar_diffusion, gradient, Coefficient, SparseSystem};
pub use field::{Bounds, ConductivityMap, ScalarField, VectorField};
pub use locate::Locator;
pub use mesh::{BoundaryEdge, BoundaryTag, Edge, Point, TriMesh, DEGENERATE_AREA_RATIO};
pub use refine::{refine, refine_with_parents, Refinement};
pub use sparse::{CsrMatrix, SolverKind, SOLVE_REL_TOL};

pub(crate) use field::same_mesh;

/// Solves an assembled system with the default direct solver.
pub fn solve(system: &SparseSystem) -> crate::Result<ScalarField> {
    system.solve()
}
