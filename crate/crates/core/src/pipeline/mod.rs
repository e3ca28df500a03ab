//! Run configuration, phantoms and noise sweeps over both reconstructions.

mod config;
mod phantom;
mod sweep;

pub use config::{
    DeconvConfig, Geometry, MeshSizes, Method, MethodChoice, PulsePlan, RunConfig, DEFAULT_PHASE,
    MIN_MESH_RATIO,
};
pub use phantom::{make_phantom, PhantomSpec, Shape, SHAPE_MARGIN};
pub use sweep::{
    corrupt, distinct_meshes, reconstruct, run_pipeline, synthesize, NoiseSweepReport,
    Reconstruction, RowFailure, SweepRow, Synthesis,
};
