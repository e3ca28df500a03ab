//! Simulation and reconstruction toolkit for ultrasonically induced
//! Lorentz-force impedance imaging in two dimensions.
//!
//! The crate is organised along the data flow of an experiment:
//!
//! * [`mesh_fem`]: triangular meshes, P1 assembly, sparse solves, refinement;
//! * [`forward`]: virtual and internal potentials, Lorentz source, measurement
//!   curves and noise;
//! * [`deconv`]: Wiener deconvolution of measurement curves;
//! * [`virtual_current`]: conversion of deconvolved profiles into the internal
//!   current `σ∇U`;
//! * [`recon_control`]: adjoint-based optimal-control reconstruction;
//! * [`recon_orthofield`]: orthogonal-field / viscosity reconstruction with
//!   adaptive refinement;
//! * [`pipeline`]: configuration, phantoms and noise sweeps tying it together.

pub mod deconv;
pub mod error;
pub mod forward;
pub mod virtual_current;
pub mod mesh_fem;
pub mod pipeline;
pub mod recon_control;
pub mod recon_orthofield;

pub use error::{Error, Result};
