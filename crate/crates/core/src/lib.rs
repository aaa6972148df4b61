//! Frozen Gaussian approximation with surface hopping (FGA-SH) for two-level
//! semiclassical matrix Schrödinger equations, plus a time-splitting spectral
//! reference solver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod ensemble;
pub mod error;
pub mod fga;
pub mod model;
pub mod reconstruct;
pub mod reference;
pub mod runner;
pub mod sampling;

pub use config::RunConfig;
pub use error::{FgaError, Result};
pub use model::{
    adiabatic_decompose, fd_coupling_oracle, AdiabaticData, ModelKind, ModelPotential,
};
pub use sampling::{
    build_partition, initial_amplitude, reconstruct_initial, InitialAmplitudeField, InitialDatum,
    PartitionPlan, PhaseSpaceMesh, UniformGrid,
};
