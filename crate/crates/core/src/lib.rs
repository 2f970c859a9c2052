//! Steering the density of a passive particle swarm by boundary
//! actuation.
//!
//! Four actuator stacks on the sides of the unit square induce an
//! exponentially decaying velocity field that transports a particle
//! density governed by an advection-diffusion equation with no-flux
//! boundary conditions. This crate discretizes that model with P1 finite
//! elements and Crank-Nicolson time stepping, computes exact reduced
//! gradients of the tracking cost through the discrete adjoint, and
//! solves the resulting box-constrained control problem with a projected
//! spectral gradient method. A reflected-SDE particle simulator provides
//! microscopic validation, and a diagnostics suite monitors every
//! structural identity the discretization is built on.
//!
//! The crate is organized along the pipeline:
//!
//! * [`mesh`]: structured triangulation with side-labelled boundary,
//! * [`actuation`]: control basis, decay model, induced velocity field,
//! * [`assembly`]: mass/diffusion/transport/reaction/flux operators,
//! * [`solver`]: forward, adjoint (discrete and continuous) and tangent
//!   Crank-Nicolson sweeps,
//! * [`ocp`]: discrete cost, reduced gradient, projected optimizer,
//! * [`particles`]: reflected Euler-Maruyama ensemble and histograms,
//! * [`diagnostics`]: residual and energy monitors,
//! * [`config`] / [`export`]: run configuration and CSV output.

pub mod actuation;
pub mod assembly;
pub mod band;
pub mod config;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod mesh;
pub mod ocp;
pub mod particles;
pub mod quadrature;
pub mod solver;
pub mod sparse;

pub use actuation::{ActuatorModel, ControlBasis, ControlTrajectory};
pub use assembly::{assemble_operators, DensityField, OperatorSet};
pub use config::ProblemConfig;
pub use density::DensitySpec;
pub use diagnostics::DiagnosticsReport;
pub use error::{Error, Result};
pub use mesh::{Mesh, Side};
pub use ocp::{optimize, OptResult, OptStatus, OptimizerOptions, Problem};
pub use particles::ParticleEnsemble;
pub use solver::{
    solve_adjoint_continuous, solve_adjoint_discrete, solve_forward, solve_tangent,
    AdjointTrajectory, StateTrajectory,
};
