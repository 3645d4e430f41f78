//! Numerical laboratory for null-control experiments on the 2D Boussinesq
//! system (velocity + temperature, buoyancy coupling) with a reduced control
//! set: a distributed scalar control acting on the temperature equation only,
//! plus an optional velocity-component observation used to probe the
//! three-dimensional functional structure on 2D runs.
//!
//! The pipeline is organized around four pillars:
//!
//! * `weights`: Carleman-type weight families built from a boundary-flat
//!   bump `eta` and degenerate time profiles; every exponential factor used
//!   downstream derives from these arrays.
//! * `forward` / `adjoint`: MAC staggered-grid solvers for the linearized
//!   and nonlinear systems, with the adjoint constructed as the exact
//!   algebraic transpose of the forward one-step map.
//! * `hum`: penalized dual (HUM) optimization over terminal adjoint data by
//!   conjugate gradients, yielding weighted distributed controls.
//! * `picard`: fixed-point outer loop that re-solves the linear control
//!   problem with lagged quadratic sources from the nonlinear trajectory.
//!
//! `verify` adds observability-ratio sampling and the Neumann mass
//! obstruction demonstration; `io` holds the deterministic CSV writers.

pub mod adjoint;
pub mod domain;
pub mod error;
pub mod fdm;
pub mod forward;
pub mod grid;
pub mod hum;
pub mod io;
pub mod ops;
pub mod picard;
pub mod verify;
pub mod weights;

pub use domain::{BoxRegion, DomainSpec};
pub use error::CoreError;
pub use grid::{GridSpec, MaskField, ScalarField, VectorField};
pub use weights::{EtaField, TimeProfile, WeightBundle, WeightReport};
