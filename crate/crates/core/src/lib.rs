//! Simulation and analysis of planar antagonistic tendon-driven continuum
//! robots modelled as port-Hamiltonian rigid-link chains, together with a
//! potential-energy-shaping controller that regulates position and stiffness
//! at the same time.
//!
//! The crate is organised by concern:
//!
//! * [`model`]: parameters, potentials, kinematics, inertia and the
//!   configuration-dependent input matrix.
//! * [`dynamics`]: the port-Hamiltonian vector field, a fixed-step RK4
//!   integrator and quasi-static stiffness probes.
//! * [`controller`]: input transformation, desired potential and the
//!   three-term control law.
//! * [`analysis`]: assignable equilibria, stiffness matrices, shifted
//!   equilibria and stiffness sweeps.
//! * [`ident`]: synthetic static datasets and least-squares identification.
//! * [`scenario`]: configuration documents, batch runs, CSV and SVG output.

pub mod analysis;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod ident;
pub mod linalg;
pub mod model;
pub mod scenario;
pub mod svg;

pub use error::{Error, Result};
pub use nalgebra;
pub use model::{RobotParams, State};
