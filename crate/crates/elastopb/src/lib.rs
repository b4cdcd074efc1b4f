//! Desk-scale solver for the coupled electro-elastic response of solvated
//! molecules: a Piola-transformed Poisson-Boltzmann solver with singularity
//! splitting, Gaussian-regularized electrostatic forces, a St Venant-Kirchhoff
//! elasticity solver, and the fixed-point driver that couples them.
//!
//! The crate is organized around the pipeline
//! displacement -> harmonic extension -> Piola fields -> PBE solve ->
//! force assembly -> elasticity solve -> new displacement,
//! with a radially symmetric Born-ion oracle used as the independent
//! reference for validation.

pub mod charge;
pub mod config;
pub mod coupled;
pub mod elasticity;
pub mod error;
pub mod fem;
pub mod force;
pub mod la;
pub mod mesh;
pub mod norms;
pub mod par;
pub mod pbe;
pub mod piola;
pub mod radial;
pub mod runner;
pub mod sparse;

pub use error::{Error, Result};
