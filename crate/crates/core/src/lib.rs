//! Numerical laboratory for observation-manipulation (gaslighting) games on
//! partially observed, risk-sensitive stochastic control systems.
//!
//! The DM filters unnormalized information states on a state grid and
//! controls a scalar system to minimize an exponential-of-sum cost. A
//! gaslighter replaces the observation density the DM's filter divides by,
//! subject to a stealthiness budget, to steer the system toward its own goal.
//!
//! Modules, bottom up:
//! - [`grid`]: grids, quadrature, densities and the L¹ metric.
//! - [`model`]: the controlled system and trajectory simulation.
//! - [`filter`]: nominal and gaslit information-state updates and the two cost representations.
//! - [`robustness`]: constants and the deviation bounds of the filter and the DM's cost.
//! - [`stealth`]: stage-wise stealthiness and the gaslighter's design cost.
//! - [`dp`]: the DM's dynamic program over α-vectors and a brute-force oracle.
//! - [`stackelberg`]: the gaslighter's objective and equilibrium search.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dp;
pub mod effort;
pub mod error;
pub mod filter;
pub mod grid;
pub mod model;
pub mod policy;
pub mod robustness;
pub mod scenarios;
pub mod stackelberg;
pub mod stats;
pub mod stealth;

pub use dp::{backward_induction, AlphaVectorSet, DpOptions};
pub use effort::{EffortShape, GaslightEffort};
pub use error::{Error, Result};
pub use grid::{Grid, GridDensity, GridFunction, InformationState};
pub use model::{ModelSpec, SamplingMode, SystemModel, Trajectory};
pub use policy::ControlPolicy;
pub use stats::Estimate;
