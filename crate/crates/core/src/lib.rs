//! Quasi-static model of a load-based variable transmission (LBVT) knee.
//!
//! A linear actuator drives the knee through a four-bar linkage whose output
//! link ends at the tip of a pre-tensioned six-joint spring chain. Below a
//! load threshold the chain stays closed; above it the chain opens towards an
//! end-stop, the knee-to-tip distance grows and with it the transmission
//! ratio between actuator force and knee torque.

pub mod analysis;
pub mod chain;
pub mod cli;
pub mod config_file;
pub mod equilibrium;
pub mod error;
pub mod geom;
pub mod linkage;
pub mod model;

pub use error::{Error, Result};
pub use geom::Vec2;
pub use model::{
    per_joint_stiffness, total_stiffness, validate_config, Branch, ChainState, EquilibriumResult,
    LinkageState, MechanismConfig, Regime, Violation,
};
