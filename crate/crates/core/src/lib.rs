//! Information design for nonatomic routing games with affine, state-dependent
//! link delays.
//!
//! A planner who knows the network state privately recommends paths to
//! travelers. The crate computes the system optimum, Bayesian Wardrop
//! equilibria under a signaling rule, checks obedience of direct rules and
//! decides whether the optimum can be induced by any obedient rule.

pub mod bwe;
mod cg;
pub mod costs;
pub mod designer;
pub mod error;
pub mod linalg;
pub mod network;
pub mod optimality;
pub mod optimum;
pub mod scenario;
pub mod signaling;
pub mod uncertainty;

pub use error::{Error, Result};
