//! Behavioral policy inference on a 12-state, 6-action model of
//! social-platform interaction, with detection, perturbation, clustering and
//! temporal analytics built on top.

pub mod analytics;
pub mod cluster;
pub mod cohort;
pub mod detect;
pub mod error;
pub mod gail;
pub mod ingest;
pub mod io;
pub mod irl;
pub mod mdp;
pub mod nn;
mod par;
pub mod policy;
pub mod seed;
pub mod simulate;

pub use error::{Error, Result};
pub use ingest::{Label, RawEvent, UserEventLog};
pub use mdp::{Action, Environment, Stance, State, Step, Trajectory, N_ACTIONS, N_STATES};
pub use policy::{Policy, PolicySource};
