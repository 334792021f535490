//! Multi-UAV smart-agriculture simulator with a cooperative multi-agent
//! actor-critic trainer (elite imitation and shared ensemble critics).

pub mod comms;
pub mod config;
pub mod energy;
pub mod error;
pub mod harness;
pub mod marl;
pub mod mdp;
pub mod nn;
pub mod seed;
pub mod world;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use mdp::{Env, EnvParams};
pub use world::{Role, Scenario};
