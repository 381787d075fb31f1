//! Surrogate building energy model, HVAC control environment and the
//! reinforcement-learning agents trained on it.
//!
//! The crate is organized bottom-up: [`bem`] advances the building state by
//! one half-hour step, [`env`] wraps it as an episodic control problem,
//! [`nn`] and [`agents`] provide the learners, [`train`] runs them and
//! [`analysis`] compares the resulting rollouts. [`policy_io`] writes trained
//! actors in a plain-text format that needs no code from this crate to run.

pub mod agents;
pub mod analysis;
pub mod bem;
pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod nn;
pub mod policy_io;
pub mod train;

pub use agents::{Controller, DqnAgent, DqnConfig, FixedController, QLearningAgent, QLearningConfig, SacAgent, SacConfig};
pub use analysis::{Intersection, TermTrace, TransferMatrix};
pub use bem::{BuildingParams, ForcingStep, HvacSetpoints, ThermalState};
pub use config::KeyValues;
pub use data::{city_preset, city_presets, CityPreset, ForcingSeries, SyntheticClimateSpec};
pub use env::{Action, ContinuousAction, DiscreteAction, EpisodeConfig, HvacEnv, Observation, RewardConfig};
pub use error::{Error, Result};
pub use policy_io::PolicyArtifact;
pub use train::{evaluate, train_run, AgentKind, RunConfig, RunLog, Settings, TrainedAgent};
