//! Stochastic actor-oriented models for longitudinal network panels with
//! actor-level random coefficients: simulation, method-of-moments estimation
//! and model evaluation.

pub mod cli;
pub mod config;
pub mod effects;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod network;
pub mod rng;
pub mod simulation;

pub use effects::{EffectKind, Model, ModelSpec, Statistic, VarianceModel};
pub use error::{Error, Result};
pub use network::{Candidate, Network, PanelData};
pub use simulation::{ParameterPoint, VarianceParams};
