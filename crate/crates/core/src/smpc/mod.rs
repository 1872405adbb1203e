//! Stochastic MPC: scenario propagation of moments, Cantelli-tightened
//! chance constraints, quadratic and MMD objectives, and a penalty solver.

mod config;
mod controller;
mod cost;
mod decision;
mod dynamics;
mod gaussian;
mod problem;
mod scenario;
mod solver;
mod terminal;

pub use config::{cantelli_kappa, SmpcConfig};
pub use controller::{ControlStep, Controller, Variant, VariantTag};
pub use cost::{
    chance_penalty_input, chance_penalty_state, mmd_stage_cost, quadratic_cost, quadratic_stage, tightened_violations,
    MomentState,
};
pub use decision::{Layout, SmpcDecision};
pub use dynamics::{jacobians, Dynamics, LinearPlant};
pub use gaussian::GaussianResidual;
pub use problem::{CostKind, Problem, Propagation, Rollout, StepRecord, Tracking};
pub use scenario::{ScenarioSet, StepDesign};
pub use solver::{flags, solve, SolveReport};
pub use terminal::{linearize, terminal_weight};
