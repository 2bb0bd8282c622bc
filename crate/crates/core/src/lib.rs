//! Simulation and analysis library for a single-actuator, three-fingered
//! tendon-driven perching hand mounted on a tilt-rotor quadrotor.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attitude;
pub mod flight_controller;
pub mod log;
pub mod rigid_body_sim;
pub mod rotor_allocation;
pub mod scenario;
pub mod tendon_hand;

pub use nalgebra;

pub use flight_controller::{ControllerState, PerchPhase, PidGains};
pub use rigid_body_sim::{BeamConstraint, BodyState, EpisodeLog, InertialParams};
pub use rotor_allocation::{RotorGeometry, ThrustCommand, WrenchAllocator, WrenchVector};
pub use scenario::ScenarioConfig;
pub use tendon_hand::{GraspResult, HandParams};
