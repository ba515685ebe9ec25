//! UAV-to-X cellular uplink simulator.
//!
//! A single cell with one base station, ground cellular users and a UAV
//! swarm. Each slot the UAVs either upload sensed data directly (U2I) or
//! through a relay UAV (U2U underlay), and the subchannel allocation and
//! UAV speeds are chosen jointly to maximize the uplink sum-rate.
//!
//! Numeric modules are generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc_u2i;
pub mod alloc_u2u;
pub mod channel;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod isasoa;
pub mod matrix;
pub mod scalar;
pub mod scenario;
pub mod speed;

pub use error::{Error, Result};
pub use matrix::{BinaryMatrix, PhiMatrix, PsiMatrix};
pub use scalar::Scalar;

pub type Real = f64;
pub type Vec3 = scenario::Vec3<Real>;
pub type UavState = scenario::UavState<Real>;
pub type CuState = scenario::CuState<Real>;
pub type ScenarioState = scenario::ScenarioState<Real>;
pub type ChannelParams = channel::ChannelParams<Real>;
pub type LinkPowers = channel::LinkPowers<Real>;
pub type RateReport = channel::RateReport<Real>;
pub type AssignmentInstance = alloc_u2i::AssignmentInstance<Real>;
pub type U2uInstance = alloc_u2u::U2uInstance<Real>;
pub type AlgorithmParams = isasoa::AlgorithmParams<Real>;
pub type SlotDecision = isasoa::SlotDecision<Real>;
pub type SpeedBounds = speed::SpeedBounds<Real>;
pub type SpeedDecision = speed::SpeedDecision<Real>;
