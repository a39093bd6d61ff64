//! Deterministic chaos-engineering harness for networked industrial control
//! systems.
//!
//! A distributed averaging PI control layer runs over a directed
//! communication graph, drives a continuous-time plant through a simulated
//! network, and is subjected to scheduled fault injections. Experiments
//! report a hypothesis verdict, the blast radius of the faults and
//! resilience-curve landmarks.
//!
//! The numeric modules ([`topology`], [`plant`], [`control`], and the
//! signal parts of [`chaos`]) are generic over [`Scalar`]; the aliases below
//! fix the common instantiations.

// `!(x > 0)` style checks are there to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod config;
pub mod control;
pub mod error;
pub mod experiment;
pub mod netsim;
pub mod plant;
pub mod report;
pub mod scalar;
pub mod sim;
pub mod spectral;
pub mod topology;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TopologyF64 = topology::Topology<f64>;
pub type TopologyF32 = topology::Topology<f32>;
pub type PlantStateF64 = plant::PlantState<f64>;
pub type PlantStateF32 = plant::PlantState<f32>;
pub type DisturbanceF64 = plant::DisturbanceSignal<f64>;
pub type ProcessLimitsF64 = plant::ProcessLimits<f64>;
pub type EquilibriumParamsF64 = plant::EquilibriumParams<f64>;
pub type TecSurrogateF64 = plant::TecSurrogate<f64>;
pub type TecSurrogateF32 = plant::TecSurrogate<f32>;
pub type LinearPlantF64 = plant::LinearIntegratorPlant<f64>;
pub type DisutilityF64 = control::DisutilityFunction<f64>;
pub type DisutilityF32 = control::DisutilityFunction<f32>;
pub type SetpointSolutionF64 = control::SetpointSolution<f64>;
pub type AgentStateF64 = control::AgentState<f64>;
pub type PerturbationF64 = chaos::PerturbationSequence<f64>;
pub type PerturbationF32 = chaos::PerturbationSequence<f32>;
