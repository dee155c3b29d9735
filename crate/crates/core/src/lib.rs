//! Channel synthesis, passive beamforming and capacity analysis for an
//! IRS-aided decode-and-forward relay link.
//!
//! The numerical core is generic over the real scalar type (see [`Real`]);
//! `f64` aliases for the common types are exported at the crate root.

pub mod beamforming;
pub mod capacity;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod scalar;

pub use error::{Error, Result};
pub use geometry::{build_scene, Deployment, Scenario, Scene};
pub use scalar::{Real, Vec3};

pub type Scenario64 = geometry::Scenario<f64>;
pub type Scene64 = geometry::Scene<f64>;
pub type Panel64 = geometry::Panel<f64>;
pub type LinkChannel64 = channel::LinkChannel<f64>;
pub type PhaseProfile64 = beamforming::PhaseProfile<f64>;
pub type Scenario32 = geometry::Scenario<f32>;
pub type CapacityReport64 = capacity::CapacityReport<f64>;

pub use capacity::{ChannelSource, RicianSpec, Strategy};
pub use experiment::{ExperimentConfig, ResultRow};
