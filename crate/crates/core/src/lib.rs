//! Simulation of parametrically coupled mechanical resonator networks:
//! perfect-transfer coupling synthesis, exact envelope evolution, full
//! equation-of-motion integration, lock-in demodulation and spectra.
//!
//! Numerics are generic over [`Real`] (`f32`, `f64`); the aliases below fix
//! `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod full;
pub mod linalg;
pub mod lockin;
pub mod model;
pub mod rwa;
pub mod scalar;
pub mod spectrum;
pub mod synthesis;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ResonatorSpec = model::ResonatorSpec<f64>;
pub type CouplingSpec = model::CouplingSpec<f64>;
pub type Network = model::Network<f64>;
pub type Segment = model::Segment<f64>;
pub type Schedule = model::Schedule<f64>;
pub type EnvelopeState = model::EnvelopeState<f64>;
pub type MechanicalState = model::MechanicalState<f64>;
pub type ExcitationPulse = model::ExcitationPulse<f64>;
pub type PstProfile = synthesis::PstProfile<f64>;
pub type VoltageCalibration = synthesis::VoltageCalibration<f64>;
pub type CalibrationPoint = synthesis::CalibrationPoint<f64>;
pub type CouplingMatrix = rwa::CouplingMatrix<f64>;
pub type EnvelopeTrajectory = rwa::EnvelopeTrajectory<f64>;
pub type ResponseCurve = spectrum::ResponseCurve<f64>;
pub type PumpTerm = full::PumpTerm<f64>;
pub type MechanicalTrajectory = full::MechanicalTrajectory<f64>;
pub type LockInConfig = lockin::LockInConfig<f64>;
pub type DemodChannel = lockin::DemodChannel<f64>;
