//! Passive-magnet self-touch sensing toolkit.
//!
//! Simulates magnetometer-array recordings of passive-magnet gestures and
//! runs the full detection pipeline on them: exponential smoothing,
//! training-free nearby-magnet triggering with environmental-field
//! rejection, contrastive-embedding classification, and event-level
//! majority voting. An evaluation harness reproduces the sensor-count
//! design study and the ablation/robustness experiments on synthetic data.
//!
//! The numeric core is generic over the scalar type (`f32` or `f64`, via
//! [`scalar::Real`]); the `*64` aliases below are what the pipeline and CLI
//! use.

pub mod error;
pub mod scalar;
pub mod vec;

pub mod frame;
pub mod io;
pub mod linalg;

pub mod encoder;
pub mod fieldsim;
pub mod magdelta;
pub mod preprocess;

pub use error::{MagsenseError, Result};
pub use frame::{sliding_windows, GestureEvent, Meta, Recording, SampleFrame, Window};
pub use scalar::Real;

/// Double-precision aliases used by the pipeline, harness, and CLI.
pub type SampleFrame64 = frame::SampleFrame<f64>;
pub type Recording64 = frame::Recording<f64>;
pub type Window64 = frame::Window<f64>;
pub type SensorArray64 = fieldsim::SensorArray<f64>;
pub type MagnetTrajectory64 = fieldsim::MagnetTrajectory<f64>;
pub type EnvironmentField64 = fieldsim::EnvironmentField<f64>;
pub type CalibrationProfile64 = preprocess::CalibrationProfile<f64>;
pub type TriggerState64 = magdelta::TriggerState<f64>;

/// Single-precision aliases for embedded-style use.
pub type SampleFrame32 = frame::SampleFrame<f32>;
pub type Recording32 = frame::Recording<f32>;
pub type Window32 = frame::Window<f32>;
pub type SensorArray32 = fieldsim::SensorArray<f32>;
pub type MagnetTrajectory32 = fieldsim::MagnetTrajectory<f32>;
pub type EnvironmentField32 = fieldsim::EnvironmentField<f32>;
pub type CalibrationProfile32 = preprocess::CalibrationProfile<f32>;
pub type TriggerState32 = magdelta::TriggerState<f32>;
