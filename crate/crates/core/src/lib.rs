//! Riccati observers for velocity-aided attitude estimation of accelerated
//! vehicles, using two body-frame velocity components, one inertial vertical
//! velocity component, an IMU and a magnetometer.

pub mod attitude;
pub mod error;
pub mod harness;
pub mod observability;
pub mod observer;
pub mod riccati;
pub mod scenario;
pub mod truth;

pub use error::{Error, Result};
