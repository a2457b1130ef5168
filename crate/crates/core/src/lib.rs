//! Decentralized H-infinity synthesis of biasing-attack detectors for
//! networks of distributed state observers.
//!
//! The crate is organised along the design workflow:
//!
//! * [`model`] holds the plant, sensor, link, topology and tracker types and
//!   validates a scenario.
//! * [`synthesis`] performs the centralized coupling/LMI setup and then, per
//!   node and independently, integrates the differential Riccati equation and
//!   extracts the detector gains.
//! * [`signals`] generates deterministic disturbance and attack inputs.
//! * [`runtime`] simulates plant, observers and detectors as one stacked ODE.
//! * [`metrics`] evaluates tracking, attenuation and decay on simulated data.
//! * [`config`] and [`io`] read scenario files and write run artefacts.

pub mod config;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod runtime;
pub mod signals;
pub mod synthesis;
pub mod workflow;

pub use error::{Error, Result};
