//! Headless, deterministic multi-robot exploration simulator.
//!
//! A team of differential-drive robots explores a 10x10 m arena searching for
//! hotspots of a hidden scalar "richness" field that a central supervisor
//! maintains on a 50x50 grid. Robots localize with a per-robot particle
//! filter fusing odometry, noisy GPS, and heading; a three-mode behavior
//! controller (EXPLORE / BLOB / RECOVER, plus an emergency unstuck maneuver)
//! turns samples and gradients into steering commands; and the supervisor
//! coordinates the team through shared pheromone / visited / blocked maps and
//! a small message protocol with fault injection.
//!
//! Everything is seeded: a run configuration plus a master seed reproduces a
//! run bit-exactly, including every CSV artifact.

pub mod arena;
pub mod config;
pub mod controller;
pub mod env;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod heatmap;
pub mod metrics;
pub mod pf;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod supervisor;

pub use arena::{Arena, NoiseConfig, Obstacle, Pose, RobotBody, SensorFrame};
pub use config::RunConfig;
pub use controller::{Controller, ControllerConfig, Mode};
pub use env::{env_params, EnvState, Weather};
pub use field::{build_field, BlobParams, RichnessField};
pub use grid::{Grid, GridSpec};
pub use metrics::RunMetrics;
pub use pf::{ParticleFilter, PfConfig, PoseEstimate};
pub use sim::{run, RunOutput};
pub use supervisor::{SharedMaps, Supervisor};
