//! Structured online learning control.
//!
//! A nonlinear control-affine plant is identified on-line as
//! `ẋ = WΦ(x) + Σ_j W_jΦ(x)u_j` over a fixed basis library `Φ`, while a
//! state-dependent Riccati-type matrix flow is integrated forward to obtain
//! `P` in the value function `V = ΦᵀPΦ` and the feedback law derived from it.
//!
//! Modules, bottom up:
//! - [`basis`]: libraries `Φ` and their analytic Jacobians
//! - [`plants`]: simulated benchmark plants and RK4
//! - [`sysid`]: sample database and thresholded least squares
//! - [`valuegrad`]: `Q̄`, the `P` flow, control and value
//! - [`sol_loop`]: one learning-control episode
//! - [`config`]: benchmark presets and run configuration files

pub mod basis;
pub mod care;
pub mod config;
pub mod error;
pub mod plants;
pub mod report;
pub mod sol_loop;
pub mod sysid;
pub mod trace;
pub mod valuegrad;

pub use basis::{BasisSet, BasisTerm};
pub use config::{Benchmark, LoadedConfig};
pub use error::{Error, Result};
pub use plants::{PlantModel, PlantSpec, SimClock};
pub use sol_loop::{run_episode, SolConfig, SolLoop};
pub use sysid::{ModelCoefficients, RegressionConfig, Sample, SampleDatabase};
pub use trace::{EpisodeTrace, StepRecord, Termination};
pub use valuegrad::{CostSpec, QBar, ValueParams};
