//! Coupled mechanics–metabolism agent-based simulation of tumour spheroids,
//! with Gaussian-process emulation, variance-based sensitivity analysis,
//! Bayesian calibration and group-comparison statistics.

pub mod config;
pub mod error;
pub mod geom;
pub mod io;
pub mod lifecycle;
pub mod measure;
pub mod mechanics;
pub mod metabolism;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod surrogate;
pub mod uq;

pub use config::{ConfigFile, MechanicsConfig, SimConfig, SupplyConfig};
pub use error::{Error, Result};
pub use geom::{ForceVector, Vec3};
pub use lifecycle::{run_simulation, CellAgent, CellState, SimulationTrace};
pub use metabolism::MetabolicState;
pub use params::{
    eta_for_density, parameter_bounds, CollagenDensity, MechanicalParams, MetabolicParams,
    ParameterVector, PhenotypeParams, SpheroidGroup,
};
pub use rng::RngStream;
