//! Pseudospectral laboratory for the cubic NLS `i u_t + Δu = ε²|u|²u` on the
//! torus with random Fourier initial data.
//!
//! * [`spectral`]: mode fields, grids, norms and the trilinear forms.
//! * [`random_data`]: seeded Gaussian initial data.
//! * [`solver`]: Strang split-step integrator and the Galerkin reference.
//! * [`modified`]: the exactly solvable modified linear flow.
//! * [`resonance`]: resonance factor, key sums and the chaos statistic.
//! * [`ldp`]: tail estimates, rate curves and monitors.
//! * [`config`], [`runner`], [`records`], [`seed`]: the experiment runner.

pub mod config;
pub mod error;
pub mod ldp;
pub mod modified;
pub mod random_data;
pub mod records;
pub mod resonance;
pub mod runner;
pub mod seed;
pub mod solver;
pub mod spectral;

pub use config::{ExperimentConfig, Overrides, Subcommand};
pub use error::{LabError, Result};
pub use runner::{run_experiment, RunSummary};
pub use seed::derive_seed;
