//! Two-timescale simulation of low-intensity ultrasound acting on a
//! poroelastic tumor spheroid.
//!
//! The slow scale couples Biot poroelasticity with tumor/healthy/ECM phase
//! dynamics over days; the fast scale propagates the transducer wave to a
//! stationary regime whose stress amplitude gates proliferation through a
//! period-averaged mechanotransduction sigmoid.

pub mod config;
pub mod error;
pub mod io;
pub mod materials;
pub mod mechano;
pub mod mesh;
pub mod phases;
pub mod poroelastic;
pub mod simulation;
pub mod sparse;
pub mod validation;
pub mod wave;

pub use config::{
    load_config, load_config_file, DomainConfig, ExperimentPreset, InitParams, MaterialParams, MechanoConfig,
    MechanoParams, NumericsConfig, OutputConfig, PressureBoundary, SimulationConfig, WaveConfig,
};
pub use error::{Error, Result};
pub use io::{read_snapshot, read_sweep_grid, write_snapshot, write_sweep, write_timeseries, Snapshot};
pub use materials::{derive_elastic_moduli, p_wave_speed, ElasticModuli};
pub use mechano::{period_average_viability, perceived_stress, sigmoid_viability};
pub use mesh::{build_structured_mesh, initial_phase_fields, integrate_field, Face, Mesh, PhaseState};
pub use phases::{competition_terms, step_phases, PhaseStepper};
pub use poroelastic::{step_poroelastic, PoroelasticState, SlowSolver};
pub use simulation::{proliferation_decrease, run_simulation, run_sweep, SimulationResult, SweepRow};
pub use wave::{FastSolver, UltrasonicStressField, WaveField};
