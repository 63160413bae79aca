//! Energy-consistent finite-difference simulator for a clamped plate made of a
//! thermoelastic frame `Ω₁` bonded to an isothermal inner square `Ω₂`.

pub mod config;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod initial;
pub mod nonlinearity;
pub mod operators;
pub mod stepper;

#[cfg(test)]
mod testutil;

pub use domain::{build_cutoffs, build_domain, check_hypotheses, CutoffSet, Domain, DomainConfig, GeometryReport, NodeKind};
pub use error::{Error, Result};
pub use fields::{h2t_inner, h2t_norm, inner_l2, Field, PhysParams, Region, State};
pub use initial::{initial_state, InitialKind};
pub use nonlinearity::{CubicLaw, NonlinearitySpec};
pub use diagnostics::{
    dissipation, energy, energy_identity_residual, multiplier_functionals, CsvSink, DiagConfig, EnergyBreakdown,
    ObservableRow, ObservableSink, Observer,
};
pub use stepper::{simulate, stationary_solve, step, SchemeConfig, SimOptions, StepOutcome, Stepper, Trajectory};
pub use config::{parse_config, parse_config_with, Experiment, ParsedConfig, RunConfig};
pub use experiments::{output_dir, run_experiment, write_report, Check, Report};
