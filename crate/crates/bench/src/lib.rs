//! Shared fixtures for the kernel benchmarks.

use thermoplate::{
    build_domain, initial_state, Domain, DomainConfig, InitialKind, NonlinearitySpec, PhysParams, SchemeConfig, State,
    Stepper,
};

/// Default geometry at `n_cells` cells per side.
pub fn domain(n_cells: usize) -> Domain {
    build_domain(&DomainConfig {
        n_cells,
        ..Default::default()
    })
    .expect("benchmark domain")
}

/// Default parameters with the given nonlinearity.
pub fn params(spec: NonlinearitySpec) -> PhysParams {
    PhysParams {
        nonlinearity: spec,
        ..Default::default()
    }
}

/// Stepper at the default time step plus a smooth random starting state.
pub fn stepper(d: &Domain, spec: NonlinearitySpec) -> (Stepper, State) {
    let p = params(spec);
    let s = Stepper::new(d, &p, &SchemeConfig::for_domain(d)).expect("benchmark stepper");
    (s, initial_state(d, InitialKind::Random, 0.5, 7))
}
