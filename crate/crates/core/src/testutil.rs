//! Shared fixtures for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::Domain;
use crate::fields::{Field, Region};
use crate::initial::random_smooth_clamped;

pub(crate) fn random_clamped(d: &Domain, seed: u64) -> Field {
    random_smooth_clamped(d, seed, 4)
}

pub(crate) fn scaled(f: &Field, s: f64) -> Field {
    f.scale(s)
}

/// Uniform random values on the temperature unknowns.
pub(crate) fn random_theta(d: &Domain, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..d.len())
        .map(|k| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if d.is_thermal_unknown(k) {
                v
            } else {
                0.0
            }
        })
        .collect();
    Field::from_values(d, Region::Omega1, vals).unwrap()
}

/// Uniform random values on the displacement unknowns.
pub(crate) fn random_unknowns(d: &Domain, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d.len())
        .map(|k| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if d.is_mech_unknown(k) {
                v
            } else {
                0.0
            }
        })
        .collect()
}

/// Uniform random values on every node.
pub(crate) fn random_full(d: &Domain, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
