//! Initial data library.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::fields::{Field, Region, State};

/// Named initial states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Zero,
    /// `u = A sin²(πx) sin²(πy)`, at rest, cold.
    Bump,
    /// Velocity bump supported in the inner square.
    Kick,
    /// Temperature bump in the lower frame strip, zero on `Γ₀`.
    Spot,
    /// Smooth random displacement and velocity plus a random temperature.
    Random,
}

impl InitialKind {
    pub const ALL: [InitialKind; 5] = [
        InitialKind::Zero,
        InitialKind::Bump,
        InitialKind::Kick,
        InitialKind::Spot,
        InitialKind::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InitialKind::Zero => "zero",
            InitialKind::Bump => "bump",
            InitialKind::Kick => "kick",
            InitialKind::Spot => "spot",
            InitialKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        InitialKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown initial data {s:?}, expected one of zero|bump|kick|spot|random"
                ))
            })
    }
}

fn sin2(t: f64) -> f64 {
    (PI * t).sin().powi(2)
}

/// Builds the named initial state with amplitude `amplitude`.
pub fn initial_state(domain: &Domain, kind: InitialKind, amplitude: f64, seed: u64) -> State {
    let (ilo, ihi) = domain.inner_range();
    let h = domain.h();
    let lo = ilo as f64 * h;
    let hi = ihi as f64 * h;
    let mut s = State::zero(domain);
    match kind {
        InitialKind::Zero => {}
        InitialKind::Bump => {
            s.u = Field::from_fn(domain, Region::Omega, |x, y| amplitude * sin2(x) * sin2(y));
        }
        InitialKind::Kick => {
            s.ut = Field::from_fn(domain, Region::Omega, |x, y| {
                if x > lo && x < hi && y > lo && y < hi {
                    amplitude * sin2((x - lo) / (hi - lo)) * sin2((y - lo) / (hi - lo))
                } else {
                    0.0
                }
            });
        }
        InitialKind::Spot => {
            s.theta = Field::from_fn(domain, Region::Omega1, |x, y| {
                if x > lo && x < hi && y < lo {
                    amplitude * sin2((x - lo) / (hi - lo)) * sin2(y / lo)
                } else {
                    0.0
                }
            });
        }
        InitialKind::Random => {
            s.u = random_smooth_clamped(domain, seed, 4).scale(amplitude);
            s.ut = random_smooth_clamped(domain, seed ^ 0x9e37_79b9, 4).scale(amplitude);
            s.theta = random_smooth_theta(domain, seed ^ 0x7f4a_7c15, 4).scale(amplitude);
        }
    }
    s.enforce_traces(domain);
    s
}

/// `Σ a_kl sin(kπx) sin(lπy) · sin(πx) sin(πy)` over `1 ≤ k, l ≤ modes`, with
/// `a_kl` uniform in `[−1, 1]`: smooth, zero on `Γ₁` with zero normal slope.
pub fn random_smooth_clamped(domain: &Domain, seed: u64, modes: usize) -> Field {
    let coeffs = random_coeffs(seed, modes);
    Field::from_fn(domain, Region::Omega, |x, y| {
        sine_series(&coeffs, modes, x, y) * (PI * x).sin() * (PI * y).sin()
    })
}

/// Smooth random temperature vanishing on `Γ₀`: a cosine series damped by the
/// squared distance to the inner square.
pub fn random_smooth_theta(domain: &Domain, seed: u64, modes: usize) -> Field {
    let coeffs = random_coeffs(seed, modes);
    let vals = (0..domain.len())
        .map(|k| {
            let [x, y] = domain.coords(k);
            let d = domain.distance_to_inner(k);
            let mut v = 0.0;
            for a in 0..modes {
                for b in 0..modes {
                    v += coeffs[a * modes + b] * (a as f64 * PI * x).cos() * (b as f64 * PI * y).cos();
                }
            }
            v * (d / domain.frame_width()).min(1.0).powi(2)
        })
        .collect();
    // The damping factor vanishes on Γ₀ and from_values clears Ω₂.
    Field::from_values(domain, Region::Omega1, vals).expect("grid-sized values")
}

fn random_coeffs(seed: u64, modes: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..modes * modes).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn sine_series(coeffs: &[f64], modes: usize, x: f64, y: f64) -> f64 {
    let mut v = 0.0;
    for a in 0..modes {
        let sx = ((a + 1) as f64 * PI * x).sin();
        for b in 0..modes {
            v += coeffs[a * modes + b] * sx * ((b + 1) as f64 * PI * y).sin();
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainConfig};

    #[test]
    fn every_kind_is_a_valid_state() {
        let d = build_domain(&DomainConfig::default()).unwrap();
        for kind in InitialKind::ALL {
            let s = initial_state(&d, kind, 1.0, 5);
            assert!(s.violations(&d).is_empty(), "{kind:?}: {:?}", s.violations(&d));
            assert_eq!(InitialKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(InitialKind::parse("wave").is_err());
    }

    #[test]
    fn kick_lives_inside_and_spot_in_frame() {
        let d = build_domain(&DomainConfig::default()).unwrap();
        let kick = initial_state(&d, InitialKind::Kick, 1.0, 0);
        let spot = initial_state(&d, InitialKind::Spot, 1.0, 0);
        assert!(kick.ut.max_abs() > 0.5);
        assert!(spot.theta.max_abs() > 0.5);
        for k in 0..d.len() {
            if kick.ut.values()[k] != 0.0 {
                assert_eq!(d.kind(k), crate::domain::NodeKind::Omega2);
            }
        }
    }

    #[test]
    fn random_data_is_seeded() {
        let d = build_domain(&DomainConfig::default()).unwrap();
        assert_eq!(random_smooth_clamped(&d, 3, 4), random_smooth_clamped(&d, 3, 4));
        assert_ne!(random_smooth_clamped(&d, 3, 4), random_smooth_clamped(&d, 4, 4));
    }
}
