//! Nonlinear forces and their potential.
//!
//! Two families are supported: the nonlocal Berger force `−M(u)Δu` with
//! `M = Γ + γ∫|∇u|²`, and pointwise cubic laws `f(s) = κs³ + cs` chosen
//! separately on the two regions. Every force comes with a potential `Π` and a
//! two-point discrete gradient satisfying `⟨G(u⁰,u¹), u¹ − u⁰⟩ = Π(u¹) − Π(u⁰)`.

use crate::domain::{Domain, NodeKind};
use crate::error::{Error, Result};
use crate::fields::{Field, Region, State};
use crate::operators;

/// Pointwise law `f(s) = κs³ + cs`. The zero function is `κ = c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicLaw {
    pub kappa: f64,
    pub c: f64,
}

impl CubicLaw {
    pub const ZERO: CubicLaw = CubicLaw { kappa: 0.0, c: 0.0 };

    pub fn is_zero(&self) -> bool {
        self.kappa == 0.0 && self.c == 0.0
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.kappa * s * s * s + self.c * s
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        3.0 * self.kappa * s * s + self.c
    }

    /// Antiderivative `F(s) = κs⁴/4 + cs²/2`.
    #[inline]
    pub fn antiderivative(&self, s: f64) -> f64 {
        let s2 = s * s;
        0.25 * self.kappa * s2 * s2 + 0.5 * self.c * s2
    }

    /// `(F(b) − F(a))/(b − a)` in closed form; equals `f(a)` when `a = b`.
    #[inline]
    pub fn mean_value(&self, a: f64, b: f64) -> f64 {
        0.25 * self.kappa * (a * a * a + a * a * b + a * b * b + b * b * b) + 0.5 * self.c * (a + b)
    }

    /// `inf F`, attained at `s² = −c/κ` when `c < 0`.
    pub fn lower_bound(&self) -> f64 {
        if self.kappa > 0.0 && self.c < 0.0 {
            -self.c * self.c / (4.0 * self.kappa)
        } else {
            0.0
        }
    }

    fn violations(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.kappa.is_finite() && self.c.is_finite()) {
            out.push(format!("params.{name}: coefficients must be finite"));
        } else if !(self.kappa > 0.0 || self.is_zero()) {
            out.push(format!(
                "params.{name}.kappa = {} must be strictly positive unless {name} is the zero function",
                self.kappa
            ));
        }
        out
    }
}

/// Which nonlinear force acts on the plate.
#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearitySpec {
    /// `F = −(Γ + γ∫|∇u|²)Δu` on both regions.
    Berger { tension: f64, gamma: f64 },
    /// `F = f₁(u)` on the frame (interface nodes included) and `f₂(u)` inside.
    Scalar { f1: CubicLaw, f2: CubicLaw },
}

impl Default for NonlinearitySpec {
    fn default() -> Self {
        NonlinearitySpec::Berger {
            tension: 1.0,
            gamma: 1.0,
        }
    }
}

impl NonlinearitySpec {
    /// `F ≡ 0`.
    pub fn linear() -> Self {
        NonlinearitySpec::Scalar {
            f1: CubicLaw::ZERO,
            f2: CubicLaw::ZERO,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, NonlinearitySpec::Scalar { f1, f2 } if f1.is_zero() && f2.is_zero())
    }

    pub fn violations(&self) -> Vec<String> {
        match self {
            NonlinearitySpec::Berger { tension, gamma } => {
                let mut out = Vec::new();
                if !tension.is_finite() {
                    out.push(format!("params.tension = {tension} must be finite"));
                }
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    out.push(format!(
                        "params.gamma = {gamma} must be strictly positive for the Berger force"
                    ));
                }
                out
            }
            NonlinearitySpec::Scalar { f1, f2 } => {
                let mut out = f1.violations("f1");
                out.extend(f2.violations("f2"));
                out
            }
        }
    }

    /// Explicit constant below which the potential never falls on `domain`.
    pub fn potential_lower_bound(&self, domain: &Domain) -> f64 {
        match self {
            NonlinearitySpec::Berger { tension, gamma } => {
                if *tension < 0.0 {
                    -tension * tension / (4.0 * gamma)
                } else {
                    0.0
                }
            }
            NonlinearitySpec::Scalar { f1, f2 } => {
                let (m1, m2) = scalar_measures(domain);
                f1.lower_bound() * m1 + f2.lower_bound() * m2
            }
        }
    }
}

/// Total weight of the nodes governed by `f₁` and by `f₂`.
fn scalar_measures(domain: &Domain) -> (f64, f64) {
    let w = domain.weights();
    let mut m = (0.0, 0.0);
    for (k, wk) in w.iter().enumerate() {
        if uses_f2(domain, k) {
            m.1 += wk;
        } else {
            m.0 += wk;
        }
    }
    m
}

#[inline]
fn uses_f2(domain: &Domain, k: usize) -> bool {
    domain.kind(k) == NodeKind::Omega2
}

/// `Q = Σ_edges (Δu)²`, the forward-difference trapezoid value of `∫_Ω|∇u|²`.
pub(crate) fn gradient_energy_raw(domain: &Domain, u: &[f64]) -> f64 {
    let n = domain.n();
    let s = n + 1;
    let mut q = 0.0;
    for j in 0..=n {
        let row = j * s;
        for i in 0..n {
            let d = u[row + i + 1] - u[row + i];
            q += d * d;
        }
    }
    for j in 0..n {
        let row = j * s;
        for i in 0..=n {
            let d = u[row + s + i] - u[row + i];
            q += d * d;
        }
    }
    q
}

fn require_omega(u: &Field) -> Result<()> {
    if u.region() != Region::Omega {
        return Err(Error::usage(format!(
            "displacement must be a field on Ω, got {:?}",
            u.region()
        )));
    }
    Ok(())
}

/// `M(u) = Γ + γQ(u)`.
pub fn berger_coefficient(domain: &Domain, u: &Field, spec: &NonlinearitySpec) -> Result<f64> {
    match spec {
        NonlinearitySpec::Berger { tension, gamma } => {
            require_omega(u)?;
            Ok(tension + gamma * gradient_energy_raw(domain, u.values()))
        }
        NonlinearitySpec::Scalar { .. } => Err(Error::usage(
            "berger_coefficient called with a scalar nonlinearity",
        )),
    }
}

/// Nonlinear force `F(u)` as a field on `Ω`.
pub fn force(domain: &Domain, state: &State, spec: &NonlinearitySpec) -> Field {
    force_of(domain, &state.u, spec)
}

pub(crate) fn force_of(domain: &Domain, u: &Field, spec: &NonlinearitySpec) -> Field {
    match spec {
        NonlinearitySpec::Berger { tension, gamma } => {
            let m = tension + gamma * gradient_energy_raw(domain, u.values());
            operators::laplacian_clamped(domain, u).scale(-m).masked_to_unknowns(domain)
        }
        NonlinearitySpec::Scalar { f1, f2 } => scalar_field(domain, |k| {
            let s = u.values()[k];
            if uses_f2(domain, k) {
                f2.eval(s)
            } else {
                f1.eval(s)
            }
        }),
    }
}

fn scalar_field(domain: &Domain, f: impl Fn(usize) -> f64) -> Field {
    let vals = (0..domain.len())
        .map(|k| if domain.is_mech_unknown(k) { f(k) } else { 0.0 })
        .collect();
    Field::from_raw(Region::Omega, vals)
}

/// Potential `Π`. Berger: `(Γ/2)Q + (γ/4)Q²`; scalar: trapezoid sum of `F(u)`.
pub fn potential(domain: &Domain, state: &State, spec: &NonlinearitySpec) -> f64 {
    potential_raw(domain, state.u.values(), spec)
}

pub(crate) fn potential_raw(domain: &Domain, u: &[f64], spec: &NonlinearitySpec) -> f64 {
    match spec {
        NonlinearitySpec::Berger { tension, gamma } => {
            let q = gradient_energy_raw(domain, u);
            0.5 * tension * q + 0.25 * gamma * q * q
        }
        NonlinearitySpec::Scalar { f1, f2 } => {
            if f1.is_zero() && f2.is_zero() {
                return 0.0;
            }
            let w = domain.weights();
            (0..domain.len())
                .filter(|&k| domain.is_mech_unknown(k))
                .map(|k| {
                    let law = if uses_f2(domain, k) { f2 } else { f1 };
                    w[k] * law.antiderivative(u[k])
                })
                .sum()
        }
    }
}

/// Mean-value discrete gradient of `Π` between `u_old` and `u_new`.
///
/// Pairs with the increment as `⟨G, u_new − u_old⟩ = Π(u_new) − Π(u_old)`.
/// `G` enters the momentum equation on the left, like `F`, so the work done on
/// the plate is `−ΔΠ`.
pub fn discrete_gradient_force(
    domain: &Domain,
    u_old: &Field,
    u_new: &Field,
    spec: &NonlinearitySpec,
) -> Result<Field> {
    require_omega(u_old)?;
    require_omega(u_new)?;
    Ok(match spec {
        NonlinearitySpec::Berger { tension, gamma } => {
            let q0 = gradient_energy_raw(domain, u_old.values());
            let q1 = gradient_energy_raw(domain, u_new.values());
            let m_bar = tension + 0.5 * gamma * (q0 + q1);
            let mid = u_old.add(u_new).scale(0.5);
            operators::laplacian_clamped(domain, &mid)
                .scale(-m_bar)
                .masked_to_unknowns(domain)
        }
        NonlinearitySpec::Scalar { f1, f2 } => scalar_field(domain, |k| {
            let (a, b) = (u_old.values()[k], u_new.values()[k]);
            let law = if uses_f2(domain, k) { f2 } else { f1 };
            law.mean_value(a, b)
        }),
    })
}

/// Berger mean coefficient `M̄ = Γ + (γ/2)(Q⁰ + Q¹)`.
pub(crate) fn berger_mean(tension: f64, gamma: f64, q0: f64, q1: f64) -> f64 {
    tension + 0.5 * gamma * (q0 + q1)
}
