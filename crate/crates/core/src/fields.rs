//! Grid functions and the discrete inner products of the energy spaces.

use std::io::Write;

use crate::domain::{Domain, NodeKind};
use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::operators;

/// Support of a grid function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// The whole square; composite displacement fields `{u, v}` live here.
    Omega,
    /// Closure of the thermoelastic frame.
    Omega1,
    /// Closure of the isothermal inner square.
    Omega2,
}

/// Scalar grid function, identically zero outside its region.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    region: Region,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(domain: &Domain, region: Region) -> Self {
        Field {
            region,
            values: vec![0.0; domain.len()],
        }
    }

    /// Samples `f(x, y)` on the nodes of `region`.
    pub fn from_fn(domain: &Domain, region: Region, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..domain.len())
            .map(|k| {
                if domain.in_region(k, region) {
                    let [x, y] = domain.coords(k);
                    f(x, y)
                } else {
                    0.0
                }
            })
            .collect();
        Field { region, values }
    }

    /// Wraps nodal values, zeroing entries outside `region`.
    pub fn from_values(domain: &Domain, region: Region, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::usage(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                domain.len()
            )));
        }
        for (k, v) in values.iter_mut().enumerate() {
            if !domain.in_region(k, region) {
                *v = 0.0;
            }
        }
        Ok(Field { region, values })
    }

    pub(crate) fn from_raw(region: Region, values: Vec<f64>) -> Self {
        Field { region, values }
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Checks the hard-zero invariant outside the region.
    pub fn respects_region(&self, domain: &Domain) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(k, &v)| domain.in_region(k, self.region) || v == 0.0)
    }

    fn same_region(&self, other: &Field) {
        assert_eq!(
            self.region, other.region,
            "field arithmetic across regions {:?} and {:?}",
            self.region, other.region
        );
    }

    pub fn add(&self, other: &Field) -> Field {
        self.same_region(other);
        Field {
            region: self.region,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.same_region(other);
        Field {
            region: self.region,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Field {
        Field {
            region: self.region,
            values: self.values.iter().map(|a| s * a).collect(),
        }
    }

    /// Pointwise product; the result lives on `self`'s region.
    pub fn hadamard(&self, other: &Field) -> Field {
        Field {
            region: self.region,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }

    /// Zeroes the clamped boundary `Γ₁`.
    pub(crate) fn masked_to_unknowns(mut self, domain: &Domain) -> Field {
        for (k, v) in self.values.iter_mut().enumerate() {
            if !domain.is_mech_unknown(k) {
                *v = 0.0;
            }
        }
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `node,x,y,value` rows.
    pub fn write_csv<W: Write>(&self, domain: &Domain, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node,x,y,value")?;
        for (k, v) in self.values.iter().enumerate() {
            let [x, y] = domain.coords(k);
            writeln!(out, "{k},{x:.16e},{y:.16e},{v:.16e}")?;
        }
        Ok(())
    }
}

/// Phase-space point `(u, v, u_t, v_t, θ)`; the displacement pair is stored as
/// one composite field on `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub ut: Field,
    pub theta: Field,
}

impl State {
    pub fn zero(domain: &Domain) -> Self {
        State {
            u: Field::zeros(domain, Region::Omega),
            ut: Field::zeros(domain, Region::Omega),
            theta: Field::zeros(domain, Region::Omega1),
        }
    }

    /// Builds a state, zeroing the clamped and Dirichlet traces.
    pub fn new(domain: &Domain, u: Vec<f64>, ut: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let mut s = State {
            u: Field::from_values(domain, Region::Omega, u)?,
            ut: Field::from_values(domain, Region::Omega, ut)?,
            theta: Field::from_values(domain, Region::Omega1, theta)?,
        };
        s.enforce_traces(domain);
        Ok(s)
    }

    pub(crate) fn enforce_traces(&mut self, domain: &Domain) {
        for k in 0..domain.len() {
            match domain.kind(k) {
                NodeKind::Gamma1 => {
                    self.u.values[k] = 0.0;
                    self.ut.values[k] = 0.0;
                }
                NodeKind::Gamma0 => self.theta.values[k] = 0.0,
                _ => {}
            }
        }
    }

    /// Reports every violated state invariant.
    pub fn violations(&self, domain: &Domain) -> Vec<String> {
        let mut out = Vec::new();
        if self.u.region != Region::Omega || self.ut.region != Region::Omega {
            out.push("displacement and velocity must be fields on Ω".into());
        }
        if self.theta.region != Region::Omega1 {
            out.push("temperature must be a field on Ω₁".into());
        }
        for f in [&self.u, &self.ut, &self.theta] {
            if f.values.len() != domain.len() {
                out.push("field length does not match the grid".into());
                return out;
            }
            if !f.respects_region(domain) {
                out.push(format!("nonzero values outside {:?}", f.region));
            }
        }
        if domain
            .nodes_of(NodeKind::Gamma0)
            .any(|k| self.theta.values[k] != 0.0)
        {
            out.push("θ must vanish on Γ₀".into());
        }
        if domain
            .nodes_of(NodeKind::Gamma1)
            .any(|k| self.u.values[k] != 0.0 || self.ut.values[k] != 0.0)
        {
            out.push("u and u_t must vanish on Γ₁".into());
        }
        out
    }

    /// Componentwise difference `self − other`.
    pub fn diff(&self, other: &State) -> State {
        State {
            u: self.u.sub(&other.u),
            ut: self.ut.sub(&other.ut),
            theta: self.theta.sub(&other.theta),
        }
    }
}

/// Material parameters and the nonlinear force law.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    /// Heat capacity of the thermoelastic part.
    pub rho0: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Heat conductivity.
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Thermoelastic coupling.
    pub mu: f64,
    /// Newton cooling coefficient on `Γ₁`.
    pub lambda: f64,
    pub nonlinearity: NonlinearitySpec,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            rho0: 1.0,
            rho1: 1.0,
            rho2: 1.0,
            beta0: 1.0,
            beta1: 1.0,
            beta2: 1.0,
            mu: 1.0,
            lambda: 1.0,
            nonlinearity: NonlinearitySpec::default(),
        }
    }
}

impl PhysParams {
    /// Same parameters with the linear force law `F = 0`.
    pub fn linear(mut self) -> Self {
        self.nonlinearity = NonlinearitySpec::linear();
        self
    }

    /// One message per violated positivity requirement. `μ = 0` is accepted as
    /// the decoupled control case.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("rho0", self.rho0),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("params.{name} = {v} must be strictly positive"));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            out.push(format!("params.mu = {} must be non-negative", self.mu));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            out.push(format!("params.lambda = {} must be non-negative", self.lambda));
        }
        out.extend(self.nonlinearity.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::config(v.join("; ")))
        }
    }
}

fn region_contains(outer: Region, inner: Region) -> bool {
    outer == inner || outer == Region::Omega
}

/// Trapezoid-weighted `L²` pairing over `region`.
pub fn inner_l2(domain: &Domain, a: &Field, b: &Field, region: Region) -> Result<f64> {
    if !region_contains(a.region, region) || !region_contains(b.region, region) {
        return Err(Error::usage(format!(
            "cannot pair fields on {:?} and {:?} over {:?}",
            a.region, b.region, region
        )));
    }
    Ok(weighted_dot(domain.region_weights(region), &a.values, &b.values))
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// `∫_{Ω₁} β₁ Δa Δb + ∫_{Ω₂} β₂ Δa Δb` with the clamped discrete Laplacian.
pub fn h2t_inner(domain: &Domain, a: &Field, b: &Field, params: &PhysParams) -> f64 {
    let la = operators::laplacian_clamped(domain, a);
    let lb = operators::laplacian_clamped(domain, b);
    let wb = domain.weighted(params.beta1, params.beta2);
    weighted_dot(&wb, la.values(), lb.values())
}

/// `‖a‖` in the clamped biharmonic energy norm.
pub fn h2t_norm(domain: &Domain, a: &Field, params: &PhysParams) -> f64 {
    h2t_inner(domain, a, a, params).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainConfig};
    use crate::testutil::random_clamped;
    use proptest::prelude::*;

    fn dom(n: usize) -> Domain {
        build_domain(&DomainConfig {
            n_cells: n,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_pairing() {
        let d = dom(8);
        let z = Field::zeros(&d, Region::Omega);
        assert_eq!(inner_l2(&d, &z, &z, Region::Omega).unwrap(), 0.0);
    }

    #[test]
    fn unit_field_integrates_to_area() {
        for n in [4, 8, 32] {
            let d = dom(n);
            let one = Field::from_fn(&d, Region::Omega, |_, _| 1.0);
            assert!((inner_l2(&d, &one, &one, Region::Omega).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn region_mismatch_is_usage_error() {
        let d = dom(8);
        let a = Field::zeros(&d, Region::Omega1);
        let b = Field::zeros(&d, Region::Omega2);
        assert!(matches!(
            inner_l2(&d, &a, &b, Region::Omega1),
            Err(Error::Usage(_))
        ));
        assert!(inner_l2(&d, &a, &a, Region::Omega).is_err());
    }

    #[test]
    fn from_values_zero_pads() {
        let d = dom(8);
        let f = Field::from_values(&d, Region::Omega2, vec![1.0; d.len()]).unwrap();
        assert!(f.respects_region(&d));
        let s = f.add(&f).scale(3.0).hadamard(&f);
        assert!(s.respects_region(&d));
        assert_eq!(f.values()[0], 0.0);
    }

    #[test]
    fn h2t_reduces_to_laplacian_pairing_for_unit_beta() {
        let d = dom(16);
        let p = PhysParams::default();
        let a = random_clamped(&d, 3);
        let b = random_clamped(&d, 4);
        let la = operators::laplacian_clamped(&d, &a);
        let lb = operators::laplacian_clamped(&d, &b);
        let direct = inner_l2(&d, &la, &lb, Region::Omega).unwrap();
        assert!((h2t_inner(&d, &a, &b, &p) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn h2t_positive_and_norm_equivalence() {
        let d = dom(16);
        let p = PhysParams {
            beta1: 1.0,
            beta2: 4.0,
            ..Default::default()
        };
        for seed in 0..100 {
            let a = random_clamped(&d, seed);
            let e = h2t_inner(&d, &a, &a, &p);
            assert!(e > 0.0);
            let la = operators::laplacian_clamped(&d, &a);
            let l2 = inner_l2(&d, &la, &la, Region::Omega).unwrap();
            assert!(e >= p.beta1.min(p.beta2) * l2 * (1.0 - 1e-12));
        }
        let z = Field::zeros(&d, Region::Omega);
        assert_eq!(h2t_inner(&d, &z, &z, &p), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn l2_pairing_is_symmetric(sa in 0u64..10_000, sb in 0u64..10_000) {
            let d = dom(8);
            let a = random_clamped(&d, sa);
            let b = random_clamped(&d, sb);
            for r in [Region::Omega, Region::Omega1, Region::Omega2] {
                let ab = inner_l2(&d, &a, &b, r).unwrap();
                let ba = inner_l2(&d, &b, &a, r).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-14 * inner_l2(&d, &a, &a, r).unwrap().max(inner_l2(&d, &b, &b, r).unwrap()));
            }
        }
    }
}
