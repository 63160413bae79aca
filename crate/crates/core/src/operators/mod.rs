//! Matrix-free stencils on the node grid.
//!
//! Node vectors are full-grid (`(n+1)²` entries). The displacement unknowns are
//! the nodes off `Γ₁`; the temperature unknowns are the `Ω₁` interior and `Γ₁`
//! nodes. The "Euclidean" operators below (stiffness, thermal form, coupling)
//! are the matrices of the discrete bilinear forms, so they are symmetric in
//! the plain dot product; the field-valued operators divide by the quadrature
//! weights to return grid functions.

mod banded;
mod cg;
mod spectral;

pub use cg::{cg_solve, CgSolution, LinearOperator};
pub(crate) use cg::{dot, pcg};
pub(crate) use banded::BandedCholesky;
pub(crate) use spectral::SineTransform;

use crate::domain::{Domain, NodeKind};
use crate::error::{Error, Result};
use crate::fields::{Field, PhysParams, Region};

/// Clamped 5-point Laplacian `L`, defined at every node.
///
/// `u` must vanish on `Γ₁`. Ghost values mirror the interior, so at an edge
/// node `Lu = 2u_in/h²`; at the four corners both ghosts vanish and `Lu = 0`.
pub(crate) fn lap_clamped_raw(d: &Domain, u: &[f64], out: &mut [f64]) {
    let n = d.n();
    let s = n + 1;
    let ih2 = 1.0 / (d.h() * d.h());
    for j in 1..n {
        let row = j * s;
        for i in 1..n {
            let k = row + i;
            out[k] = (u[k - 1] + u[k + 1] + u[k - s] + u[k + s] - 4.0 * u[k]) * ih2;
        }
    }
    for t in 1..n {
        out[t * s] = 2.0 * u[t * s + 1] * ih2;
        out[t * s + n] = 2.0 * u[t * s + n - 1] * ih2;
        out[t] = 2.0 * u[s + t] * ih2;
        out[n * s + t] = 2.0 * u[(n - 1) * s + t] * ih2;
    }
    for k in [0, n, n * s, n * s + n] {
        out[k] = 0.0;
    }
}

/// Transpose of [`lap_clamped_raw`] restricted to the displacement unknowns;
/// the output vanishes on `Γ₁`.
pub(crate) fn lap_clamped_t_raw(d: &Domain, z: &[f64], out: &mut [f64]) {
    let n = d.n();
    let s = n + 1;
    let ih2 = 1.0 / (d.h() * d.h());
    for j in 1..n {
        let row = j * s;
        for i in 1..n {
            let k = row + i;
            out[k] = (z[k - 1] + z[k + 1] + z[k - s] + z[k + s] - 4.0 * z[k]) * ih2;
        }
    }
    // Edge rows of L carry weight 2 on their inward neighbour; the interior
    // loop above already added one of the two.
    for t in 1..n {
        out[t * s + 1] += z[t * s] * ih2;
        out[t * s + n - 1] += z[t * s + n] * ih2;
        out[s + t] += z[t] * ih2;
        out[(n - 1) * s + t] += z[n * s + t] * ih2;
    }
    zero_gamma1(d, out);
}

pub(crate) fn zero_gamma1(d: &Domain, v: &mut [f64]) {
    let n = d.n();
    let s = n + 1;
    for t in 0..=n {
        v[t] = 0.0;
        v[n * s + t] = 0.0;
        v[t * s] = 0.0;
        v[t * s + n] = 0.0;
    }
}

/// Clamped discrete Laplacian as a field on `Ω`.
pub fn laplacian_clamped(d: &Domain, f: &Field) -> Field {
    let mut out = vec![0.0; d.len()];
    lap_clamped_raw(d, f.values(), &mut out);
    Field::from_raw(Region::Omega, out)
}

/// Dirichlet 5-point Laplacian on `Ω` (zero data on `Γ₁`); vanishes on `Γ₁`.
pub fn dirichlet_laplacian(d: &Domain, f: &Field) -> Field {
    let mut out = vec![0.0; d.len()];
    lap_clamped_raw(d, f.values(), &mut out);
    zero_gamma1(d, &mut out);
    Field::from_raw(Region::Omega, out)
}

/// Euclidean matrix of `−h²Δ_h` with Dirichlet data on `Γ₁`: the form
/// `Σ_edges (x_a − x_b)(y_a − y_b)`.
pub(crate) fn dirichlet_stiffness_apply(d: &Domain, x: &[f64], out: &mut [f64]) {
    let n = d.n();
    let s = n + 1;
    for j in 1..n {
        let row = j * s;
        for i in 1..n {
            let k = row + i;
            out[k] = 4.0 * x[k] - x[k - 1] - x[k + 1] - x[k - s] - x[k + s];
        }
    }
    zero_gamma1(d, out);
}

/// Bending stiffness `A = Lᵀ diag(β₁w₁ + β₂w₂) L`, the matrix of
/// `a(u, φ) = Σ_regions β_r⟨Lu, Lφ⟩_r`.
#[derive(Debug, Clone)]
pub struct Stiffness {
    domain: Domain,
    beta_w: Vec<f64>,
}

impl Stiffness {
    pub fn new(d: &Domain, params: &PhysParams) -> Self {
        Stiffness {
            domain: d.clone(),
            beta_w: d.weighted(params.beta1, params.beta2),
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; x.len()];
        self.apply_with(x, out, &mut tmp);
    }

    pub(crate) fn apply_with(&self, x: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        lap_clamped_raw(&self.domain, x, tmp);
        for (t, b) in tmp.iter_mut().zip(&self.beta_w) {
            *t *= b;
        }
        lap_clamped_t_raw(&self.domain, tmp, out);
    }

    pub fn form(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut la = vec![0.0; a.len()];
        let mut lb = vec![0.0; b.len()];
        lap_clamped_raw(&self.domain, a, &mut la);
        lap_clamped_raw(&self.domain, b, &mut lb);
        la.iter()
            .zip(&lb)
            .zip(&self.beta_w)
            .map(|((p, q), w)| p * q * w)
            .sum()
    }
}

/// Transmission biharmonic `W⁻¹A u`: the grid function representing the
/// piecewise-β clamped bending form. Vanishes on `Γ₁`.
pub fn biharmonic_transmission(d: &Domain, u: &Field, params: &PhysParams) -> Field {
    let mut out = vec![0.0; d.len()];
    Stiffness::new(d, params).apply(u.values(), &mut out);
    let w = d.weights();
    for k in 0..d.len() {
        if d.is_mech_unknown(k) {
            out[k] /= w[k];
        }
    }
    Field::from_raw(Region::Omega, out)
}

/// Ghost-node thermal Laplacian on the temperature unknowns: `θ = 0` on `Γ₀`,
/// `θ_ghost = θ_mirror − 2hλθ` across `Γ₁`. Zero off the unknowns.
pub(crate) fn thermal_lap_raw(d: &Domain, lambda: f64, th: &[f64], out: &mut [f64]) {
    let n = d.n();
    let s = n + 1;
    let h = d.h();
    let ih2 = 1.0 / (h * h);
    for j in 0..=n {
        for i in 0..=n {
            let k = j * s + i;
            if !d.is_thermal_unknown(k) {
                out[k] = 0.0;
                continue;
            }
            let c = th[k];
            let ghost = |mirror: usize| th[mirror] - 2.0 * h * lambda * c;
            let west = if i > 0 { th[k - 1] } else { ghost(k + 1) };
            let east = if i < n { th[k + 1] } else { ghost(k - 1) };
            let south = if j > 0 { th[k - s] } else { ghost(k + s) };
            let north = if j < n { th[k + s] } else { ghost(k - s) };
            out[k] = (west + east + south + north - 4.0 * c) * ih2;
        }
    }
}

/// Thermal Laplacian with Dirichlet data on `Γ₀` and Newton cooling on `Γ₁`,
/// as a field on `Ω₁` (zero on `Γ₀`).
pub fn thermal_laplacian(d: &Domain, theta: &Field, params: &PhysParams) -> Field {
    let mut out = vec![0.0; d.len()];
    thermal_lap_raw(d, params.lambda, theta.values(), &mut out);
    Field::from_raw(Region::Omega1, out)
}

/// Euclidean matrix `K` of the `H¹_D` form, applied through the ghost stencil:
/// `Kθ = −w₁ ⊙ Δ_hθ`.
pub(crate) fn thermal_form_apply(d: &Domain, lambda: f64, th: &[f64], out: &mut [f64]) {
    thermal_lap_raw(d, lambda, th, out);
    for (o, w) in out.iter_mut().zip(d.weights1()) {
        *o *= -w;
    }
}

/// `Σ_edges ω_e (Δθ)(Δφ) + λ Σ_{Γ₁} h θφ`, summed edge by edge.
///
/// `ω_e` is half the number of `Ω₁` cells adjacent to the edge. This is the
/// discrete `∫_{Ω₁}∇θ·∇φ + λ∮_{Γ₁}θφ` evaluated without the ghost stencil.
pub fn thermal_form_edges(d: &Domain, lambda: f64, a: &[f64], b: &[f64]) -> f64 {
    let (grad, bnd) = thermal_form_parts(d, a, b);
    grad + lambda * bnd
}

/// Gradient and boundary parts of [`thermal_form_edges`].
pub(crate) fn thermal_form_parts(d: &Domain, a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = d.n();
    let s = n + 1;
    let mut grad = 0.0;
    for j in 0..=n {
        for i in 0..n {
            let k = j * s + i;
            let w = d.hedge_weight1(i, j);
            if w > 0.0 {
                grad += w * (a[k + 1] - a[k]) * (b[k + 1] - b[k]);
            }
        }
    }
    for j in 0..n {
        for i in 0..=n {
            let k = j * s + i;
            let w = d.vedge_weight1(i, j);
            if w > 0.0 {
                grad += w * (a[k + s] - a[k]) * (b[k + s] - b[k]);
            }
        }
    }
    let bnd = d
        .nodes_of(NodeKind::Gamma1)
        .map(|k| d.boundary_weight(k) * a[k] * b[k])
        .sum();
    (grad, bnd)
}

/// Diagonal of `K`.
#[cfg(test)]
pub(crate) fn thermal_form_diagonal(d: &Domain, lambda: f64) -> Vec<f64> {
    let n = d.n();
    let s = n + 1;
    let mut diag = vec![0.0; d.len()];
    for j in 0..=n {
        for i in 0..n {
            let w = d.hedge_weight1(i, j);
            diag[j * s + i] += w;
            diag[j * s + i + 1] += w;
        }
    }
    for j in 0..n {
        for i in 0..=n {
            let w = d.vedge_weight1(i, j);
            diag[j * s + i] += w;
            diag[(j + 1) * s + i] += w;
        }
    }
    for k in 0..d.len() {
        diag[k] += lambda * d.boundary_weight(k);
        if !d.is_thermal_unknown(k) {
            diag[k] = 0.0;
        }
    }
    diag
}

/// Coupling matrix `C` (temperature rows, displacement columns):
/// `(Cv)_k = μ w₁_k (Lv)_k` on the temperature unknowns.
pub(crate) fn coupling_apply(d: &Domain, mu: f64, v: &[f64], out: &mut [f64]) {
    lap_clamped_raw(d, v, out);
    let w1 = d.weights1();
    for k in 0..d.len() {
        out[k] = if d.is_thermal_unknown(k) {
            mu * w1[k] * out[k]
        } else {
            0.0
        };
    }
}

/// `Cᵀθ = μ Lᵀ(w₁ ⊙ θ)`; `tmp` is scratch.
pub(crate) fn coupling_t_apply(d: &Domain, mu: f64, th: &[f64], out: &mut [f64], tmp: &mut [f64]) {
    let w1 = d.weights1();
    for k in 0..d.len() {
        tmp[k] = if d.is_thermal_unknown(k) {
            mu * w1[k] * th[k]
        } else {
            0.0
        };
    }
    lap_clamped_t_raw(d, tmp, out);
}

/// Coupling acting on the plate, `Cθ = μ W⁻¹Lᵀ(w₁θ)`, the discrete `μΔθ`
/// extended by zero. Field on `Ω`.
pub fn coupling(d: &Domain, theta: &Field, params: &PhysParams) -> Field {
    let mut out = vec![0.0; d.len()];
    let mut tmp = vec![0.0; d.len()];
    coupling_t_apply(d, params.mu, theta.values(), &mut out, &mut tmp);
    let w = d.weights();
    for k in 0..d.len() {
        if d.is_mech_unknown(k) {
            out[k] /= w[k];
        }
    }
    Field::from_raw(Region::Omega, out)
}

/// Coupling acting on the temperature, `C*u_t = −μΔ_h u_t` on `Ω₁`, signed so
/// that `⟨Cθ, u_t⟩_Ω + ⟨C*u_t, θ⟩_{Ω₁} = 0`.
pub fn coupling_adjoint(d: &Domain, ut: &Field, params: &PhysParams) -> Field {
    let mut out = vec![0.0; d.len()];
    lap_clamped_raw(d, ut.values(), &mut out);
    for k in 0..d.len() {
        out[k] = if d.is_thermal_unknown(k) {
            -params.mu * out[k]
        } else {
            0.0
        };
    }
    Field::from_raw(Region::Omega1, out)
}

/// Dirichlet Laplacian solver on `Ω` with zero data on `∂Ω = Γ₁`.
///
/// CG on `−h²Δ_h`, preconditioned with the sine transform (which inverts the
/// operator exactly, so convergence takes one or two sweeps).
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    domain: Domain,
    sine: SineTransform,
    symbol: Vec<f64>,
    pub max_iter: usize,
}

impl DirichletSolver {
    pub fn new(d: &Domain) -> Self {
        let sine = SineTransform::new(d);
        let h2 = d.h() * d.h();
        let symbol = sine.eigenvalues().iter().map(|l| h2 * l).collect();
        DirichletSolver {
            domain: d.clone(),
            sine,
            symbol,
            max_iter: 100,
        }
    }

    /// Returns `w` with `Δ_h w = f` off `Γ₁`, `w = 0` on `Γ₁`.
    pub fn solve(&self, f: &Field, tol: f64) -> Result<Field> {
        if !(tol > 0.0) {
            return Err(Error::usage(format!("tolerance {tol} must be positive")));
        }
        let d = &self.domain;
        if f.values().len() != d.len() {
            return Err(Error::usage("source field does not match the grid"));
        }
        let w = d.weights();
        let mut b = vec![0.0; d.len()];
        for k in 0..d.len() {
            if d.is_mech_unknown(k) {
                b[k] = -w[k] * f.values()[k];
            }
        }
        let mut x = vec![0.0; d.len()];
        pcg(
            |v, out| dirichlet_stiffness_apply(d, v, out),
            |r, z| self.sine.apply_inverse_symbol(&self.symbol, r, z),
            &b,
            &mut x,
            tol,
            self.max_iter,
        )?;
        Ok(Field::from_raw(Region::Omega, x))
    }
}

/// One-shot [`DirichletSolver::solve`]. The source may live on any region; the
/// solve is global on `Ω`.
pub fn dirichlet_inverse(d: &Domain, f: &Field, tol: f64) -> Result<Field> {
    DirichletSolver::new(d).solve(f, tol)
}
