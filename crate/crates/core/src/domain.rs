//! Computational geometry: the unit square split into a thermoelastic frame
//! `Ω₁` and an isothermal inner square `Ω₂`, the interface `Γ₀` between them
//! and the clamped outer boundary `Γ₁`.
//!
//! Nodes live on a uniform `(n+1) × (n+1)` grid. Every cell belongs to exactly
//! one region, and node quadrature weights are split by region from the four
//! quarter-cells around each node. A node on `Γ₀` therefore carries part of its
//! weight in each region, which is what makes the trapezoid rule and the
//! piecewise coefficients agree.

use crate::error::{Error, Result};
use crate::fields::{Field, PhysParams, Region};

/// Geometry parameters for [`build_domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    /// Grid cells per side of the unit square.
    pub n_cells: usize,
    /// `Ω₂ = (inner_lo, inner_hi)²`.
    pub inner_lo: f64,
    pub inner_hi: f64,
    /// Center of the multiplier field `m(x) = x − x₀`.
    pub x0: [f64; 2],
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            n_cells: 32,
            inner_lo: 0.25,
            inner_hi: 0.75,
            x0: [0.5, 0.5],
        }
    }
}

impl DomainConfig {
    /// Checks the configuration invariants, returning one message per violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_cells < 2 {
            out.push(format!("domain.n_cells = {} must be at least 2", self.n_cells));
        }
        if !(self.inner_lo > 0.0 && self.inner_lo < self.inner_hi && self.inner_hi < 1.0) {
            out.push(format!(
                "domain.inner_lo/inner_hi = {}/{} must satisfy 0 < inner_lo < inner_hi < 1",
                self.inner_lo, self.inner_hi
            ));
            return out;
        }
        let n = self.n_cells as f64;
        for (name, v) in [("inner_lo", self.inner_lo), ("inner_hi", self.inner_hi)] {
            let s = n * v;
            if (s - s.round()).abs() > 1e-9 * n.max(1.0) {
                out.push(format!(
                    "domain.{name} = {v}: n_cells·{name} = {s} is not an integer, the interface must lie on grid lines"
                ));
            }
        }
        if !self.x0.iter().all(|c| c.is_finite()) {
            out.push("domain.x0 must be finite".to_string());
        }
        out
    }
}

/// Classification of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Interior of the thermoelastic frame.
    Omega1,
    /// Interior of the isothermal inner square.
    Omega2,
    /// Interface between the two regions.
    Gamma0,
    /// Clamped outer boundary.
    Gamma1,
}

/// Immutable grid geometry with region masks, quadrature weights and normals.
#[derive(Debug, Clone)]
pub struct Domain {
    config: DomainConfig,
    n: usize,
    h: f64,
    ilo: usize,
    ihi: usize,
    kind: Vec<NodeKind>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    w: Vec<f64>,
    normal: Vec<Option<[i32; 2]>>,
}

/// Builds the grid geometry. Fails when the configuration invariants do not hold.
pub fn build_domain(config: &DomainConfig) -> Result<Domain> {
    let v = config.violations();
    if !v.is_empty() {
        return Err(Error::config(v.join("; ")));
    }
    let n = config.n_cells;
    let h = 1.0 / n as f64;
    let ilo = (n as f64 * config.inner_lo).round() as usize;
    let ihi = (n as f64 * config.inner_hi).round() as usize;
    let np = (n + 1) * (n + 1);

    let mut kind = Vec::with_capacity(np);
    let mut normal = Vec::with_capacity(np);
    for j in 0..=n {
        for i in 0..=n {
            let (k, nu) = if i == 0 || i == n || j == 0 || j == n {
                let nu = if i == 0 {
                    [-1, 0]
                } else if i == n {
                    [1, 0]
                } else if j == 0 {
                    [0, -1]
                } else {
                    [0, 1]
                };
                (NodeKind::Gamma1, Some(nu))
            } else if (ilo..=ihi).contains(&i) && (ilo..=ihi).contains(&j) {
                if i == ilo || i == ihi || j == ilo || j == ihi {
                    // Outward for Ω₂; corners take the x-face normal.
                    let nu = if i == ilo {
                        [-1, 0]
                    } else if i == ihi {
                        [1, 0]
                    } else if j == ilo {
                        [0, -1]
                    } else {
                        [0, 1]
                    };
                    (NodeKind::Gamma0, Some(nu))
                } else {
                    (NodeKind::Omega2, None)
                }
            } else {
                (NodeKind::Omega1, None)
            };
            kind.push(k);
            normal.push(nu);
        }
    }

    let quarter = 0.25 * h * h;
    let mut w1 = vec![0.0; np];
    let mut w2 = vec![0.0; np];
    for cj in 0..n {
        for ci in 0..n {
            let inner = (ilo..ihi).contains(&ci) && (ilo..ihi).contains(&cj);
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let k = (cj + dj) * (n + 1) + ci + di;
                if inner {
                    w2[k] += quarter;
                } else {
                    w1[k] += quarter;
                }
            }
        }
    }
    let w = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();

    Ok(Domain {
        config: config.clone(),
        n,
        h,
        ilo,
        ihi,
        kind,
        w1,
        w2,
        w,
        normal,
    })
}

impl Domain {
    pub fn config(&self) -> &DomainConfig {
        &self.config
    }

    /// Cells per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of grid nodes, `(n+1)²`.
    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    /// Points per side, `n + 1`.
    #[inline]
    pub fn stride(&self) -> usize {
        self.n + 1
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % (self.n + 1), k / (self.n + 1))
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.ij(k);
        [i as f64 * self.h, j as f64 * self.h]
    }

    /// Grid indices of the inner square, `Ω₂ = (ilo·h, ihi·h)²`.
    pub fn inner_range(&self) -> (usize, usize) {
        (self.ilo, self.ihi)
    }

    pub fn kind(&self, k: usize) -> NodeKind {
        self.kind[k]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kind
    }

    /// Quadrature weights of the part of each node's cell area lying in `Ω₁`.
    pub fn weights1(&self) -> &[f64] {
        &self.w1
    }

    /// Quadrature weights of the part of each node's cell area lying in `Ω₂`.
    pub fn weights2(&self) -> &[f64] {
        &self.w2
    }

    /// Full trapezoid weights; they sum to the area of the unit square.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn region_weights(&self, region: Region) -> &[f64] {
        match region {
            Region::Omega => &self.w,
            Region::Omega1 => &self.w1,
            Region::Omega2 => &self.w2,
        }
    }

    /// Weights `c₁·w₁ + c₂·w₂` for a piecewise-constant coefficient.
    pub fn weighted(&self, c1: f64, c2: f64) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.w2)
            .map(|(a, b)| c1 * a + c2 * b)
            .collect()
    }

    /// Nodal value of a piecewise-constant coefficient, consistent with the quadrature.
    pub fn coefficient(&self, c1: f64, c2: f64) -> Vec<f64> {
        self.weighted(c1, c2)
            .iter()
            .zip(&self.w)
            .map(|(cw, w)| cw / w)
            .collect()
    }

    /// Whether node `k` carries values of a field on `region`.
    #[inline]
    pub fn in_region(&self, k: usize, region: Region) -> bool {
        match region {
            Region::Omega => true,
            Region::Omega1 => !matches!(self.kind[k], NodeKind::Omega2),
            Region::Omega2 => matches!(self.kind[k], NodeKind::Omega2 | NodeKind::Gamma0),
        }
    }

    /// Unknowns of the displacement problem: every node off `Γ₁`.
    #[inline]
    pub fn is_mech_unknown(&self, k: usize) -> bool {
        self.kind[k] != NodeKind::Gamma1
    }

    /// Unknowns of the temperature problem: `Ω₁` interior and the Robin boundary `Γ₁`.
    #[inline]
    pub fn is_thermal_unknown(&self, k: usize) -> bool {
        matches!(self.kind[k], NodeKind::Omega1 | NodeKind::Gamma1)
    }

    /// Outward unit normal at `Γ₀` (outward for `Ω₂`) and `Γ₁` nodes.
    pub fn normal(&self, k: usize) -> Option<[i32; 2]> {
        self.normal[k]
    }

    /// Nodes of a given kind.
    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        self.kind
            .iter()
            .enumerate()
            .filter(move |(_, k)| **k == kind)
            .map(|(i, _)| i)
    }

    /// Trapezoid weight of a `Γ₁` node for boundary integrals (corners collect
    /// half a cell from each face).
    pub fn boundary_weight(&self, k: usize) -> f64 {
        if self.kind[k] == NodeKind::Gamma1 {
            self.h
        } else {
            0.0
        }
    }

    /// Whether cell `(ci, cj)` (lower-left node `(ci, cj)`) lies in `Ω₂`.
    #[inline]
    pub fn cell_in_inner(&self, ci: usize, cj: usize) -> bool {
        (self.ilo..self.ihi).contains(&ci) && (self.ilo..self.ihi).contains(&cj)
    }

    /// Gradient-form weight of the horizontal edge `(i,j)–(i+1,j)` restricted to
    /// `Ω₁`: half the number of adjacent `Ω₁` cells.
    pub fn hedge_weight1(&self, i: usize, j: usize) -> f64 {
        let mut c = 0.0;
        if j > 0 && !self.cell_in_inner(i, j - 1) {
            c += 0.5;
        }
        if j < self.n && !self.cell_in_inner(i, j) {
            c += 0.5;
        }
        c
    }

    /// Same as [`Domain::hedge_weight1`] for the vertical edge `(i,j)–(i,j+1)`.
    pub fn vedge_weight1(&self, i: usize, j: usize) -> f64 {
        let mut c = 0.0;
        if i > 0 && !self.cell_in_inner(i - 1, j) {
            c += 0.5;
        }
        if i < self.n && !self.cell_in_inner(i, j) {
            c += 0.5;
        }
        c
    }

    /// Distance between `Γ₀` and `Γ₁` (width of the frame).
    pub fn frame_width(&self) -> f64 {
        self.ilo.min(self.n - self.ihi) as f64 * self.h
    }

    /// Euclidean distance from node `k` to the closed inner square.
    pub fn distance_to_inner(&self, k: usize) -> f64 {
        let [x, y] = self.coords(k);
        let lo = self.ilo as f64 * self.h;
        let hi = self.ihi as f64 * self.h;
        let dx = (lo - x).max(x - hi).max(0.0);
        let dy = (lo - y).max(y - hi).max(0.0);
        dx.hypot(dy)
    }
}

/// Outcome of checking the parameter and geometric hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    /// `min over Γ₀ of (x − x₀)·ν`.
    pub min_m_dot_nu_gamma0: f64,
    /// The star constant, present when the minimum above is positive.
    pub delta0: Option<f64>,
    /// `Γ₂ = ∅`, so the sign condition on `Γ₂` holds vacuously.
    pub gamma2_empty: bool,
    /// `ρ₁ ≥ ρ₂` and `β₁ ≤ β₂`.
    pub params_ok: bool,
}

impl GeometryReport {
    pub fn all_ok(&self) -> bool {
        self.delta0.is_some() && self.gamma2_empty && self.params_ok
    }
}

/// Evaluates the star-shape condition on `Γ₀` for the multiplier center `x0`
/// and the ordering conditions on the material parameters.
pub fn check_hypotheses(domain: &Domain, params: &PhysParams, x0: [f64; 2]) -> GeometryReport {
    let min = domain
        .nodes_of(NodeKind::Gamma0)
        .map(|k| {
            let [x, y] = domain.coords(k);
            let nu = domain.normal(k).expect("Γ₀ nodes carry normals");
            (x - x0[0]) * nu[0] as f64 + (y - x0[1]) * nu[1] as f64
        })
        .fold(f64::INFINITY, f64::min);
    GeometryReport {
        min_m_dot_nu_gamma0: min,
        delta0: (min > 0.0).then_some(min),
        gamma2_empty: true,
        params_ok: params.rho1 >= params.rho2 && params.beta1 <= params.beta2,
    }
}

/// Quintic smoothstep `6t⁵ − 15t⁴ + 10t³` clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

/// Cutoff functions and vector fields used by the multiplier functionals.
#[derive(Debug, Clone)]
pub struct CutoffSet {
    pub delta: f64,
    /// Vanishes within `δ` of `Γ₀`, equals one beyond `2δ`.
    pub phi1: Field,
    /// Vanishes within `2δ` of `Γ₀`, equals one beyond `4δ`.
    pub phi2: Field,
    /// Equals one within `4δ` of `Ω₂`, vanishes beyond `8δ`.
    pub psi: Field,
    /// Equals `−ν` on `Γ₁` away from the corners.
    pub h_field: Vec<[f64; 2]>,
    /// `m(x) = x − x₀`.
    pub m_field: Vec<[f64; 2]>,
}

/// Default cutoff width: a tenth of the frame width, so the `8δ` plateau of `ψ`
/// always fits between `Γ₀` and `Γ₁`.
pub fn default_delta(domain: &Domain) -> f64 {
    domain.frame_width() / 10.0
}

pub fn build_cutoffs(domain: &Domain, delta: f64) -> Result<CutoffSet> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::config(format!("cutoff delta = {delta} must be positive")));
    }
    let width = domain.frame_width();
    if 8.0 * delta >= width {
        return Err(Error::config(format!(
            "cutoff delta = {delta}: 8·delta = {} must be smaller than the Γ₀–Γ₁ distance {width} so that ψ's plateau fits inside Ω",
            8.0 * delta
        )));
    }
    let dist: Vec<f64> = (0..domain.len()).map(|k| domain.distance_to_inner(k)).collect();

    let phi = |i: f64| {
        let vals = dist
            .iter()
            .map(|&d| smoothstep((d - i * delta) / (i * delta)))
            .collect();
        Field::from_values(domain, Region::Omega1, vals)
    };
    let phi1 = phi(1.0);
    let phi2 = phi(2.0);
    let psi = Field::from_values(
        domain,
        Region::Omega,
        dist.iter()
            .map(|&d| 1.0 - smoothstep((d - 4.0 * delta) / (4.0 * delta)))
            .collect(),
    );

    // Per-face constant extension of −ν, damped over half the frame width and
    // renormalized where two faces overlap near the corners.
    let ell = 0.5 * width;
    let faces: [([f64; 2], fn(f64, f64) -> f64); 4] = [
        ([-1.0, 0.0], |x, _| x),
        ([1.0, 0.0], |x, _| 1.0 - x),
        ([0.0, -1.0], |_, y| y),
        ([0.0, 1.0], |_, y| 1.0 - y),
    ];
    let h_field = (0..domain.len())
        .map(|k| {
            let [x, y] = domain.coords(k);
            let mut acc = [0.0; 2];
            let mut total = 0.0;
            for (nu, dist_fn) in faces.iter() {
                let wgt = 1.0 - smoothstep(dist_fn(x, y) / ell);
                acc[0] -= wgt * nu[0];
                acc[1] -= wgt * nu[1];
                total += wgt;
            }
            let s = total.max(1.0);
            [acc[0] / s, acc[1] / s]
        })
        .collect();
    let x0 = domain.config().x0;
    let m_field = (0..domain.len())
        .map(|k| {
            let [x, y] = domain.coords(k);
            [x - x0[0], y - x0[1]]
        })
        .collect();

    Ok(CutoffSet {
        delta,
        phi1: phi1?,
        phi2: phi2?,
        psi: psi?,
        h_field,
        m_field,
    })
}
