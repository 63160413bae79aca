//! Energies, dissipation, energy-identity residuals, multiplier functionals
//! and the per-sample observable rows.

use std::io::Write;

use crate::domain::{build_cutoffs, build_domain, default_delta, CutoffSet, Domain, NodeKind};
use crate::error::{Error, Result};
use crate::fields::{weighted_dot, Field, PhysParams, Region, State};
use crate::nonlinearity;
use crate::operators::{lap_clamped_raw, thermal_form_edges, thermal_form_parts, DirichletSolver};
use crate::stepper::{StepOutcome, Trajectory};

/// Tolerance of the inverse-Laplacian solves behind `J₁` and `negnorm`.
const DIRICHLET_TOL: f64 = 1e-12;

/// Energy split by channel and region.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic1: f64,
    pub kinetic2: f64,
    pub bending1: f64,
    pub bending2: f64,
    pub thermal: f64,
    pub potential: f64,
    /// Quadratic part.
    pub e: f64,
    /// `e + potential`.
    pub lyapunov: f64,
}

/// Quadratic energy plus the potential of `params.nonlinearity`.
pub fn energy(domain: &Domain, state: &State, params: &PhysParams) -> EnergyBreakdown {
    let w1 = domain.weights1();
    let w2 = domain.weights2();
    let ut = state.ut.values();
    let mut lu = vec![0.0; domain.len()];
    lap_clamped_raw(domain, state.u.values(), &mut lu);
    let half = |c: f64, w: &[f64], v: &[f64]| 0.5 * c * weighted_dot(w, v, v);
    let kinetic1 = half(params.rho1, w1, ut);
    let kinetic2 = half(params.rho2, w2, ut);
    let bending1 = half(params.beta1, w1, &lu);
    let bending2 = half(params.beta2, w2, &lu);
    let thermal = half(params.rho0, w1, state.theta.values());
    let potential = nonlinearity::potential_raw(domain, state.u.values(), &params.nonlinearity);
    let e = kinetic1 + kinetic2 + bending1 + bending2 + thermal;
    EnergyBreakdown {
        kinetic1,
        kinetic2,
        bending1,
        bending2,
        thermal,
        potential,
        e,
        lyapunov: e + potential,
    }
}

pub(crate) fn dissipation_raw(domain: &Domain, params: &PhysParams, theta: &[f64]) -> f64 {
    params.beta0 * thermal_form_edges(domain, params.lambda, theta, theta)
}

/// `D = β₀∫_{Ω₁}|∇θ|² + β₀λ∮_{Γ₁}|θ|²`, summed edge by edge.
pub fn dissipation(domain: &Domain, state: &State, params: &PhysParams) -> f64 {
    dissipation_raw(domain, params, state.theta.values())
}

/// `β₀‖∇θ‖²` without the boundary term.
pub fn thermal_grad(domain: &Domain, theta: &Field, params: &PhysParams) -> f64 {
    params.beta0 * thermal_form_parts(domain, theta.values(), theta.values()).0
}

/// Per-step residuals `r_k = 𝓔(t_{k+1}) − 𝓔(t_k) + dt·D((θ_k + θ_{k+1})/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResiduals {
    pub per_step: Vec<f64>,
    pub cumulative: f64,
    pub max_abs: f64,
}

/// Energy-identity residuals recomputed from the stored states of a stride-1
/// trajectory.
pub fn energy_identity_residual(trajectory: &Trajectory) -> Result<IdentityResiduals> {
    if trajectory.stride != 1 {
        return Err(Error::usage(format!(
            "energy identity needs every step, trajectory stride is {}",
            trajectory.stride
        )));
    }
    let meta = &trajectory.meta;
    let d = build_domain(&meta.domain)?;
    let dt = meta.scheme.dt;
    let p = &meta.params;
    let mut per_step = Vec::with_capacity(trajectory.samples.len().saturating_sub(1));
    let mut prev: Option<(f64, &State)> = None;
    for (_, s) in &trajectory.samples {
        let e = energy(&d, s, p).lyapunov;
        if let Some((e0, s0)) = prev {
            let mid: Vec<f64> = s0
                .theta
                .values()
                .iter()
                .zip(s.theta.values())
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            per_step.push(e - e0 + dt * dissipation_raw(&d, p, &mid));
        }
        prev = Some((e, s));
    }
    let cumulative = per_step.iter().sum();
    let max_abs = per_step.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(IdentityResiduals {
        per_step,
        cumulative,
        max_abs,
    })
}

/// Weights of the combination `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagConfig {
    pub eta: f64,
    /// Calibration constant `C` in the `J₃` weight `μ/2 − ηC`.
    pub calibration: f64,
    /// Cutoff width; `None` picks a tenth of the frame width.
    pub delta: Option<f64>,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            eta: 1e-2,
            calibration: 1.0,
            delta: None,
        }
    }
}

impl DiagConfig {
    /// With `μ = 0` the `J₃` weight is allowed to be negative: no damping to
    /// calibrate against.
    pub fn violations(&self, params: &PhysParams) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            out.push(format!("diag.eta = {} must be positive", self.eta));
        }
        if !(self.calibration >= 0.0 && self.calibration.is_finite()) {
            out.push(format!("diag.calibration = {} must be non-negative", self.calibration));
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0) {
                out.push(format!("diag.delta = {delta} must be positive"));
            }
        }
        if params.mu > 0.0 && self.j3_weight(params) <= 0.0 {
            out.push(format!(
                "diag.eta * diag.calibration = {} must stay below params.mu/2 = {}",
                self.eta * self.calibration,
                params.mu / 2.0
            ));
        }
        out
    }

    pub fn j3_weight(&self, params: &PhysParams) -> f64 {
        params.mu / 2.0 - self.eta * self.calibration
    }
}

/// The multiplier functionals and their combination.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Multipliers {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub r: f64,
}

/// Central-difference gradient, zero on `Γ₁`.
fn central_gradient(d: &Domain, u: &[f64], k: usize) -> [f64; 2] {
    if d.kind(k) == NodeKind::Gamma1 {
        return [0.0, 0.0];
    }
    let s = d.n() + 1;
    let h2 = 2.0 * d.h();
    [(u[k + 1] - u[k - 1]) / h2, (u[k + s] - u[k - s]) / h2]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `J₁..J₄` and `R` for one state.
pub fn multiplier_functionals(
    domain: &Domain,
    state: &State,
    cutoffs: &CutoffSet,
    params: &PhysParams,
    diag: &DiagConfig,
) -> Result<Multipliers> {
    multipliers_with(domain, state, cutoffs, params, diag, &DirichletSolver::new(domain))
}

fn multipliers_with(
    d: &Domain,
    state: &State,
    cutoffs: &CutoffSet,
    params: &PhysParams,
    diag: &DiagConfig,
    solver: &DirichletSolver,
) -> Result<Multipliers> {
    let len = d.len();
    let u = state.u.values();
    let ut = state.ut.values();
    let th = state.theta.values();
    let rho_w = d.weighted(params.rho1, params.rho2);
    let w1 = d.weights1();

    let src: Vec<f64> = (0..len)
        .map(|k| params.rho0 * cutoffs.phi1.values()[k] * th[k])
        .collect();
    let wd = solver.solve(&Field::from_raw(Region::Omega, src), DIRICHLET_TOL)?;
    let j1 = -weighted_dot(&rho_w, ut, wd.values());

    let mut j2 = 0.0;
    let mut j3 = 0.0;
    let mut j4 = 0.0;
    for k in 0..len {
        if ut[k] == 0.0 {
            continue;
        }
        let g = central_gradient(d, u, k);
        j2 += rho_w[k] * ut[k] * dot2(cutoffs.h_field[k], g);
        j3 += params.rho1 * w1[k] * ut[k] * cutoffs.phi2.values()[k] * u[k];
        j4 += rho_w[k] * ut[k] * cutoffs.psi.values()[k] * dot2(cutoffs.m_field[k], g);
    }
    let r = j1
        + diag.eta / params.beta1.min(params.beta2) * j2
        + diag.j3_weight(params) * j3
        + diag.eta.sqrt() * j4;
    Ok(Multipliers { j1, j2, j3, j4, r })
}

/// Lower-order observables of a difference of two states.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DifferenceObservables {
    /// Quadratic energy of the difference.
    pub energy: f64,
    pub l2_low: f64,
    pub negnorm: f64,
}

fn l2_low(d: &Domain, u: &[f64]) -> f64 {
    weighted_dot(d.weights(), u, u)
}

/// `‖Δ_D⁻¹(ρ uₜ)‖²` with the nodal density.
fn negnorm(d: &Domain, ut: &[f64], params: &PhysParams, solver: &DirichletSolver) -> Result<f64> {
    let rho = d.coefficient(params.rho1, params.rho2);
    let src: Vec<f64> = ut.iter().zip(&rho).map(|(v, r)| v * r).collect();
    let w = solver.solve(&Field::from_raw(Region::Omega, src), DIRICHLET_TOL)?;
    Ok(weighted_dot(d.weights(), w.values(), w.values()))
}

/// Observables of `s1 − s2`.
pub fn difference_observables(
    domain: &Domain,
    s1: &State,
    s2: &State,
    params: &PhysParams,
) -> Result<DifferenceObservables> {
    difference_with(domain, s1, s2, params, &DirichletSolver::new(domain))
}

fn difference_with(
    d: &Domain,
    s1: &State,
    s2: &State,
    params: &PhysParams,
    solver: &DirichletSolver,
) -> Result<DifferenceObservables> {
    let diff = s1.diff(s2);
    Ok(DifferenceObservables {
        energy: energy(d, &diff, params).e,
        l2_low: l2_low(d, diff.u.values()),
        negnorm: negnorm(d, diff.ut.values(), params, solver)?,
    })
}

/// One step of the difference energy balance:
/// `E(d¹) − E(d⁰) + dt·D(θ_d^½) − dt⟨G₂ − G₁, v_d^½⟩`, with `d = s₁ − s₂`.
pub fn difference_balance_step(
    domain: &Domain,
    params: &PhysParams,
    dt: f64,
    old: (&State, &State),
    new: (&StepOutcome, &StepOutcome),
) -> f64 {
    let e0 = energy(domain, &old.0.diff(old.1), params).e;
    let e1 = energy(domain, &new.0.state.diff(&new.1.state), params).e;
    let th_d = new.0.theta_half.sub(&new.1.theta_half);
    let v_d = new.0.v_half.sub(&new.1.v_half);
    let g = new.1.force.sub(&new.0.force);
    e1 - e0 + dt * dissipation_raw(domain, params, th_d.values())
        - dt * weighted_dot(domain.weights(), g.values(), v_d.values())
}

/// One sample of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObservableRow {
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub dissipation: f64,
    /// Cumulative energy-identity residual up to `t`.
    pub residual: f64,
    pub multipliers: Multipliers,
    /// `|R|/E`, zero when `E = 0`.
    pub ratio: f64,
    pub negnorm: f64,
    pub l2_low: f64,
    pub thermal_grad: f64,
}

impl ObservableRow {
    pub const HEADER: &'static str = "t,kinetic1,kinetic2,bending1,bending2,thermal,potential,energy,lyapunov,\
dissipation,residual,j1,j2,j3,j4,r,ratio,negnorm,l2_low,thermal_grad";

    pub fn values(&self) -> [f64; 20] {
        let e = &self.energy;
        let m = &self.multipliers;
        [
            self.t,
            e.kinetic1,
            e.kinetic2,
            e.bending1,
            e.bending2,
            e.thermal,
            e.potential,
            e.e,
            e.lyapunov,
            self.dissipation,
            self.residual,
            m.j1,
            m.j2,
            m.j3,
            m.j4,
            m.r,
            self.ratio,
            self.negnorm,
            self.l2_low,
            self.thermal_grad,
        ]
    }

    pub fn csv_line(&self) -> String {
        format_csv(&self.values())
    }
}

/// Comma-joined floats with 17 significant digits.
pub fn format_csv(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Evaluates observable rows for one domain and parameter set.
#[derive(Debug, Clone)]
pub struct Observer {
    domain: Domain,
    params: PhysParams,
    diag: DiagConfig,
    cutoffs: CutoffSet,
    solver: DirichletSolver,
}

impl Observer {
    pub fn new(domain: &Domain, params: &PhysParams, diag: &DiagConfig) -> Result<Self> {
        let v = diag.violations(params);
        if !v.is_empty() {
            return Err(Error::config(v.join("; ")));
        }
        let delta = diag.delta.unwrap_or_else(|| default_delta(domain));
        Ok(Observer {
            domain: domain.clone(),
            params: params.clone(),
            diag: diag.clone(),
            cutoffs: build_cutoffs(domain, delta)?,
            solver: DirichletSolver::new(domain),
        })
    }

    pub fn cutoffs(&self) -> &CutoffSet {
        &self.cutoffs
    }

    pub fn row(&self, t: f64, state: &State, residual: f64) -> Result<ObservableRow> {
        let d = &self.domain;
        let p = &self.params;
        let energy = energy(d, state, p);
        let multipliers = multipliers_with(d, state, &self.cutoffs, p, &self.diag, &self.solver)?;
        let ratio = if energy.e > 0.0 {
            multipliers.r.abs() / energy.e
        } else {
            0.0
        };
        Ok(ObservableRow {
            t,
            energy,
            dissipation: dissipation(d, state, p),
            residual,
            multipliers,
            ratio,
            negnorm: negnorm(d, state.ut.values(), p, &self.solver)?,
            l2_low: l2_low(d, state.u.values()),
            thermal_grad: thermal_grad(d, &state.theta, p),
        })
    }

    pub fn difference(&self, s1: &State, s2: &State) -> Result<DifferenceObservables> {
        difference_with(&self.domain, s1, s2, &self.params, &self.solver)
    }
}

/// Receiver of observable rows.
pub trait ObservableSink {
    fn push(&mut self, row: &ObservableRow) -> Result<()>;
}

impl ObservableSink for Vec<ObservableRow> {
    fn push(&mut self, row: &ObservableRow) -> Result<()> {
        Vec::push(self, *row);
        Ok(())
    }
}

/// Writes rows as CSV, header first.
pub struct CsvSink<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Self {
        CsvSink {
            out,
            header_written: false,
        }
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.write_header()?;
        self.out.flush()?;
        Ok(self.out)
    }

    fn write_header(&mut self) -> Result<()> {
        if !self.header_written {
            writeln!(self.out, "{}", ObservableRow::HEADER)?;
            self.header_written = true;
        }
        Ok(())
    }
}

impl<W: Write> ObservableSink for CsvSink<W> {
    fn push(&mut self, row: &ObservableRow) -> Result<()> {
        self.write_header()?;
        writeln!(self.out, "{}", row.csv_line())?;
        Ok(())
    }
}
