//! Implicit-midpoint time stepping with a discrete-gradient force, trajectory
//! driver and stationary solver.
//!
//! In matrix form (all matrices symmetric, `M`, `M₀` diagonal lumped masses,
//! `A` bending stiffness, `K` thermal form, `C` coupling, `g` the discrete
//! gradient of the potential) one step reads
//!
//! ```text
//! M (v¹ − v⁰)/dt + A u^½ + Cᵀθ^½ + g = 0
//! M₀(θ¹ − θ⁰)/dt + β₀Kθ^½ − C v^½      = 0
//! u¹ = u⁰ + dt·v^½
//! ```
//!
//! with `x^½ = (x⁰ + x¹)/2`. Pairing the first row with `v^½` and the second
//! with `θ^½` gives `𝓔¹ − 𝓔⁰ = −dt·β₀⟨Kθ^½, θ^½⟩` exactly. The temperature is
//! eliminated, leaving a symmetric positive definite system for `v^½`.

use crate::diagnostics::{self, ObservableRow, ObservableSink, Observer};
use crate::domain::{Domain, DomainConfig};
use crate::error::{Error, Result};
use crate::fields::{Field, PhysParams, Region, State};
use crate::nonlinearity::{self, gradient_energy_raw, NonlinearitySpec};
use crate::operators::{
    coupling_apply, coupling_t_apply, dirichlet_stiffness_apply, dot, pcg, thermal_form_apply,
    BandedCholesky, SineTransform, Stiffness,
};

/// Time-stepping parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Relative residual target of every linear solve.
    pub tol_inner: f64,
    /// Relative change at which the nonlinear fixed point is accepted.
    pub tol_picard: f64,
    pub max_picard: usize,
    /// Iteration cap of every linear solve.
    pub max_iter: usize,
}

impl SchemeConfig {
    /// Defaults for a grid: `dt = h/4`.
    pub fn for_domain(domain: &Domain) -> Self {
        SchemeConfig {
            dt: domain.h() / 4.0,
            tol_inner: 1e-12,
            tol_picard: 1e-12,
            max_picard: 50,
            max_iter: 20_000,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("dt", self.dt),
            ("tol_inner", self.tol_inner),
            ("tol_picard", self.tol_picard),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("scheme.{name} = {v} must be positive"));
            }
        }
        if self.max_picard == 0 {
            out.push("scheme.max_picard must be positive".into());
        }
        if self.max_iter == 0 {
            out.push("scheme.max_iter must be positive".into());
        }
        if self.tol_picard < self.tol_inner {
            out.push(format!(
                "scheme.tol_picard = {} must not be smaller than scheme.tol_inner = {}",
                self.tol_picard, self.tol_inner
            ));
        }
        out
    }
}

/// Result of one step, with the midpoint quantities the balance checks need.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: State,
    /// `v^½ = (u¹ − u⁰)/dt`.
    pub v_half: Field,
    pub theta_half: Field,
    /// Discrete-gradient force as a field on `Ω`.
    pub force: Field,
    /// `D(θ^½)`.
    pub dissipation: f64,
    pub picard_sweeps: usize,
    pub cg_iterations: usize,
}

/// Reusable stepping context for one domain, parameter set and scheme.
#[derive(Debug, Clone)]
pub struct Stepper {
    domain: Domain,
    params: PhysParams,
    scheme: SchemeConfig,
    stiffness: Stiffness,
    mass: Vec<f64>,
    mass0: Vec<f64>,
    /// Factor of `T = 2M₀/dt + β₀K`.
    thermal: BandedCholesky,
    sine: SineTransform,
    rho_bar: f64,
    beta_bar: f64,
    frame_fraction: f64,
}

impl Stepper {
    pub fn new(domain: &Domain, params: &PhysParams, scheme: &SchemeConfig) -> Result<Self> {
        let mut v = params.violations();
        v.extend(scheme.violations());
        if !v.is_empty() {
            return Err(Error::config(v.join("; ")));
        }
        let mut mass = domain.weighted(params.rho1, params.rho2);
        let mut mass0: Vec<f64> = domain.weights1().iter().map(|w| params.rho0 * w).collect();
        for k in 0..domain.len() {
            if !domain.is_mech_unknown(k) {
                mass[k] = 0.0;
            }
            if !domain.is_thermal_unknown(k) {
                mass0[k] = 0.0;
            }
        }
        let thermal = BandedCholesky::from_stencil(
            domain,
            |k| domain.is_thermal_unknown(k),
            |v, out| {
                thermal_form_apply(domain, params.lambda, v, out);
                for k in 0..out.len() {
                    out[k] = params.beta0 * out[k] + 2.0 * mass0[k] / scheme.dt * v[k];
                }
            },
        )?;
        let a1: f64 = domain.weights1().iter().sum();
        let a2: f64 = domain.weights2().iter().sum();
        Ok(Stepper {
            domain: domain.clone(),
            params: params.clone(),
            scheme: scheme.clone(),
            stiffness: Stiffness::new(domain, params),
            mass,
            mass0,
            thermal,
            sine: SineTransform::new(domain),
            rho_bar: params.rho1 * a1 + params.rho2 * a2,
            beta_bar: params.beta1 * a1 + params.beta2 * a2,
            frame_fraction: a1,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn scheme(&self) -> &SchemeConfig {
        &self.scheme
    }

    /// Solves `T θ = b` on the temperature unknowns.
    fn solve_thermal(&self, b: &[f64], x: &mut [f64]) {
        self.thermal.solve(b, x);
    }

    /// Diagonal symbol of the sine-transform preconditioner for the reduced
    /// velocity system with Berger coefficient `m_bar`.
    fn symbol(&self, m_bar: f64) -> Vec<f64> {
        let h2 = self.domain.h().powi(2);
        let dt = self.scheme.dt;
        let p = &self.params;
        self.sine
            .eigenvalues()
            .iter()
            .map(|&l| {
                let coupling = self.frame_fraction * p.mu * p.mu * l * l
                    / (2.0 * p.rho0 / dt + p.beta0 * l);
                h2 * (2.0 * self.rho_bar / dt
                    + 0.5 * dt * (self.beta_bar * l * l + m_bar.max(0.0) * l)
                    + coupling)
            })
            .collect()
    }

    /// Advances one time step.
    pub fn step(&self, s: &State) -> Result<StepOutcome> {
        let d = &self.domain;
        let len = d.len();
        let dt = self.scheme.dt;
        let p = &self.params;
        let u0 = s.u.values();
        let v0 = s.ut.values();
        let th0 = s.theta.values();
        let coupled = p.mu != 0.0;

        // Parts of the right-hand side that do not depend on the nonlinearity.
        let mut tmp = vec![0.0; len];
        let mut au0 = vec![0.0; len];
        self.stiffness.apply_with(u0, &mut au0, &mut tmp);
        let mut base = vec![0.0; len];
        for k in 0..len {
            base[k] = 2.0 * self.mass[k] / dt * v0[k] - au0[k];
        }
        let mut cg_iterations = 0;
        if coupled {
            let tb: Vec<f64> = (0..len).map(|k| 2.0 * self.mass0[k] / dt * th0[k]).collect();
            let mut th_free = th0.to_vec();
            self.solve_thermal(&tb, &mut th_free);
            let mut ct = vec![0.0; len];
            coupling_t_apply(d, p.mu, &th_free, &mut ct, &mut tmp);
            for k in 0..len {
                base[k] -= ct[k];
            }
        }

        let q0 = gradient_energy_raw(d, u0);
        let mut ku0 = vec![0.0; len];
        dirichlet_stiffness_apply(d, u0, &mut ku0);
        let w = d.weights();

        let mut v = v0.to_vec();
        let mut sweeps = 0;
        let mut force_e = vec![0.0; len];
        // Berger: current M̄; scalar: current force (Euclidean, W·G).
        let mut m_bar = 0.0;
        let linear = p.nonlinearity.is_linear();
        match &p.nonlinearity {
            NonlinearitySpec::Berger { tension, gamma } => {
                let pred: Vec<f64> = (0..len).map(|k| u0[k] + dt * v0[k]).collect();
                m_bar = nonlinearity::berger_mean(*tension, *gamma, q0, gradient_energy_raw(d, &pred));
            }
            NonlinearitySpec::Scalar { .. } if !linear => {
                let pred = Field::from_raw(
                    Region::Omega,
                    (0..len).map(|k| u0[k] + dt * v0[k]).collect(),
                );
                let g = nonlinearity::discrete_gradient_force(d, &s.u, &pred, &p.nonlinearity)?;
                for k in 0..len {
                    force_e[k] = w[k] * g.values()[k];
                }
            }
            _ => {}
        }

        let mut u1 = vec![0.0; len];
        loop {
            sweeps += 1;
            let berger = matches!(p.nonlinearity, NonlinearitySpec::Berger { .. });
            let mut rhs = base.clone();
            if berger {
                for k in 0..len {
                    rhs[k] -= m_bar * ku0[k];
                }
            } else {
                for k in 0..len {
                    rhs[k] -= force_e[k];
                }
            }
            let symbol = self.symbol(if berger { m_bar } else { 0.0 });
            let mut tmp2 = vec![0.0; len];
            let mut cv = vec![0.0; len];
            let mut th = vec![0.0; len];
            let stats = pcg(
                |x, out| {
                    self.stiffness.apply_with(x, out, &mut tmp2);
                    if berger {
                        dirichlet_stiffness_apply(d, x, &mut cv);
                        for k in 0..len {
                            out[k] += m_bar * cv[k];
                        }
                    }
                    for k in 0..len {
                        out[k] = 0.5 * dt * out[k] + 2.0 * self.mass[k] / dt * x[k];
                    }
                    if coupled {
                        coupling_apply(d, p.mu, x, &mut cv);
                        self.solve_thermal(&cv, &mut th);
                        coupling_t_apply(d, p.mu, &th, &mut cv, &mut tmp2);
                        for k in 0..len {
                            out[k] += cv[k];
                        }
                    }
                },
                |r, z| self.sine.apply_inverse_symbol(&symbol, r, z),
                &rhs,
                &mut v,
                self.scheme.tol_inner,
                self.scheme.max_iter,
            );
            cg_iterations += stats?.iterations;

            for k in 0..len {
                u1[k] = u0[k] + dt * v[k];
            }
            if linear {
                break;
            }
            let tol = self.scheme.tol_picard.max(10.0 * self.scheme.tol_inner);
            match &p.nonlinearity {
                NonlinearitySpec::Berger { tension, gamma } => {
                    let m_new =
                        nonlinearity::berger_mean(*tension, *gamma, q0, gradient_energy_raw(d, &u1));
                    let change = (m_new - m_bar).abs();
                    m_bar = m_new;
                    if change <= tol * m_new.abs().max(1.0) {
                        break;
                    }
                    if sweeps >= self.scheme.max_picard {
                        return Err(Error::Picard {
                            iterations: sweeps,
                            residual: change,
                        });
                    }
                }
                NonlinearitySpec::Scalar { .. } => {
                    let unew = Field::from_raw(Region::Omega, u1.clone());
                    let g = nonlinearity::discrete_gradient_force(d, &s.u, &unew, &p.nonlinearity)?;
                    let mut diff = 0.0;
                    let mut norm = 0.0;
                    for k in 0..len {
                        let fe = w[k] * g.values()[k];
                        diff += (fe - force_e[k]).powi(2);
                        norm += fe * fe;
                        force_e[k] = fe;
                    }
                    let (diff, norm) = (diff.sqrt(), norm.sqrt());
                    if diff <= tol * norm.max(f64::MIN_POSITIVE) {
                        break;
                    }
                    if sweeps >= self.scheme.max_picard {
                        return Err(Error::Picard {
                            iterations: sweeps,
                            residual: diff / norm.max(f64::MIN_POSITIVE),
                        });
                    }
                }
            }
        }

        // Temperature at the midpoint from the converged velocity.
        let mut th_half = th0.to_vec();
        if coupled || th0.iter().any(|&t| t != 0.0) {
            let mut b = vec![0.0; len];
            coupling_apply(d, p.mu, &v, &mut b);
            for k in 0..len {
                b[k] += 2.0 * self.mass0[k] / dt * th0[k];
            }
            self.solve_thermal(&b, &mut th_half);
        }

        let mut v1 = vec![0.0; len];
        let mut th1 = vec![0.0; len];
        for k in 0..len {
            v1[k] = 2.0 * v[k] - v0[k];
            th1[k] = 2.0 * th_half[k] - th0[k];
        }
        let u1f = Field::from_raw(Region::Omega, u1);
        let force = nonlinearity::discrete_gradient_force(d, &s.u, &u1f, &p.nonlinearity)?;
        let theta_half = Field::from_raw(Region::Omega1, th_half);
        let dissipation = diagnostics::dissipation_raw(d, p, theta_half.values());
        Ok(StepOutcome {
            state: State {
                u: u1f,
                ut: Field::from_raw(Region::Omega, v1),
                theta: Field::from_raw(Region::Omega1, th1),
            },
            v_half: Field::from_raw(Region::Omega, v),
            theta_half,
            force,
            dissipation,
            picard_sweeps: sweeps,
            cg_iterations,
        })
    }
}

/// One implicit-midpoint step; builds a throwaway [`Stepper`].
pub fn step(domain: &Domain, state: &State, params: &PhysParams, scheme: &SchemeConfig) -> Result<State> {
    Ok(Stepper::new(domain, params, scheme)?.step(state)?.state)
}

/// Configuration a trajectory was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub domain: DomainConfig,
    pub params: PhysParams,
    pub scheme: SchemeConfig,
}

/// Per-step bookkeeping recorded for every step regardless of the stride.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub t: f64,
    /// `𝓔 = E + Π` at the end of the step.
    pub lyapunov: f64,
    /// `D(θ^½)`.
    pub dissipation: f64,
    /// `𝓔¹ − 𝓔⁰ + dt·D(θ^½)`.
    pub residual: f64,
}

/// Sampled trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub stride: usize,
    pub initial_lyapunov: f64,
    /// `(t, state)` every `stride` steps, when states are kept.
    pub samples: Vec<(f64, State)>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Builds a trajectory from externally produced states (stride 1).
    pub fn from_states(meta: TrajectoryMeta, states: Vec<State>) -> Result<Self> {
        let domain = crate::domain::build_domain(&meta.domain)?;
        let dt = meta.scheme.dt;
        let initial_lyapunov = states
            .first()
            .map(|s| diagnostics::energy(&domain, s, &meta.params).lyapunov)
            .unwrap_or(0.0);
        let samples = states
            .into_iter()
            .enumerate()
            .map(|(k, s)| (k as f64 * dt, s))
            .collect();
        Ok(Trajectory {
            meta,
            stride: 1,
            initial_lyapunov,
            samples,
            steps: Vec::new(),
        })
    }

    pub fn final_time(&self) -> f64 {
        self.steps.last().map(|r| r.t).unwrap_or(0.0)
    }

    /// `Σ_k r_k` over all steps.
    pub fn cumulative_residual(&self) -> f64 {
        self.steps.iter().map(|r| r.residual).sum()
    }
}

/// Sampling controls for [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub stride: usize,
    pub keep_states: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            stride: 1,
            keep_states: true,
        }
    }
}

/// Number of steps of size `dt` needed to reach `t_final`.
pub fn step_count(t_final: f64, dt: f64) -> usize {
    if t_final <= 0.0 {
        0
    } else {
        ((t_final / dt) * (1.0 - 1e-12)).ceil() as usize
    }
}

/// Advances `initial` to `t_final`, emitting an [`ObservableRow`] every
/// `stride` steps (and at the end) to each sink when an observer is given.
pub fn simulate(
    stepper: &Stepper,
    initial: State,
    t_final: f64,
    options: &SimOptions,
    observer: Option<&Observer>,
    sinks: &mut [&mut dyn ObservableSink],
) -> Result<Trajectory> {
    simulate_with(stepper, initial, t_final, options, observer, sinks, |_, _| Ok(false))
}

/// [`simulate`] with a per-step callback receiving the step outcome and the
/// step index.
pub fn simulate_with(
    stepper: &Stepper,
    initial: State,
    t_final: f64,
    options: &SimOptions,
    observer: Option<&Observer>,
    sinks: &mut [&mut dyn ObservableSink],
    mut on_step: impl FnMut(&StepOutcome, usize) -> Result<bool>,
) -> Result<Trajectory> {
    let d = stepper.domain();
    let p = stepper.params();
    if options.stride == 0 {
        return Err(Error::usage("sample stride must be positive"));
    }
    let v = initial.violations(d);
    if !v.is_empty() {
        return Err(Error::usage(format!("invalid initial state: {}", v.join("; "))));
    }
    if t_final < 0.0 || !t_final.is_finite() {
        return Err(Error::usage(format!("final time {t_final} must be non-negative")));
    }
    let dt = stepper.scheme().dt;
    let n_steps = step_count(t_final, dt);
    let e_init = diagnostics::energy(d, &initial, p).lyapunov;
    let mut traj = Trajectory {
        meta: TrajectoryMeta {
            domain: d.config().clone(),
            params: p.clone(),
            scheme: stepper.scheme().clone(),
        },
        stride: options.stride,
        initial_lyapunov: e_init,
        samples: Vec::new(),
        steps: Vec::with_capacity(n_steps),
    };
    let emit = |t: f64, s: &State, cum: f64, sinks: &mut [&mut dyn ObservableSink]| -> Result<()> {
        if let Some(obs) = observer {
            let row: ObservableRow = obs.row(t, s, cum)?;
            for sink in sinks.iter_mut() {
                sink.push(&row)?;
            }
        }
        Ok(())
    };
    emit(0.0, &initial, 0.0, sinks)?;
    if options.keep_states {
        traj.samples.push((0.0, initial.clone()));
    }
    let mut state = initial;
    let mut e_prev = e_init;
    let mut cum = 0.0;
    for k in 1..=n_steps {
        let t0 = (k - 1) as f64 * dt;
        let out = stepper.step(&state).map_err(|e| Error::Step {
            t: t0,
            source: Box::new(e),
        })?;
        let e1 = diagnostics::energy(d, &out.state, p).lyapunov;
        let r = e1 - e_prev + dt * out.dissipation;
        cum += r;
        let t = k as f64 * dt;
        traj.steps.push(StepRecord {
            t,
            lyapunov: e1,
            dissipation: out.dissipation,
            residual: r,
        });
        let stop = on_step(&out, k)?;
        state = out.state;
        e_prev = e1;
        if k % options.stride == 0 || k == n_steps || stop {
            emit(t, &state, cum, sinks)?;
            if options.keep_states {
                traj.samples.push((t, state.clone()));
            }
        }
        if stop {
            break;
        }
    }
    if !options.keep_states {
        let t = traj.final_time();
        traj.samples.push((t, state));
    }
    Ok(traj)
}

/// Converged stationary point.
#[derive(Debug, Clone)]
pub struct StationaryOutcome {
    pub u: Field,
    /// `‖βΔ²u + F(u)‖` in the trapezoid `L²` norm.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `βΔ_h²u + F(u) = 0` by minimizing `½a(u,u) + Π(u)` with a truncated
/// Newton–CG method and Armijo backtracking.
pub fn stationary_solve(domain: &Domain, params: &PhysParams, guess: &Field) -> Result<StationaryOutcome> {
    let v = params.violations();
    if !v.is_empty() {
        return Err(Error::config(v.join("; ")));
    }
    if guess.region() != Region::Omega {
        return Err(Error::usage("stationary guess must be a field on Ω"));
    }
    let d = domain;
    let len = d.len();
    let spec = &params.nonlinearity;
    let stiff = Stiffness::new(d, params);
    let sine = SineTransform::new(d);
    let w = d.weights();
    let a2: f64 = d.weights2().iter().sum();
    let beta_bar = params.beta1 * (1.0 - a2) + params.beta2 * a2;
    let h2 = d.h().powi(2);

    let mut u: Vec<f64> = guess.values().to_vec();
    for k in 0..len {
        if !d.is_mech_unknown(k) {
            u[k] = 0.0;
        }
    }
    let objective = |u: &[f64]| 0.5 * stiff.form(u, u) + nonlinearity::potential_raw(d, u, spec);
    // Euclidean gradient A u + W F(u).
    let gradient = |u: &[f64], g: &mut [f64]| {
        stiff.apply(u, g);
        let f = nonlinearity::force_of(d, &Field::from_raw(Region::Omega, u.to_vec()), spec);
        for k in 0..len {
            g[k] += w[k] * f.values()[k];
        }
    };
    let field_residual = |g: &[f64]| -> f64 {
        (0..len)
            .filter(|&k| d.is_mech_unknown(k))
            .map(|k| g[k] * g[k] / w[k])
            .sum::<f64>()
            .sqrt()
    };
    let l2 = |u: &[f64]| -> f64 { u.iter().zip(w).map(|(a, b)| a * a * b).sum::<f64>().sqrt() };

    let mut g = vec![0.0; len];
    let max_newton = 200;
    let mut last_res = f64::INFINITY;
    for it in 0..=max_newton {
        gradient(&u, &mut g);
        let res = field_residual(&g);
        last_res = res;
        if res <= 1e-9 * (1.0 + l2(&u)) {
            return Ok(StationaryOutcome {
                u: Field::from_raw(Region::Omega, u),
                residual: res,
                iterations: it,
            });
        }
        if it == max_newton {
            break;
        }
        // Hessian pieces at u.
        let mut ku = vec![0.0; len];
        dirichlet_stiffness_apply(d, &u, &mut ku);
        let (m, gamma) = match spec {
            NonlinearitySpec::Berger { tension, gamma } => {
                (tension + gamma * dot(&u, &ku), *gamma)
            }
            _ => (0.0, 0.0),
        };
        let scalar_diag: Vec<f64> = match spec {
            NonlinearitySpec::Scalar { f1, f2 } => (0..len)
                .map(|k| {
                    if !d.is_mech_unknown(k) {
                        0.0
                    } else if d.kind(k) == crate::domain::NodeKind::Omega2 {
                        w[k] * f2.derivative(u[k])
                    } else {
                        w[k] * f1.derivative(u[k])
                    }
                })
                .collect(),
            _ => Vec::new(),
        };
        let hess = |x: &[f64], out: &mut [f64]| {
            stiff.apply(x, out);
            if gamma > 0.0 {
                let mut kx = vec![0.0; len];
                dirichlet_stiffness_apply(d, x, &mut kx);
                let c = 2.0 * gamma * dot(&ku, x);
                for k in 0..len {
                    out[k] += m * kx[k] + c * ku[k];
                }
            } else if !scalar_diag.is_empty() {
                for k in 0..len {
                    out[k] += scalar_diag[k] * x[k];
                }
            }
        };
        let symbol: Vec<f64> = sine
            .eigenvalues()
            .iter()
            .map(|&l| h2 * (beta_bar * l * l + m.max(0.0) * l))
            .collect();
        let gnorm = dot(&g, &g).sqrt();
        let forcing = (0.5f64).min(gnorm.sqrt()) * gnorm;
        let dir = truncated_cg(&hess, |r, z| sine.apply_inverse_symbol(&symbol, r, z), &g, forcing, 500);

        let phi0 = objective(&u);
        let slope = dot(&g, &dir);
        // Round-off level of Φ: below it the sufficient-decrease test is noise.
        let slack = 1e-13 * (phi0.abs() + 0.5 * stiff.form(&u, &u).abs());
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; len];
        for _ in 0..60 {
            for k in 0..len {
                trial[k] = u[k] + alpha * dir[k];
            }
            if objective(&trial) <= phi0 + 1e-4 * alpha * slope + slack {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Near the root Φ stops resolving the decrease; accept the full
            // step if it reduces the residual.
            for k in 0..len {
                trial[k] = u[k] + dir[k];
            }
            let mut gt = vec![0.0; len];
            gradient(&trial, &mut gt);
            if field_residual(&gt) < res {
                accepted = true;
            }
        }
        if !accepted {
            return Err(Error::Newton {
                iterations: it,
                residual: res,
            });
        }
        u.copy_from_slice(&trial);
    }
    Err(Error::Newton {
        iterations: max_newton,
        residual: last_res,
    })
}

/// Approximately solves `H d = −g`, stopping at negative curvature. Returns a
/// descent direction.
fn truncated_cg(
    hess: &dyn Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    g: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let len = g.len();
    let mut x = vec![0.0; len];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut z = vec![0.0; len];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut hp = vec![0.0; len];
    for it in 0..max_iter {
        hess(&p, &mut hp);
        let php = dot(&p, &hp);
        if php <= 0.0 {
            if it == 0 {
                // Preconditioned steepest descent.
                return p;
            }
            return x;
        }
        let alpha = rz / php;
        for k in 0..len {
            x[k] += alpha * p[k];
            r[k] -= alpha * hp[k];
        }
        if dot(&r, &r).sqrt() <= tol {
            break;
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..len {
            p[k] = z[k] + beta * p[k];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::energy;
    use crate::domain::build_domain;
    use crate::initial::{initial_state, InitialKind};
    use crate::nonlinearity::CubicLaw;
    use crate::testutil::random_clamped;

    fn grid(n: usize) -> Domain {
        build_domain(&DomainConfig {
            n_cells: n,
            ..Default::default()
        })
        .unwrap()
    }

    fn random(d: &Domain, amp: f64) -> State {
        initial_state(d, InitialKind::Random, amp, 11)
    }

    #[test]
    fn zero_state_is_fixed() {
        let d = grid(16);
        let st = Stepper::new(&d, &PhysParams::default(), &SchemeConfig::for_domain(&d)).unwrap();
        let out = st.step(&State::zero(&d)).unwrap();
        assert_eq!(out.state, State::zero(&d));
        assert_eq!(out.dissipation, 0.0);
    }

    #[test]
    fn decoupled_linear_plate_conserves_energy() {
        let d = grid(16);
        let p = PhysParams {
            mu: 0.0,
            ..Default::default()
        }
        .linear();
        let mut s = random(&d, 1.0);
        s.theta = Field::zeros(&d, Region::Omega1);
        let st = Stepper::new(&d, &p, &SchemeConfig::for_domain(&d)).unwrap();
        let e0 = energy(&d, &s, &p).e;
        for _ in 0..1000 {
            s = st.step(&s).unwrap().state;
        }
        let e1 = energy(&d, &s, &p).e;
        assert!(((e1 - e0) / e0).abs() < 1e-9, "{}", (e1 - e0) / e0);
    }

    #[test]
    fn coupled_linear_step_balances_energy() {
        let d = grid(24);
        let p = PhysParams {
            lambda: 0.0,
            mu: 1.5,
            ..Default::default()
        }
        .linear();
        let st = Stepper::new(&d, &p, &SchemeConfig::for_domain(&d)).unwrap();
        let mut s = random(&d, 1.0);
        let e0 = energy(&d, &s, &p).lyapunov;
        for _ in 0..20 {
            let out = st.step(&s).unwrap();
            let r = energy(&d, &out.state, &p).lyapunov - energy(&d, &s, &p).lyapunov
                + st.scheme().dt * out.dissipation;
            assert!(r.abs() <= 1e-9 * e0, "{r}");
            assert!(out.dissipation >= 0.0);
            s = out.state;
        }
    }

    #[test]
    fn nonlinear_steps_balance_energy() {
        let d = grid(16);
        let specs = [
            NonlinearitySpec::Berger {
                tension: 1.0,
                gamma: 1.0,
            },
            NonlinearitySpec::Scalar {
                f1: CubicLaw { kappa: 1.0, c: 0.0 },
                f2: CubicLaw { kappa: 2.0, c: 0.5 },
            },
        ];
        for spec in specs {
            let p = PhysParams {
                nonlinearity: spec.clone(),
                ..Default::default()
            };
            let st = Stepper::new(&d, &p, &SchemeConfig::for_domain(&d)).unwrap();
            let mut s = random(&d, 2.0);
            let e0 = energy(&d, &s, &p).lyapunov;
            for _ in 0..20 {
                let out = st.step(&s).unwrap();
                let r = energy(&d, &out.state, &p).lyapunov - energy(&d, &s, &p).lyapunov
                    + st.scheme().dt * out.dissipation;
                assert!(r.abs() <= 1e-9 * e0, "{spec:?}: {r}");
                s = out.state;
            }
        }
    }

    #[test]
    fn velocity_is_the_displacement_difference_quotient() {
        let d = grid(16);
        let p = PhysParams::default();
        let st = Stepper::new(&d, &p, &SchemeConfig::for_domain(&d)).unwrap();
        let s = random(&d, 1.0);
        let out = st.step(&s).unwrap();
        let dt = st.scheme().dt;
        for k in 0..d.len() {
            let q = (out.state.u.values()[k] - s.u.values()[k]) / dt;
            let mid = 0.5 * (out.state.ut.values()[k] + s.ut.values()[k]);
            assert!((q - out.v_half.values()[k]).abs() <= 1e-12 * (1.0 + q.abs()));
            assert!((q - mid).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn zero_horizon_keeps_only_initial_state() {
        let d = grid(16);
        let st = Stepper::new(&d, &PhysParams::default(), &SchemeConfig::for_domain(&d)).unwrap();
        let s = random(&d, 1.0);
        let tr = simulate(&st, s.clone(), 0.0, &SimOptions::default(), None, &mut []).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert_eq!(tr.samples[0].1, s);
        assert!(tr.steps.is_empty());
    }

    #[test]
    fn sample_times_increase_and_stride_is_respected() {
        let d = grid(16);
        let scheme = SchemeConfig::for_domain(&d);
        let st = Stepper::new(&d, &PhysParams::default(), &scheme).unwrap();
        let opts = SimOptions {
            stride: 3,
            keep_states: true,
        };
        let tr = simulate(&st, random(&d, 1.0), 10.0 * scheme.dt, &opts, None, &mut []).unwrap();
        let times: Vec<f64> = tr.samples.iter().map(|(t, _)| *t).collect();
        assert_eq!(tr.steps.len(), 10);
        assert_eq!(times.len(), 5);
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn linear_scheme_is_second_order_in_time() {
        let d = grid(16);
        let p = PhysParams::default().linear();
        let mut s0 = initial_state(&d, InitialKind::Bump, 1.0, 0);
        s0.theta = initial_state(&d, InitialKind::Spot, 1.0, 0).theta;
        let t_final = 1.0 / 16.0;
        let run = |dt: f64| {
            let scheme = SchemeConfig {
                dt,
                ..SchemeConfig::for_domain(&d)
            };
            let st = Stepper::new(&d, &p, &scheme).unwrap();
            let opts = SimOptions {
                stride: 1,
                keep_states: false,
            };
            simulate(&st, s0.clone(), t_final, &opts, None, &mut [])
                .unwrap()
                .samples
                .pop()
                .unwrap()
                .1
        };
        let dt = 1.0 / 1024.0;
        let (a, b, c) = (run(dt), run(dt / 2.0), run(dt / 4.0));
        let e1 = a.u.sub(&b.u).max_abs();
        let e2 = b.u.sub(&c.u).max_abs();
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "observed order {order}");
    }

    #[test]
    fn stationary_zero_guess_is_exact() {
        let d = grid(16);
        let p = PhysParams::default();
        let out = stationary_solve(&d, &p, &Field::zeros(&d, Region::Omega)).unwrap();
        assert_eq!(out.u.max_abs(), 0.0);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn stationary_small_guess_returns_to_zero() {
        let d = grid(16);
        let p = PhysParams::default();
        let guess = random_clamped(&d, 3).scale(1e-2);
        let out = stationary_solve(&d, &p, &guess).unwrap();
        assert!(out.u.max_abs() < 1e-8, "{}", out.u.max_abs());
    }

    #[test]
    fn buckled_root_satisfies_the_residual_bound() {
        let d = grid(16);
        let p = PhysParams {
            nonlinearity: NonlinearitySpec::Berger {
                tension: -100.0,
                gamma: 1.0,
            },
            ..Default::default()
        };
        let guess = random_clamped(&d, 5).scale(1e-2);
        let out = stationary_solve(&d, &p, &guess).unwrap();
        assert!(out.u.max_abs() > 1e-3);
        let l2: f64 = crate::fields::inner_l2(&d, &out.u, &out.u, Region::Omega).unwrap().sqrt();
        assert!(out.residual <= 1e-9 * (1.0 + l2));
    }

    #[test]
    fn invalid_scheme_is_rejected() {
        let d = grid(16);
        let scheme = SchemeConfig {
            dt: -1.0,
            tol_picard: 1e-14,
            ..SchemeConfig::for_domain(&d)
        };
        let err = Stepper::new(&d, &PhysParams::default(), &scheme).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scheme.dt") && msg.contains("scheme.tol_picard"), "{msg}");
    }

    #[test]
    #[ignore]
    fn timing_probe() {
        for n in [32, 64] {
            let d = grid(n);
            for p in [PhysParams::default().linear(), PhysParams::default()] {
                let st = Stepper::new(&d, &p, &SchemeConfig::for_domain(&d)).unwrap();
                let mut s = initial_state(&d, InitialKind::Bump, 1.0, 0);
                let t = std::time::Instant::now();
                let mut iters = 0;
                for _ in 0..20 {
                    let out = st.step(&s).unwrap();
                    iters += out.cg_iterations;
                    s = out.state;
                }
                eprintln!("n={n} {:?}: {:?}/step, {} cg its/step", p.nonlinearity, t.elapsed() / 20, iters / 20);
            }
        }
    }
}
