//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermoplate::experiments::{
    difference_pair, difference_run, monotone_violations, step_increase_bound, write_report,
};
use thermoplate::initial::random_smooth_clamped;
use thermoplate::nonlinearity::{discrete_gradient_force, force, potential};
use thermoplate::operators::{
    biharmonic_transmission, coupling, coupling_adjoint, dirichlet_laplacian, laplacian_clamped, DirichletSolver,
    Stiffness,
};
use thermoplate::{
    build_domain, initial_state, inner_l2, parse_config, run_experiment, simulate, CubicLaw, DiagConfig, Domain,
    DomainConfig, Field, InitialKind, NonlinearitySpec, Observer, PhysParams, Region, SchemeConfig, SimOptions, State,
    Stepper,
};

type Outcome = Result<String, String>;

fn dom(n: usize) -> Domain {
    build_domain(&DomainConfig {
        n_cells: n,
        ..Default::default()
    })
    .expect("domain")
}

fn params(spec: NonlinearitySpec) -> PhysParams {
    PhysParams {
        nonlinearity: spec,
        ..Default::default()
    }
}

fn berger() -> NonlinearitySpec {
    NonlinearitySpec::Berger {
        tension: 1.0,
        gamma: 1.0,
    }
}

fn cube() -> NonlinearitySpec {
    let f = CubicLaw { kappa: 1.0, c: 0.0 };
    NonlinearitySpec::Scalar { f1: f, f2: f }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Runs `steps` steps at `dt = h/4` and returns `(|Σ residual|, 𝓔(0), seconds)`.
fn identity_run(n: usize, spec: NonlinearitySpec, amplitude: f64, steps: usize) -> Result<(f64, f64, f64), String> {
    let d = dom(n);
    let p = params(spec);
    let scheme = SchemeConfig::for_domain(&d);
    let st = Stepper::new(&d, &p, &scheme).map_err(|e| e.to_string())?;
    let s0 = initial_state(&d, InitialKind::Random, amplitude, 1);
    let opts = SimOptions {
        stride: steps,
        keep_states: false,
    };
    let t0 = Instant::now();
    let traj = simulate(&st, s0, steps as f64 * scheme.dt, &opts, None, &mut []).map_err(|e| e.to_string())?;
    if traj.steps.len() != steps {
        return Err(format!("ran {} steps, expected {steps}", traj.steps.len()));
    }
    Ok((traj.cumulative_residual().abs(), traj.initial_lyapunov, t0.elapsed().as_secs_f64()))
}

fn c1_linear_energy_equality() -> Outcome {
    let (r, e0, secs) = identity_run(64, NonlinearitySpec::linear(), 1.0, 2000)?;
    check(
        r <= 1e-8 * e0,
        format!("n=64, 2000 steps: |residual| = {r:.3e}, 1e-8·𝓔(0) = {:.3e}, {secs:.1} s", 1e-8 * e0),
    )
}

fn c2_nonlinear_energy_equality() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, spec) in [("berger", berger()), ("cubic", cube())] {
        let (r, e0, secs) = identity_run(32, spec, 0.2, 2000)?;
        ok &= r <= 1e-7 * e0;
        parts.push(format!("{name}: |residual| = {r:.3e} vs {:.3e} ({secs:.1} s)", 1e-7 * e0));
    }
    check(ok, format!("n=32, 2000 steps; {}", parts.join("; ")))
}

fn c3_contraction() -> Outcome {
    let d = dom(32);
    let scheme = SchemeConfig::for_domain(&d);
    let factor = step_increase_bound(&parse_config("").unwrap().config);
    let mut total = 0;
    let mut runs = 0;
    let mut steps = 0;
    for spec in [NonlinearitySpec::linear(), berger()] {
        let p = params(spec);
        let st = Stepper::new(&d, &p, &scheme).map_err(|e| e.to_string())?;
        for kind in [InitialKind::Bump, InitialKind::Kick, InitialKind::Spot, InitialKind::Random] {
            let s0 = initial_state(&d, kind, 1.0, 5);
            let opts = SimOptions {
                stride: 64,
                keep_states: false,
            };
            let traj = simulate(&st, s0, 1.0, &opts, None, &mut []).map_err(|e| e.to_string())?;
            total += monotone_violations(traj.initial_lyapunov, &traj.steps, factor);
            steps += traj.steps.len();
            runs += 1;
        }
    }
    check(
        total == 0,
        format!("{total} violations in {steps} steps over {runs} runs (tolerance {factor:.1e}·|𝓔|)"),
    )
}

fn c4_isothermal_control() -> Outcome {
    let d = dom(32);
    let p = PhysParams {
        mu: 0.0,
        ..params(NonlinearitySpec::linear())
    };
    let scheme = SchemeConfig::for_domain(&d);
    let st = Stepper::new(&d, &p, &scheme).map_err(|e| e.to_string())?;
    // Decoupled heat would still dissipate its own energy; start from θ = 0 so
    // E is the plate energy alone.
    let s0 = State {
        theta: Field::zeros(&d, Region::Omega1),
        ..initial_state(&d, InitialKind::Random, 1.0, 2)
    };
    let opts = SimOptions {
        stride: 1000,
        keep_states: false,
    };
    let traj = simulate(&st, s0, 1000.0 * scheme.dt, &opts, None, &mut []).map_err(|e| e.to_string())?;
    let e0 = traj.initial_lyapunov;
    let drift = traj
        .steps
        .iter()
        .map(|r| ((r.lyapunov - e0) / e0).abs())
        .fold(0.0, f64::max);
    check(
        traj.steps.len() == 1000 && drift <= 1e-9,
        format!("θ(0) = 0, max relative drift of E over {} steps: {drift:.3e}", traj.steps.len()),
    )
}

fn s2(x: f64) -> f64 {
    (PI * x).sin().powi(2)
}

fn c2x(x: f64) -> f64 {
    (2.0 * PI * x).cos()
}

// u = S(x)S(y), S = sin²(π·): S'' = 2π²cos(2π·), S'''' = −8π⁴cos(2π·).
fn exact_lap(x: f64, y: f64) -> f64 {
    2.0 * PI * PI * (c2x(x) * s2(y) + s2(x) * c2x(y))
}

fn exact_bilap(x: f64, y: f64) -> f64 {
    let p4 = PI.powi(4);
    -8.0 * p4 * (c2x(x) * s2(y) + s2(x) * c2x(y)) + 8.0 * p4 * c2x(x) * c2x(y)
}

fn c5_operators() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let uniform = PhysParams {
        beta1: 1.0,
        beta2: 1.0,
        ..params(NonlinearitySpec::linear())
    };
    let mut lap_err = Vec::new();
    let mut bilap_err = Vec::new();
    for n in [32, 64, 128] {
        let d = dom(n);
        let u = Field::from_fn(&d, Region::Omega, |x, y| s2(x) * s2(y));
        let l = laplacian_clamped(&d, &u);
        let b = biharmonic_transmission(&d, &u, &uniform);
        let (mut el, mut eb) = (0.0f64, 0.0f64);
        for k in 0..d.len() {
            let [x, y] = d.coords(k);
            el = el.max((l.values()[k] - exact_lap(x, y)).abs());
            if d.is_mech_unknown(k) {
                eb = eb.max((b.values()[k] - exact_bilap(x, y)).abs());
            }
        }
        lap_err.push(el);
        bilap_err.push(eb);
    }
    for (name, errs) in [("laplacian", &lap_err), ("bilaplacian", &bilap_err)] {
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        ok &= orders.iter().all(|o| (o - 2.0).abs() <= 0.3);
        notes.push(format!("{name} orders {:.2}/{:.2}", orders[0], orders[1]));
    }

    let d = dom(32);
    let p = PhysParams {
        beta2: 3.0,
        ..params(NonlinearitySpec::linear())
    };
    let a = Stiffness::new(&d, &p);
    let mut sym: f64 = 0.0;
    let mut positive = true;
    let (mut au, mut aw) = (vec![0.0; d.len()], vec![0.0; d.len()]);
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    for seed in 0..100u64 {
        let u = random_smooth_clamped(&d, seed, 6);
        let w = random_smooth_clamped(&d, seed + 1000, 6);
        a.apply(u.values(), &mut au);
        a.apply(w.values(), &mut aw);
        let (uw, wu) = (dot(&au, w.values()), dot(u.values(), &aw));
        let scale = (dot(&au, u.values()) * dot(&aw, w.values())).sqrt();
        sym = sym.max((uw - wu).abs() / scale);
        positive &= dot(&au, u.values()) > 0.0;
    }
    ok &= sym <= 1e-12 && positive;
    notes.push(format!("stiffness asymmetry {sym:.1e}, positive {positive}"));

    let mut cancel: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..100u64 {
        let th = thermoplate::initial::random_smooth_theta(&d, seed, 5);
        let ut = random_smooth_clamped(&d, seed + 77, 5);
        let pm = PhysParams {
            mu: rng.gen_range(0.1..5.0),
            ..p.clone()
        };
        let x = inner_l2(&d, &coupling(&d, &th, &pm), &ut, Region::Omega).map_err(|e| e.to_string())?;
        let y = inner_l2(&d, &coupling_adjoint(&d, &ut, &pm), &th, Region::Omega1).map_err(|e| e.to_string())?;
        cancel = cancel.max((x + y).abs() / x.abs().max(y.abs()));
    }
    ok &= cancel <= 1e-12;
    notes.push(format!("coupling cancellation {cancel:.1e}"));
    check(ok, notes.join(", "))
}

fn c6_dirichlet_eigenvalue() -> Outcome {
    let d = dom(32);
    let h = d.h();
    let solver = DirichletSolver::new(&d);
    let mut x = random_smooth_clamped(&d, 3, 4);
    let norm = |f: &Field| f.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut lambda = 0.0;
    for _ in 0..60 {
        let y = solver.solve(&x, 1e-13).map_err(|e| e.to_string())?;
        x = y.scale(1.0 / norm(&y));
        let lx = dirichlet_laplacian(&d, &x);
        lambda = -lx.values().iter().zip(x.values()).map(|(a, b)| a * b).sum::<f64>();
    }
    let exact = 8.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
    let rel = (lambda - exact).abs() / exact;
    check(rel <= 1e-8, format!("λ_min = {lambda:.12}, exact {exact:.12}, relative error {rel:.1e}"))
}

fn c7_discrete_gradient() -> Outcome {
    let d = dom(16);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let variants = [
        ("berger", berger()),
        (
            "berger-buckled",
            NonlinearitySpec::Berger {
                tension: -5.0,
                gamma: 2.0,
            },
        ),
        (
            "scalar",
            NonlinearitySpec::Scalar {
                f1: CubicLaw { kappa: 1.0, c: -2.0 },
                f2: CubicLaw { kappa: 3.0, c: 0.5 },
            },
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for (_, spec) in &variants {
        for _ in 0..1000 {
            let a0 = 10f64.powf(rng.gen_range(-2.0..0.5));
            let a1 = 10f64.powf(rng.gen_range(-2.0..0.5));
            let u0 = random_smooth_clamped(&d, rng.gen(), 5).scale(a0);
            let u1 = random_smooth_clamped(&d, rng.gen(), 5).scale(a1);
            let g = discrete_gradient_force(&d, &u0, &u1, spec).map_err(|e| e.to_string())?;
            // Restoring force −G against the increment.
            let lhs = inner_l2(&d, &g.scale(-1.0), &u1.sub(&u0), Region::Omega).map_err(|e| e.to_string())?;
            let p0 = potential(&d, &state(&d, u0), spec);
            let p1 = potential(&d, &state(&d, u1), spec);
            let scale = lhs.abs().max(p0.abs()).max(p1.abs());
            worst = worst.max((lhs + (p1 - p0)).abs() / scale);
            pairs += 1;
        }
    }
    check(worst <= 1e-12, format!("{pairs} pairs over {} variants, max relative defect {worst:.1e}", variants.len()))
}

fn state(d: &Domain, u: Field) -> State {
    State {
        u,
        ..State::zero(d)
    }
}

fn c8_potential_contract() -> Outcome {
    let d = dom(16);
    let specs = [
        NonlinearitySpec::Berger {
            tension: -3.0,
            gamma: 0.5,
        },
        NonlinearitySpec::Scalar {
            f1: CubicLaw { kappa: 1.0, c: -2.0 },
            f2: CubicLaw { kappa: 2.0, c: -1.0 },
        },
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    let base = random_smooth_clamped(&d, 11, 4).scale(0.4);
    let vel = random_smooth_clamped(&d, 12, 4);
    let t = 0.3;
    let path = |t: f64| base.add(&vel.scale(t + 0.5 * t * t));
    let ut = vel.scale(1.0 + t);
    for spec in &specs {
        let f = force(&d, &state(&d, path(t)), spec);
        let power = inner_l2(&d, &f, &ut, Region::Omega).map_err(|e| e.to_string())?;
        let fd = |tau: f64| {
            (potential(&d, &state(&d, path(t + tau)), spec) - potential(&d, &state(&d, path(t - tau)), spec))
                / (2.0 * tau)
        };
        let (d1, d2, d3) = (fd(4e-2), fd(2e-2), fd(1e-2));
        let order = ((d1 - power).abs() / (d2 - power).abs()).log2();
        // Richardson: the extrapolated quotients agree with the power far below the raw error.
        let r1 = (4.0 * d2 - d1) / 3.0;
        let r2 = (4.0 * d3 - d2) / 3.0;
        let raw = (d3 - power).abs();
        let extrap = (r2 - power).abs();
        let ok_here = (order - 2.0).abs() < 0.2 && extrap < 0.05 * raw && (r1 - power).abs() > extrap;
        ok &= ok_here;
        notes.push(format!("order {order:.3}, raw {raw:.1e}, extrapolated {extrap:.1e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = 0;
    let mut closest = f64::INFINITY;
    for spec in &specs {
        let bound = spec.potential_lower_bound(&d);
        for _ in 0..1000 {
            let amp = 10f64.powf(rng.gen_range(-2.0..1.0));
            let u = random_smooth_clamped(&d, rng.gen(), rng.gen_range(1..6)).scale(amp);
            let pi = potential(&d, &state(&d, u), spec);
            closest = closest.min(pi - bound);
            if pi < bound {
                violations += 1;
            }
        }
    }
    ok &= violations == 0;
    notes.push(format!("lower bound violations {violations} of 2000 (closest approach {closest:.2e})"));
    check(ok, notes.join("; "))
}

fn running_max_ratio(n: usize) -> Result<f64, String> {
    let d = dom(n);
    let p = params(NonlinearitySpec::linear());
    let scheme = SchemeConfig::for_domain(&d);
    let st = Stepper::new(&d, &p, &scheme).map_err(|e| e.to_string())?;
    let obs = Observer::new(&d, &p, &DiagConfig::default()).map_err(|e| e.to_string())?;
    let s0 = initial_state(&d, InitialKind::Random, 1.0, 3);
    let mut rows: Vec<thermoplate::ObservableRow> = Vec::new();
    let opts = SimOptions {
        stride: n / 8,
        keep_states: false,
    };
    simulate(&st, s0, 2.0, &opts, Some(&obs), &mut [&mut rows]).map_err(|e| e.to_string())?;
    Ok(rows.iter().map(|r| r.ratio).fold(0.0, f64::max))
}

fn c9_multiplier_ratio() -> Outcome {
    let m32 = running_max_ratio(32)?;
    let m64 = running_max_ratio(64)?;
    let change = (m64 / m32).max(m32 / m64);
    check(
        m32.is_finite() && m64.is_finite() && change < 2.0,
        format!("max |R|/E: n=32 {m32:.4}, n=64 {m64:.4}, factor {change:.3}"),
    )
}

fn c10_difference_balance() -> Outcome {
    let cfg = parse_config("domain.n_cells = 32\nrun.initial = random\nrun.amplitude = 0.2\n")
        .map_err(|e| e.to_string())?
        .config;
    let d = dom(32);
    let st = Stepper::new(&d, &cfg.params, &cfg.scheme).map_err(|e| e.to_string())?;
    let obs = Observer::new(&d, &cfg.params, &cfg.diag).map_err(|e| e.to_string())?;
    let (a, b) = difference_pair(&cfg, &d);
    let out = difference_run(&st, &obs, a, b, 1000.0 * cfg.scheme.dt, 100).map_err(|e| e.to_string())?;
    let bound = 1e-6 * out.initial_energy;
    check(
        out.steps == 1000 && out.cumulative_balance.abs() <= bound,
        format!(
            "Berger, n=32, {} steps: |Σ balance| = {:.3e}, bound {bound:.3e}; E(d) {:.3e} -> {:.3e}",
            out.steps,
            out.cumulative_balance.abs(),
            out.initial_energy,
            out.final_energy
        ),
    )
}

fn c11_decay() -> Outcome {
    let parsed = parse_config("domain.n_cells = 64\nrun.experiment = decay\nrun.initial = bump\n")
        .map_err(|e| e.to_string())?;
    let report = run_experiment(&parsed).map_err(|e| e.to_string())?;
    let get = |k: &str| {
        report
            .summary
            .iter()
            .find(|(a, _)| a == k)
            .map(|(_, v)| v.clone())
            .unwrap_or_default()
    };
    let mono = report
        .checks
        .iter()
        .find(|c| c.name == "lyapunov-monotone")
        .ok_or("no monotonicity check")?;
    let ratio: f64 = get("energy_ratio").parse().unwrap_or(f64::NAN);
    check(
        mono.passed,
        format!(
            "{}; reported E(T)/E(0) = {ratio:.4} at T = {:.3} ({}), t_half = {}",
            mono.detail,
            get("t_final").parse::<f64>().unwrap_or(f64::NAN),
            if ratio < 0.5 { "below one half" } else { "not below one half" },
            get("t_half")
        ),
    )
}

fn c12_determinism() -> Outcome {
    let base = std::env::temp_dir().join(format!("thermoplate-determinism-{}", std::process::id()));
    let configs = [
        "domain.n_cells = 16\nrun.experiment = simulate\nrun.initial = random\nrun.t_max = 0.5\n",
        "domain.n_cells = 16\nrun.experiment = difference\nrun.initial = random\nrun.amplitude = 0.1\nrun.t_max = 0.5\n",
        "domain.n_cells = 16\nrun.experiment = probe\nrun.t_max = 0.25\n",
    ];
    let mut compared = 0;
    for (i, text) in configs.iter().enumerate() {
        let parsed = parse_config(text).map_err(|e| e.to_string())?;
        let mut outputs: Vec<Vec<(PathBuf, Vec<u8>)>> = Vec::new();
        for rep in 0..2 {
            let dir = base.join(format!("{i}-{rep}"));
            let report = run_experiment(&parsed).map_err(|e| e.to_string())?;
            let paths = write_report(&report, &dir).map_err(|e| e.to_string())?;
            outputs.push(
                paths
                    .into_iter()
                    .map(|p| {
                        let bytes = fs::read(&p).unwrap();
                        (PathBuf::from(p.file_name().unwrap()), bytes)
                    })
                    .collect(),
            );
        }
        if outputs[0] != outputs[1] {
            let _ = fs::remove_dir_all(&base);
            return Err(format!("config {i}: outputs differ between runs"));
        }
        compared += outputs[0].len();
    }
    let _ = fs::remove_dir_all(&base);
    check(true, format!("{compared} files byte-identical across repeated runs of 3 experiments"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("discrete energy equality, linear", c1_linear_energy_equality),
        ("discrete energy equality, nonlinear", c2_nonlinear_energy_equality),
        ("Lyapunov monotonicity", c3_contraction),
        ("isothermal energy conservation", c4_isothermal_control),
        ("operator correctness", c5_operators),
        ("Dirichlet inverse eigenvalue", c6_dirichlet_eigenvalue),
        ("discrete-gradient exactness", c7_discrete_gradient),
        ("potential contract", c8_potential_contract),
        ("multiplier ratio stability", c9_multiplier_ratio),
        ("difference energy balance", c10_difference_balance),
        ("decay monotonicity", c11_decay),
        ("determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = f();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
