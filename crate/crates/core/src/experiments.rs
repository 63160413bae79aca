//! Scripted experiments and the report files they produce.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{Experiment, ParsedConfig, RunConfig};
use crate::diagnostics::{
    difference_balance_step, energy, format_csv, ObservableRow, Observer,
};
use crate::domain::{build_domain, Domain};
use crate::error::{Error, Result};
use crate::fields::{h2t_norm, inner_l2, Field, PhysParams, Region, State};
use crate::initial::{initial_state, random_smooth_clamped, random_smooth_theta, InitialKind};
use crate::nonlinearity::{self, CubicLaw, NonlinearitySpec};
use crate::operators::{coupling, coupling_adjoint, thermal_form_apply, Stiffness};
use crate::stepper::{
    simulate, simulate_with, stationary_solve, step_count, SimOptions, StepRecord, Stepper,
};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "THERMOPLATE_OUTPUT_ROOT";

/// Outcome of one named check inside a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Asserted checks decide the run status; the rest are reported data.
    pub asserted: bool,
    pub detail: String,
}

impl Check {
    fn asserted(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            asserted: true,
            detail,
        }
    }

    fn reported(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            asserted: false,
            detail,
        }
    }

    /// `PASS`, `FAIL`, or `NOTE`/`NOTE-FAIL` for reported checks.
    pub fn status(&self) -> &'static str {
        match (self.asserted, self.passed) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, true) => "NOTE",
            (false, false) => "NOTE-FAIL",
        }
    }
}

/// A CSV file of a report; `name` is empty for the main table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub content: String,
}

impl Table {
    fn from_rows(name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Self {
        let mut content = String::from(header);
        content.push('\n');
        for r in rows {
            content.push_str(&r);
            content.push('\n');
        }
        Table {
            name: name.into(),
            content,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config: RunConfig,
    pub defaulted: Vec<String>,
    pub summary: Vec<(String, String)>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl Report {
    fn new(parsed: &ParsedConfig) -> Self {
        Report {
            config: parsed.config.clone(),
            defaulted: parsed.defaulted.clone(),
            summary: Vec::new(),
            tables: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    fn note_f64(&mut self, key: &str, value: f64) {
        self.note(key, format!("{value:.16e}"));
    }

    /// Whether every asserted check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.asserted || c.passed)
    }

    /// File stem `<experiment>-<first 16 hex digits of the config hash>`.
    pub fn stem(&self) -> String {
        format!("{}-{}", self.config.experiment.name(), &self.config.hash()[..16])
    }

    /// Flat text summary: metadata, defaulted keys, results and checks.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("experiment = {}\n", self.config.experiment.name()));
        s.push_str(&format!("config_hash = {}\n", self.config.hash()));
        s.push_str("\n[config]\n");
        s.push_str(&self.config.serialize());
        s.push_str("\n[defaulted]\n");
        for k in &self.defaulted {
            s.push_str(k);
            s.push('\n');
        }
        s.push_str("\n[results]\n");
        for (k, v) in &self.summary {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str("\n[checks]\n");
        for c in &self.checks {
            s.push_str(&format!("{} {}: {}\n", c.status(), c.name, c.detail));
        }
        s
    }
}

/// Directory a config writes to: `run.output_dir`, below the output root
/// (environment override or the working directory) when relative.
pub fn output_dir(config: &RunConfig) -> PathBuf {
    let dir = Path::new(&config.output_dir);
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => Path::new(&root).join(dir),
        None => dir.to_path_buf(),
    }
}

/// Writes the summary and every table into `dir`; returns the written paths.
pub fn write_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = report.stem();
    let mut paths = Vec::new();
    for t in &report.tables {
        let name = if t.name.is_empty() {
            format!("{stem}.csv")
        } else {
            format!("{stem}-{}.csv", t.name)
        };
        let p = dir.join(name);
        fs::write(&p, &t.content)?;
        paths.push(p);
    }
    let p = dir.join(format!("{stem}.txt"));
    fs::write(&p, report.summary_text())?;
    paths.push(p);
    Ok(paths)
}

/// Runs the experiment selected by the configuration.
pub fn run_experiment(parsed: &ParsedConfig) -> Result<Report> {
    let v = parsed.config.violations();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    let mut report = Report::new(parsed);
    match parsed.config.experiment {
        Experiment::Simulate => run_simulate(&mut report)?,
        Experiment::Decay => run_decay(&mut report)?,
        Experiment::Difference => run_difference(&mut report)?,
        Experiment::Probe => run_probe(&mut report)?,
        Experiment::Stationary => run_stationary(&mut report)?,
        Experiment::Verify => run_verify(&mut report)?,
    }
    Ok(report)
}

struct Setup {
    domain: Domain,
    stepper: Stepper,
    observer: Observer,
    initial: State,
}

fn setup(c: &RunConfig) -> Result<Setup> {
    let domain = build_domain(&c.domain)?;
    let stepper = Stepper::new(&domain, &c.params, &c.scheme)?;
    let observer = Observer::new(&domain, &c.params, &c.diag)?;
    let initial = initial_state(&domain, c.initial, c.amplitude, c.seed);
    Ok(Setup {
        domain,
        stepper,
        observer,
        initial,
    })
}

/// Largest admissible per-step energy increase relative to `|𝓔|`.
pub fn step_increase_bound(c: &RunConfig) -> f64 {
    10.0 * (c.scheme.tol_inner + c.scheme.tol_picard)
}

/// Steps where `𝓔` grew by more than `factor·|𝓔(old)|`.
pub fn monotone_violations(initial_lyapunov: f64, steps: &[StepRecord], factor: f64) -> usize {
    let mut prev = initial_lyapunov;
    let mut count = 0;
    for r in steps {
        if r.lyapunov - prev > factor * prev.abs() {
            count += 1;
        }
        prev = r.lyapunov;
    }
    count
}

/// Admissible cumulative identity residual: `10⁻⁸·𝓔(0)` per thousand steps.
fn balance_bound(e0: f64, steps: usize) -> f64 {
    1e-8 * e0.abs() * (steps.max(1) as f64 / 1000.0)
}

fn push_common_checks(report: &mut Report, e0: f64, steps: &[StepRecord]) {
    let cum: f64 = steps.iter().map(|r| r.residual).sum();
    let bound = balance_bound(e0, steps.len());
    report.checks.push(Check::asserted(
        "energy-balance",
        cum.abs() <= bound,
        format!("cumulative residual {cum:.3e}, bound {bound:.3e}"),
    ));
    let factor = step_increase_bound(&report.config);
    let viol = monotone_violations(e0, steps, factor);
    report.checks.push(Check::asserted(
        "lyapunov-monotone",
        viol == 0,
        format!("{viol} of {} steps increased the Lyapunov function beyond {factor:.1e} relative", steps.len()),
    ));
    let min_d = steps.iter().map(|r| r.dissipation).fold(f64::INFINITY, f64::min);
    report.checks.push(Check::asserted(
        "dissipation-sign",
        steps.is_empty() || min_d >= 0.0,
        format!("minimum dissipation {}", if steps.is_empty() { 0.0 } else { min_d }),
    ));
}

fn observables_table(rows: &[ObservableRow]) -> Table {
    Table::from_rows("", ObservableRow::HEADER, rows.iter().map(|r| r.csv_line()))
}

fn run_simulate(report: &mut Report) -> Result<()> {
    let c = report.config.clone();
    let s = setup(&c)?;
    let mut rows: Vec<ObservableRow> = Vec::new();
    let opts = SimOptions {
        stride: c.stride,
        keep_states: false,
    };
    let traj = simulate(&s.stepper, s.initial, c.t_max, &opts, Some(&s.observer), &mut [&mut rows])?;
    report.note("steps", traj.steps.len());
    report.note_f64("t_final", traj.final_time());
    report.note_f64("lyapunov_initial", traj.initial_lyapunov);
    let last = traj.steps.last().map(|r| r.lyapunov).unwrap_or(traj.initial_lyapunov);
    report.note_f64("lyapunov_final", last);
    report.note_f64("cumulative_residual", traj.cumulative_residual());
    let max_r = traj.steps.iter().fold(0.0f64, |m, r| m.max(r.residual.abs()));
    report.note_f64("max_step_residual", max_r);
    let max_ratio = rows.iter().fold(0.0f64, |m, r| m.max(r.ratio));
    report.note_f64("max_ratio_r_over_e", max_ratio);
    push_common_checks(report, traj.initial_lyapunov, &traj.steps);
    report.tables.push(observables_table(&rows));
    Ok(())
}

/// Metrics of one decay run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayOutcome {
    pub rows: Vec<ObservableRow>,
    pub steps: Vec<StepRecord>,
    pub initial: State,
    pub final_state: State,
    pub initial_energy: f64,
    pub initial_lyapunov: f64,
    /// Whether the flatness criterion fired before the horizon.
    pub flattened: bool,
    /// First step time with `E ≤ E(0)/2`.
    pub t_half: Option<f64>,
}

impl DecayOutcome {
    pub fn final_time(&self) -> f64 {
        self.steps.last().map(|r| r.t).unwrap_or(0.0)
    }
}

/// Runs from the configured initial data until `𝓔` flattens (when
/// `stop_when_flat`) or `t_max` is reached.
pub fn decay_run(c: &RunConfig, stop_when_flat: bool) -> Result<DecayOutcome> {
    let s = setup(c)?;
    let d = &s.domain;
    let p = &c.params;
    let e0 = energy(d, &s.initial, p);
    let window = ((c.decay.window / c.scheme.dt).round() as usize).max(1);
    let horizon = if e0.lyapunov == 0.0 && e0.e == 0.0 {
        0.0
    } else {
        c.t_max
    };
    let mut history = vec![e0.lyapunov];
    let mut quadratic = vec![e0.e];
    let mut flattened = horizon == 0.0;
    let tol = c.decay.flat_tol * e0.lyapunov.abs();
    let mut rows: Vec<ObservableRow> = Vec::new();
    let opts = SimOptions {
        stride: c.stride,
        keep_states: false,
    };
    let traj = simulate_with(
        &s.stepper,
        s.initial.clone(),
        horizon,
        &opts,
        Some(&s.observer),
        &mut [&mut rows],
        |out, k| {
            let e = energy(d, &out.state, p);
            history.push(e.lyapunov);
            quadratic.push(e.e);
            if k >= window && history[k - window] - history[k] <= tol {
                flattened = true;
                return Ok(stop_when_flat);
            }
            Ok(false)
        },
    )?;
    let dt = c.scheme.dt;
    let t_half = quadratic
        .iter()
        .position(|&e| e <= 0.5 * e0.e)
        .filter(|_| e0.e > 0.0)
        .map(|k| k as f64 * dt);
    let final_state = traj.samples.last().map(|(_, s)| s.clone()).unwrap_or_else(|| s.initial.clone());
    Ok(DecayOutcome {
        rows,
        steps: traj.steps,
        initial: s.initial,
        final_state,
        initial_energy: e0.e,
        initial_lyapunov: e0.lyapunov,
        flattened,
        t_half,
    })
}

fn decay_precondition(p: &PhysParams) -> Result<()> {
    match &p.nonlinearity {
        NonlinearitySpec::Berger { tension, .. } if *tension < 0.0 => Err(Error::config(format!(
            "decay needs params.tension >= 0, found {tension}"
        ))),
        NonlinearitySpec::Scalar { f2, .. } if !f2.is_zero() => Err(Error::config(
            "decay with a scalar force needs f2 = 0 (params.f2_kappa = params.f2_c = 0)",
        )),
        _ => Ok(()),
    }
}

fn run_decay(report: &mut Report) -> Result<()> {
    let c = report.config.clone();
    decay_precondition(&c.params)?;
    let out = decay_run(&c, true)?;
    let d = build_domain(&c.domain)?;
    let e_final = energy(&d, &out.final_state, &c.params);
    report.note(
        "decay",
        if out.flattened {
            "flattened"
        } else {
            "no decay detected"
        },
    );
    report.note("steps", out.steps.len());
    report.note_f64("t_final", out.final_time());
    report.note_f64("energy_initial", out.initial_energy);
    report.note_f64("energy_final", e_final.e);
    let ratio = if out.initial_energy > 0.0 {
        e_final.e / out.initial_energy
    } else {
        0.0
    };
    report.note_f64("energy_ratio", ratio);
    report.note_f64("lyapunov_initial", out.initial_lyapunov);
    report.note_f64("lyapunov_final", e_final.lyapunov);
    report.note(
        "t_half",
        out.t_half.map(|t| format!("{t:.16e}")).unwrap_or_else(|| "not reached".into()),
    );
    match stationary_solve(&d, &c.params, &out.final_state.u) {
        Ok(root) => {
            let rest = State {
                u: root.u.clone(),
                ut: Field::zeros(&d, Region::Omega),
                theta: Field::zeros(&d, Region::Omega1),
            };
            let diff = out.final_state.diff(&rest);
            let de = energy(&d, &diff, &c.params.clone().linear()).e;
            report.note_f64("distance_to_stationary_energy", (2.0 * de).sqrt());
            report.note_f64(
                "distance_to_stationary_l2",
                inner_l2(&d, &diff.u, &diff.u, Region::Omega)?.sqrt(),
            );
            report.note_f64("stationary_residual", root.residual);
        }
        Err(e) => report.note("distance_to_stationary", format!("unavailable: {e}")),
    }
    push_common_checks(report, out.initial_lyapunov, &out.steps);
    report.checks.push(Check::reported(
        "half-energy",
        ratio < 0.5,
        format!("E(T)/E(0) = {ratio:.6e}"),
    ));
    report.tables.push(observables_table(&out.rows));
    Ok(())
}

/// Fit of `ln E = a + b t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    /// `−b`.
    pub rate: f64,
    /// `exp(a)` divided by the first energy.
    pub constant: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares fit of `log E(t)` on the samples after dropping the first
/// `discard` fraction; `None` with fewer than three positive samples.
pub fn fit_exponential(samples: &[(f64, f64)], discard: f64) -> Option<ExpFit> {
    let first = samples.first()?.1;
    let skip = (samples.len() as f64 * discard).floor() as usize;
    let pts: Vec<(f64, f64)> = samples[skip..]
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 3 || !(first > 0.0) {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let a = my - b * mt;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(ExpFit {
        rate: -b,
        constant: a.exp() / first,
        r2,
        points: pts.len(),
    })
}

/// Result of co-simulating two trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceOutcome {
    /// `(t, E(d), negnorm(d), l2_low(d), cumulative balance)` per sample.
    pub rows: Vec<[f64; 5]>,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Sum of the per-step difference balances.
    pub cumulative_balance: f64,
    pub max_step_balance: f64,
    pub steps: usize,
}

pub const DIFFERENCE_HEADER: &str = "t,energy_d,negnorm_d,l2_low_d,balance";

/// Advances `s1` and `s2` side by side, tracking the difference observables
/// and the per-step difference energy balance.
pub fn difference_run(
    stepper: &Stepper,
    observer: &Observer,
    s1: State,
    s2: State,
    t_final: f64,
    stride: usize,
) -> Result<DifferenceOutcome> {
    let d = stepper.domain();
    let p = stepper.params();
    let dt = stepper.scheme().dt;
    let n_steps = step_count(t_final, dt);
    let obs0 = observer.difference(&s1, &s2)?;
    let mut rows = vec![[0.0, obs0.energy, obs0.negnorm, obs0.l2_low, 0.0]];
    let (mut a, mut b) = (s1, s2);
    let mut cum = 0.0;
    let mut max_step = 0.0f64;
    let mut last_energy = obs0.energy;
    for k in 1..=n_steps {
        let t0 = (k - 1) as f64 * dt;
        let (oa, ob) = rayon::join(|| stepper.step(&a), || stepper.step(&b));
        let wrap = |e| Error::Step {
            t: t0,
            source: Box::new(e),
        };
        let (oa, ob) = (oa.map_err(wrap)?, ob.map_err(wrap)?);
        let r = difference_balance_step(d, p, dt, (&a, &b), (&oa, &ob));
        cum += r;
        max_step = max_step.max(r.abs());
        a = oa.state;
        b = ob.state;
        if k % stride == 0 || k == n_steps {
            let o = observer.difference(&a, &b)?;
            last_energy = o.energy;
            rows.push([k as f64 * dt, o.energy, o.negnorm, o.l2_low, cum]);
        }
    }
    Ok(DifferenceOutcome {
        rows,
        initial_energy: obs0.energy,
        final_energy: last_energy,
        cumulative_balance: cum,
        max_step_balance: max_step,
        steps: n_steps,
    })
}

/// The configured initial state and a second one offset by a random smooth
/// state carrying `perturbation²` times its energy.
pub fn difference_pair(c: &RunConfig, d: &Domain) -> (State, State) {
    let s1 = initial_state(d, c.initial, c.amplitude, c.seed);
    let offset = initial_state(d, InitialKind::Random, 1.0, c.seed.wrapping_add(1));
    let lin = c.params.clone().linear();
    let e1 = energy(d, &s1, &lin).e;
    let eo = energy(d, &offset, &lin).e;
    let target = c.difference.perturbation.powi(2) * if e1 > 0.0 { e1 } else { 1.0 };
    let scale = if eo > 0.0 { (target / eo).sqrt() } else { 0.0 };
    let s2 = State {
        u: s1.u.add(&offset.u.scale(scale)),
        ut: s1.ut.add(&offset.ut.scale(scale)),
        theta: s1.theta.add(&offset.theta.scale(scale)),
    };
    (s1, s2)
}

fn run_difference(report: &mut Report) -> Result<()> {
    let c = report.config.clone();
    let s = setup(&c)?;
    let (s1, s2) = difference_pair(&c, &s.domain);
    let r2 = c.difference.radius.powi(2);
    for (name, st) in [("first", &s1), ("second", &s2)] {
        let e = energy(&s.domain, st, &c.params).lyapunov;
        if e > r2 {
            return Err(Error::config(format!(
                "{name} initial state has Lyapunov value {e:.6e} above difference.radius² = {r2:.6e}"
            )));
        }
    }
    let out = difference_run(&s.stepper, &s.observer, s1, s2, c.t_max, c.stride)?;
    report.note("steps", out.steps);
    report.note_f64("energy_d_initial", out.initial_energy);
    report.note_f64("energy_d_final", out.final_energy);
    report.note_f64("cumulative_balance", out.cumulative_balance);
    report.note_f64("max_step_balance", out.max_step_balance);
    let samples: Vec<(f64, f64)> = out.rows.iter().map(|r| (r[0], r[1])).collect();
    let fit = fit_exponential(&samples, c.difference.discard);
    match fit {
        Some(f) => {
            report.note_f64("omega_r", f.rate);
            report.note_f64("c_r", f.constant);
            report.note_f64("fit_r2", f.r2);
            report.note("fit_points", f.points);
        }
        None => report.note("fit", "not enough positive samples"),
    }
    let bound = 1e-6 * out.initial_energy;
    report.checks.push(Check::asserted(
        "difference-balance",
        out.cumulative_balance.abs() <= bound,
        format!("cumulative {:.3e}, bound {bound:.3e}", out.cumulative_balance),
    ));
    report.checks.push(Check::reported(
        "difference-contraction",
        out.final_energy < out.initial_energy || out.initial_energy == 0.0,
        format!("E(d)(T) = {:.6e}, E(d)(0) = {:.6e}", out.final_energy, out.initial_energy),
    ));
    if let Some(f) = fit {
        report.checks.push(Check::reported(
            "fit-quality",
            f.r2 >= c.difference.min_r2,
            format!("r² = {:.6}, threshold {}", f.r2, c.difference.min_r2),
        ));
    }
    report.tables.push(Table::from_rows(
        "",
        DIFFERENCE_HEADER,
        out.rows.iter().map(|r| format_csv(r)),
    ));
    Ok(())
}

/// Metrics of one probe run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRun {
    pub value: f64,
    pub energy_ratio: f64,
    pub t_half: Option<f64>,
    pub min_dissipation: f64,
    pub monotone_violations: usize,
    pub curve: Vec<[f64; 4]>,
}

/// Runs the decay setup for every probe value, in parallel, over the full horizon.
pub fn probe_runs(c: &RunConfig) -> Result<Vec<ProbeRun>> {
    let factor = step_increase_bound(c);
    c.probe
        .values
        .par_iter()
        .map(|&v| {
            let cv = c.with_parameter(&c.probe.parameter, v)?;
            let out = decay_run(&cv, false)?;
            let e_final = out.rows.last().map(|r| r.energy.e).unwrap_or(out.initial_energy);
            let energy_ratio = if out.initial_energy > 0.0 {
                e_final / out.initial_energy
            } else {
                0.0
            };
            let min_dissipation = out
                .steps
                .iter()
                .map(|r| r.dissipation)
                .fold(f64::INFINITY, f64::min);
            Ok(ProbeRun {
                value: v,
                energy_ratio,
                t_half: out.t_half,
                min_dissipation: if out.steps.is_empty() { 0.0 } else { min_dissipation },
                monotone_violations: monotone_violations(out.initial_lyapunov, &out.steps, factor),
                curve: out
                    .rows
                    .iter()
                    .map(|r| [r.t, r.energy.lyapunov, r.energy.e, r.dissipation])
                    .collect(),
            })
        })
        .collect()
}

/// Whether `t_half` is non-decreasing as the swept value decreases;
/// unreached half-energy counts as infinitely late.
pub fn half_time_trend(runs: &[ProbeRun]) -> bool {
    let mut sorted: Vec<&ProbeRun> = runs.iter().collect();
    sorted.sort_by(|a, b| b.value.total_cmp(&a.value));
    sorted
        .windows(2)
        .all(|w| w[1].t_half.unwrap_or(f64::INFINITY) >= w[0].t_half.unwrap_or(f64::INFINITY))
}

fn run_probe(report: &mut Report) -> Result<()> {
    let c = report.config.clone();
    let runs = probe_runs(&c)?;
    let key = c.probe.parameter.clone();
    report.note("parameter", &key);
    report.note("runs", runs.len());
    let min_d = runs.iter().map(|r| r.min_dissipation).fold(f64::INFINITY, f64::min);
    report.checks.push(Check::asserted(
        "dissipation-sign",
        min_d >= 0.0,
        format!("minimum dissipation over all runs {min_d:.3e}"),
    ));
    let viol: usize = runs.iter().map(|r| r.monotone_violations).sum();
    report.checks.push(Check::asserted(
        "lyapunov-monotone",
        viol == 0,
        format!("{viol} violating steps over all runs"),
    ));
    if key == "params.mu" {
        report.checks.push(Check::reported(
            "half-time-trend",
            half_time_trend(&runs),
            "time to half energy non-decreasing as mu decreases".into(),
        ));
    }
    let fmt_half = |r: &ProbeRun| r.t_half.map(|t| format!("{t:.16e}")).unwrap_or_else(|| "inf".into());
    report.tables.push(Table::from_rows(
        "",
        "value,energy_ratio,t_half,min_dissipation,monotone_violations",
        runs.iter().map(|r| {
            format!(
                "{},{},{},{}",
                format_csv(&[r.value, r.energy_ratio]),
                fmt_half(r),
                format_csv(&[r.min_dissipation]),
                r.monotone_violations
            )
        }),
    ));
    report.tables.push(Table::from_rows(
        "curves",
        "value,t,lyapunov,energy,dissipation",
        runs.iter().flat_map(|r| {
            r.curve
                .iter()
                .map(move |p| format_csv(&[r.value, p[0], p[1], p[2], p[3]]))
        }),
    ));
    Ok(())
}

fn run_stationary(report: &mut Report) -> Result<()> {
    let c = report.config.clone();
    let d = build_domain(&c.domain)?;
    let guess = initial_state(&d, c.initial, c.amplitude, c.seed).u;
    let out = stationary_solve(&d, &c.params, &guess)?;
    let l2 = inner_l2(&d, &out.u, &out.u, Region::Omega)?.sqrt();
    report.note("iterations", out.iterations);
    report.note_f64("residual", out.residual);
    report.note_f64("max_abs", out.u.max_abs());
    report.note_f64("norm_l2", l2);
    report.note_f64("norm_h2", h2t_norm(&d, &out.u, &c.params));
    let pot = nonlinearity::potential_raw(&d, out.u.values(), &c.params.nonlinearity);
    report.note_f64("potential", pot);
    let bound = 1e-9 * (1.0 + l2);
    report.checks.push(Check::asserted(
        "stationary-residual",
        out.residual <= bound,
        format!("residual {:.3e}, bound {bound:.3e}", out.residual),
    ));
    let mut buf = Vec::new();
    out.u.write_csv(&d, &mut buf)?;
    report.tables.push(Table {
        name: String::new(),
        content: String::from_utf8(buf).expect("ascii csv"),
    });
    Ok(())
}

/// One invariant suite of the verify experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Operator symmetry, coupling cancellation, energy identity and
/// discrete-gradient suites on the configured grid and parameters.
pub fn verify_suites(c: &RunConfig) -> Result<Vec<SuiteResult>> {
    let d = build_domain(&c.domain)?;
    let p = &c.params;
    let mut out = Vec::new();

    // Stiffness and thermal form: symmetry and positivity.
    let stiff = Stiffness::new(&d, p);
    let mut sym: f64 = 0.0;
    let mut pos_ok = true;
    let (mut ta, mut tb) = (vec![0.0; d.len()], vec![0.0; d.len()]);
    for seed in 0..20u64 {
        let a = random_smooth_clamped(&d, seed, 4);
        let b = random_smooth_clamped(&d, seed + 100, 4);
        let ab = stiff.form(a.values(), b.values());
        let ba = stiff.form(b.values(), a.values());
        let aa = stiff.form(a.values(), a.values());
        let bb = stiff.form(b.values(), b.values());
        sym = sym.max(rel(ab, ba, (aa * bb).sqrt()));
        pos_ok &= aa > 0.0;
        let x = random_smooth_theta(&d, seed, 4);
        let y = random_smooth_theta(&d, seed + 100, 4);
        thermal_form_apply(&d, p.lambda, x.values(), &mut ta);
        thermal_form_apply(&d, p.lambda, y.values(), &mut tb);
        let xy = euclid(&ta, y.values());
        let yx = euclid(&tb, x.values());
        let xx = euclid(&ta, x.values());
        let yy = euclid(&tb, y.values());
        sym = sym.max(rel(xy, yx, (xx * yy).sqrt()));
        pos_ok &= xx > 0.0;
    }
    out.push(SuiteResult {
        name: "operator-symmetry",
        measured: if pos_ok { sym } else { f64::INFINITY },
        tolerance: 1e-12,
    });

    // ⟨Cθ, uₜ⟩ + ⟨C*uₜ, θ⟩ = 0.
    let mut cancel: f64 = 0.0;
    let mut cp = p.clone();
    if cp.mu == 0.0 {
        cp.mu = 1.0;
    }
    for seed in 0..20u64 {
        let th = random_smooth_theta(&d, seed, 4);
        let ut = random_smooth_clamped(&d, seed + 7, 4);
        let ct = coupling(&d, &th, &cp);
        let cs = coupling_adjoint(&d, &ut, &cp);
        let x = inner_l2(&d, &ct, &ut, Region::Omega)?;
        let y = inner_l2(&d, &cs, &th, Region::Omega1)?;
        cancel = cancel.max(rel(x, -y, x.abs().max(y.abs())));
    }
    out.push(SuiteResult {
        name: "coupling-cancellation",
        measured: cancel,
        tolerance: 1e-12,
    });

    // Short run of the configured problem.
    let stepper = Stepper::new(&d, p, &c.scheme)?;
    let s0 = initial_state(&d, InitialKind::Random, 0.5, c.seed);
    let steps = 40;
    let opts = SimOptions {
        stride: steps,
        keep_states: false,
    };
    let traj = simulate(&stepper, s0, steps as f64 * c.scheme.dt, &opts, None, &mut [])?;
    let e0 = traj.initial_lyapunov.abs().max(f64::MIN_POSITIVE);
    out.push(SuiteResult {
        name: "energy-identity",
        measured: traj.cumulative_residual().abs() / e0,
        tolerance: 1e-8 * (traj.steps.len() as f64 / 1000.0).max(1e-3),
    });

    // ⟨G, u¹ − u⁰⟩ = Π(u¹) − Π(u⁰) with the force-side sign.
    let specs = [
        p.nonlinearity.clone(),
        NonlinearitySpec::Berger {
            tension: 1.0,
            gamma: 1.0,
        },
        NonlinearitySpec::Scalar {
            f1: CubicLaw { kappa: 1.0, c: 0.0 },
            f2: CubicLaw { kappa: 2.0, c: -1.0 },
        },
    ];
    let mut dg: f64 = 0.0;
    for spec in &specs {
        for seed in 0..50u64 {
            let u0 = random_smooth_clamped(&d, seed, 4).scale(2.0);
            let u1 = random_smooth_clamped(&d, seed + 500, 4).scale(2.0);
            let g = nonlinearity::discrete_gradient_force(&d, &u0, &u1, spec)?;
            let lhs = inner_l2(&d, &g, &u1.sub(&u0), Region::Omega)?;
            let p0 = nonlinearity::potential_raw(&d, u0.values(), spec);
            let p1 = nonlinearity::potential_raw(&d, u1.values(), spec);
            let scale = lhs.abs().max(p0.abs()).max(p1.abs());
            dg = dg.max(rel(lhs, p1 - p0, scale));
        }
    }
    out.push(SuiteResult {
        name: "discrete-gradient",
        measured: dg,
        tolerance: 1e-12,
    });
    Ok(out)
}

fn run_verify(report: &mut Report) -> Result<()> {
    let c = report.config.clone();
    let suites = verify_suites(&c)?;
    for s in &suites {
        report.checks.push(Check::asserted(
            s.name,
            s.passed(),
            format!("measured {:.3e}, tolerance {:.3e}", s.measured, s.tolerance),
        ));
    }
    report.tables.push(Table::from_rows(
        "",
        "suite,passed,measured,tolerance",
        suites.iter().map(|s| {
            format!("{},{},{}", s.name, s.passed(), format_csv(&[s.measured, s.tolerance]))
        }),
    ));
    Ok(())
}
