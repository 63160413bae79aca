//! Flat `section.key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Every key has a default and
//! every defaulted key is reported back so run metadata never hides a value.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::diagnostics::DiagConfig;
use crate::domain::{build_domain, DomainConfig};
use crate::error::{Error, Result};
use crate::fields::PhysParams;
use crate::initial::InitialKind;
use crate::nonlinearity::{CubicLaw, NonlinearitySpec};
use crate::stepper::SchemeConfig;

/// Experiment selected by `run.experiment`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    Decay,
    Difference,
    Probe,
    Stationary,
    Verify,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Simulate,
        Experiment::Decay,
        Experiment::Difference,
        Experiment::Probe,
        Experiment::Stationary,
        Experiment::Verify,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Decay => "decay",
            Experiment::Difference => "difference",
            Experiment::Probe => "probe",
            Experiment::Stationary => "stationary",
            Experiment::Verify => "verify",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// Flatness criterion of the decay experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayConfig {
    /// The run stops once `𝓔` drops by less than `flat_tol·𝓔(0)` over `window`.
    pub flat_tol: f64,
    pub window: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            flat_tol: 1e-6,
            window: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceConfig {
    /// Size of the second initial state's offset, relative to the first in energy.
    pub perturbation: f64,
    /// Both initial states must satisfy `𝓔 ≤ radius²`.
    pub radius: f64,
    /// Fraction of samples dropped before fitting the decay envelope.
    pub discard: f64,
    /// Fit quality reported as acceptable.
    pub min_r2: f64,
}

impl Default for DifferenceConfig {
    fn default() -> Self {
        DifferenceConfig {
            perturbation: 0.1,
            radius: 10.0,
            discard: 0.2,
            min_r2: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// A numeric `params.*` key.
    pub parameter: String,
    pub values: Vec<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            parameter: "params.mu".into(),
            values: vec![1.0, 0.5, 0.25, 0.125],
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub params: PhysParams,
    pub scheme: SchemeConfig,
    pub diag: DiagConfig,
    pub experiment: Experiment,
    pub initial: InitialKind,
    pub amplitude: f64,
    pub seed: u64,
    pub stride: usize,
    pub t_max: f64,
    /// Relative to the output root unless absolute.
    pub output_dir: String,
    pub decay: DecayConfig,
    pub difference: DifferenceConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let domain = DomainConfig::default();
        let scheme = SchemeConfig::for_domain(&build_domain(&domain).expect("default domain"));
        RunConfig {
            domain,
            params: PhysParams::default(),
            scheme,
            diag: DiagConfig::default(),
            experiment: Experiment::Simulate,
            initial: InitialKind::Bump,
            amplitude: 1.0,
            seed: 0,
            stride: 8,
            t_max: 5.0,
            output_dir: "output".into(),
            decay: DecayConfig::default(),
            difference: DifferenceConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

/// Parsed configuration plus the keys that fell back to defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: RunConfig,
    pub defaulted: Vec<String>,
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "run.experiment",
    "run.initial",
    "run.amplitude",
    "run.seed",
    "run.stride",
    "run.t_max",
    "run.output_dir",
    "domain.n_cells",
    "domain.inner_lo",
    "domain.inner_hi",
    "domain.x0",
    "params.rho0",
    "params.rho1",
    "params.rho2",
    "params.beta0",
    "params.beta1",
    "params.beta2",
    "params.mu",
    "params.lambda",
    "params.nonlinearity",
    "params.tension",
    "params.gamma",
    "params.f1_kappa",
    "params.f1_c",
    "params.f2_kappa",
    "params.f2_c",
    "scheme.dt",
    "scheme.tol_inner",
    "scheme.tol_picard",
    "scheme.max_picard",
    "scheme.max_iter",
    "diag.eta",
    "diag.calibration",
    "diag.delta",
    "decay.flat_tol",
    "decay.window",
    "difference.perturbation",
    "difference.radius",
    "difference.discard",
    "difference.min_r2",
    "probe.parameter",
    "probe.values",
];

/// Numeric parameters a probe may sweep.
pub const PROBE_PARAMETERS: &[&str] = &[
    "params.rho0",
    "params.rho1",
    "params.rho2",
    "params.beta0",
    "params.beta1",
    "params.beta2",
    "params.mu",
    "params.lambda",
    "params.tension",
    "params.gamma",
];

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

struct Reader {
    entries: BTreeMap<String, (usize, String)>,
    used: HashSet<String>,
    errors: Vec<String>,
    defaulted: Vec<String>,
}

impl Reader {
    fn take<T>(&mut self, key: &str, default: T, expected: &str, parse: impl Fn(&str) -> Option<T>) -> T {
        self.used.insert(key.to_string());
        match self.entries.get(key) {
            None => {
                self.defaulted.push(key.to_string());
                default
            }
            Some((line, raw)) => match parse(raw) {
                Some(v) => v,
                None => {
                    let at = if *line > 0 { format!("line {line}: ") } else { String::new() };
                    self.errors
                        .push(format!("{at}{key} = {raw:?}: expected {expected}"));
                    default
                }
            },
        }
    }

    fn float(&mut self, key: &str, default: f64) -> f64 {
        self.take(key, default, "a finite number", |s| {
            s.parse::<f64>().ok().filter(|v| v.is_finite())
        })
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        self.take(key, default, "a non-negative integer", |s| s.parse().ok())
    }
}

fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

/// Parses `text` and applies `overrides` (`key = value` pairs that win over
/// the text). Every problem is reported, not just the first.
pub fn parse_config_with(text: &str, overrides: &[(String, String)]) -> Result<ParsedConfig> {
    let mut entries = BTreeMap::new();
    let mut errors = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        match line.split_once('=') {
            None => errors.push(format!("line {lineno}: expected `key = value`, found {line:?}")),
            Some((k, v)) => {
                let k = k.trim().to_string();
                if entries.contains_key(&k) {
                    errors.push(format!("line {lineno}: duplicate key {k}"));
                } else {
                    entries.insert(k, (lineno, v.trim().to_string()));
                }
            }
        }
    }
    for (k, v) in overrides {
        entries.insert(k.trim().to_string(), (0, v.trim().to_string()));
    }
    let mut r = Reader {
        entries,
        used: HashSet::new(),
        errors,
        defaulted: Vec::new(),
    };
    let d = RunConfig::default();

    let experiment = r.take(
        "run.experiment",
        d.experiment,
        "one of simulate|decay|difference|probe|stationary|verify",
        Experiment::parse,
    );
    let initial = r.take(
        "run.initial",
        d.initial,
        "one of zero|bump|kick|spot|random",
        |s| InitialKind::parse(s).ok(),
    );
    let amplitude = r.float("run.amplitude", d.amplitude);
    let seed = r.take("run.seed", d.seed, "a non-negative integer", |s| s.parse().ok());
    let stride = r.count("run.stride", d.stride);
    let t_max = r.float("run.t_max", d.t_max);
    let output_dir = r.take("run.output_dir", d.output_dir.clone(), "a path", |s| {
        (!s.is_empty()).then(|| s.to_string())
    });

    let domain = DomainConfig {
        n_cells: r.count("domain.n_cells", d.domain.n_cells),
        inner_lo: r.float("domain.inner_lo", d.domain.inner_lo),
        inner_hi: r.float("domain.inner_hi", d.domain.inner_hi),
        x0: r.take("domain.x0", d.domain.x0, "two numbers `x,y`", |s| {
            parse_list(s).and_then(|v| <[f64; 2]>::try_from(v).ok())
        }),
    };

    let kind = r.take(
        "params.nonlinearity",
        "berger".to_string(),
        "one of berger|scalar|linear",
        |s| matches!(s, "berger" | "scalar" | "linear").then(|| s.to_string()),
    );
    let nonlinearity = match kind.as_str() {
        "berger" => {
            let (tension, gamma) = match &d.params.nonlinearity {
                NonlinearitySpec::Berger { tension, gamma } => (*tension, *gamma),
                _ => (1.0, 1.0),
            };
            NonlinearitySpec::Berger {
                tension: r.float("params.tension", tension),
                gamma: r.float("params.gamma", gamma),
            }
        }
        "scalar" => NonlinearitySpec::Scalar {
            f1: CubicLaw {
                kappa: r.float("params.f1_kappa", 1.0),
                c: r.float("params.f1_c", 0.0),
            },
            f2: CubicLaw {
                kappa: r.float("params.f2_kappa", 1.0),
                c: r.float("params.f2_c", 0.0),
            },
        },
        _ => NonlinearitySpec::linear(),
    };
    let params = PhysParams {
        rho0: r.float("params.rho0", d.params.rho0),
        rho1: r.float("params.rho1", d.params.rho1),
        rho2: r.float("params.rho2", d.params.rho2),
        beta0: r.float("params.beta0", d.params.beta0),
        beta1: r.float("params.beta1", d.params.beta1),
        beta2: r.float("params.beta2", d.params.beta2),
        mu: r.float("params.mu", d.params.mu),
        lambda: r.float("params.lambda", d.params.lambda),
        nonlinearity,
    };

    let dt_default = if domain.n_cells > 0 {
        0.25 / domain.n_cells as f64
    } else {
        d.scheme.dt
    };
    let scheme = SchemeConfig {
        dt: r.float("scheme.dt", dt_default),
        tol_inner: r.float("scheme.tol_inner", d.scheme.tol_inner),
        tol_picard: r.float("scheme.tol_picard", d.scheme.tol_picard),
        max_picard: r.count("scheme.max_picard", d.scheme.max_picard),
        max_iter: r.count("scheme.max_iter", d.scheme.max_iter),
    };
    let diag = DiagConfig {
        eta: r.float("diag.eta", d.diag.eta),
        calibration: r.float("diag.calibration", d.diag.calibration),
        delta: r.take("diag.delta", None, "`auto` or a positive number", |s| {
            if s == "auto" {
                Some(None)
            } else {
                s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
            }
        }),
    };
    let decay = DecayConfig {
        flat_tol: r.float("decay.flat_tol", d.decay.flat_tol),
        window: r.float("decay.window", d.decay.window),
    };
    let difference = DifferenceConfig {
        perturbation: r.float("difference.perturbation", d.difference.perturbation),
        radius: r.float("difference.radius", d.difference.radius),
        discard: r.float("difference.discard", d.difference.discard),
        min_r2: r.float("difference.min_r2", d.difference.min_r2),
    };
    let probe = ProbeConfig {
        parameter: r.take(
            "probe.parameter",
            d.probe.parameter.clone(),
            "a numeric params.* key",
            |s| PROBE_PARAMETERS.contains(&s).then(|| s.to_string()),
        ),
        values: r.take(
            "probe.values",
            d.probe.values.clone(),
            "a comma-separated list of numbers",
            parse_list,
        ),
    };

    let unused: Vec<(String, usize)> = r
        .entries
        .iter()
        .filter(|(k, _)| !r.used.contains(*k))
        .map(|(k, (line, _))| (k.clone(), *line))
        .collect();
    for (k, line) in unused {
        let at = if line > 0 { format!("line {line}: ") } else { String::new() };
        if KEYS.contains(&k.as_str()) {
            r.errors.push(format!(
                "{at}{k} does not apply to params.nonlinearity = {kind}"
            ));
        } else {
            r.errors.push(format!("{at}unknown key {k}"));
        }
    }

    let config = RunConfig {
        domain,
        params,
        scheme,
        diag,
        experiment,
        initial,
        amplitude,
        seed,
        stride,
        t_max,
        output_dir,
        decay,
        difference,
        probe,
    };
    r.errors.extend(config.violations());
    if !r.errors.is_empty() {
        return Err(Error::Invalid(r.errors));
    }
    // Only keys that exist for the chosen variant count as defaulted.
    let defaulted = KEYS
        .iter()
        .filter(|k| r.defaulted.iter().any(|d| d == *k))
        .map(|k| k.to_string())
        .collect();
    Ok(ParsedConfig { config, defaulted })
}

pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    parse_config_with(text, &[])
}

impl RunConfig {
    /// Invariant violations across every section.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.domain.violations();
        out.extend(self.params.violations());
        out.extend(self.scheme.violations());
        out.extend(self.diag.violations(&self.params));
        if self.stride == 0 {
            out.push("run.stride must be positive".into());
        }
        if !(self.t_max >= 0.0) {
            out.push(format!("run.t_max = {} must be non-negative", self.t_max));
        }
        if !(self.decay.flat_tol > 0.0) {
            out.push(format!("decay.flat_tol = {} must be positive", self.decay.flat_tol));
        }
        if !(self.decay.window > 0.0) {
            out.push(format!("decay.window = {} must be positive", self.decay.window));
        }
        let df = &self.difference;
        if !(df.perturbation > 0.0) {
            out.push(format!("difference.perturbation = {} must be positive", df.perturbation));
        }
        if !(df.radius > 0.0) {
            out.push(format!("difference.radius = {} must be positive", df.radius));
        }
        if !(0.0..1.0).contains(&df.discard) {
            out.push(format!("difference.discard = {} must lie in [0, 1)", df.discard));
        }
        if !(0.0..=1.0).contains(&df.min_r2) {
            out.push(format!("difference.min_r2 = {} must lie in [0, 1]", df.min_r2));
        }
        if self.probe.values.is_empty() {
            out.push("probe.values must not be empty".into());
        }
        if self.experiment == Experiment::Probe {
            let berger_key = matches!(self.probe.parameter.as_str(), "params.tension" | "params.gamma");
            let berger = matches!(self.params.nonlinearity, NonlinearitySpec::Berger { .. });
            if berger_key && !berger {
                out.push(format!(
                    "probe.parameter = {} needs params.nonlinearity = berger",
                    self.probe.parameter
                ));
            }
            for &v in &self.probe.values {
                if let Ok(p) = self.with_parameter(&self.probe.parameter, v) {
                    for msg in p.params.violations() {
                        out.push(format!("probe.values entry {v}: {msg}"));
                    }
                }
            }
        }
        out
    }

    /// Copy with one numeric `params.*` key replaced.
    pub fn with_parameter(&self, key: &str, value: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        let p = &mut c.params;
        match key {
            "params.rho0" => p.rho0 = value,
            "params.rho1" => p.rho1 = value,
            "params.rho2" => p.rho2 = value,
            "params.beta0" => p.beta0 = value,
            "params.beta1" => p.beta1 = value,
            "params.beta2" => p.beta2 = value,
            "params.mu" => p.mu = value,
            "params.lambda" => p.lambda = value,
            "params.tension" | "params.gamma" => match &mut p.nonlinearity {
                NonlinearitySpec::Berger { tension, gamma } => {
                    if key == "params.tension" {
                        *tension = value
                    } else {
                        *gamma = value
                    }
                }
                _ => return Err(Error::config(format!("{key} needs params.nonlinearity = berger"))),
            },
            _ => return Err(Error::config(format!("{key} is not a sweepable parameter"))),
        }
        Ok(c)
    }

    /// Canonical `key = value` pairs; parsing them back yields an equal config.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(&str, String)> = vec![
            ("run.experiment", self.experiment.name().into()),
            ("run.initial", self.initial.name().into()),
            ("run.amplitude", fmt_f64(self.amplitude)),
            ("run.seed", self.seed.to_string()),
            ("run.stride", self.stride.to_string()),
            ("run.t_max", fmt_f64(self.t_max)),
            ("run.output_dir", self.output_dir.clone()),
            ("domain.n_cells", self.domain.n_cells.to_string()),
            ("domain.inner_lo", fmt_f64(self.domain.inner_lo)),
            ("domain.inner_hi", fmt_f64(self.domain.inner_hi)),
            ("domain.x0", fmt_list(&self.domain.x0)),
            ("params.rho0", fmt_f64(self.params.rho0)),
            ("params.rho1", fmt_f64(self.params.rho1)),
            ("params.rho2", fmt_f64(self.params.rho2)),
            ("params.beta0", fmt_f64(self.params.beta0)),
            ("params.beta1", fmt_f64(self.params.beta1)),
            ("params.beta2", fmt_f64(self.params.beta2)),
            ("params.mu", fmt_f64(self.params.mu)),
            ("params.lambda", fmt_f64(self.params.lambda)),
        ];
        match &self.params.nonlinearity {
            NonlinearitySpec::Berger { tension, gamma } => {
                e.push(("params.nonlinearity", "berger".into()));
                e.push(("params.tension", fmt_f64(*tension)));
                e.push(("params.gamma", fmt_f64(*gamma)));
            }
            spec if spec.is_linear() => e.push(("params.nonlinearity", "linear".into())),
            NonlinearitySpec::Scalar { f1, f2 } => {
                e.push(("params.nonlinearity", "scalar".into()));
                e.push(("params.f1_kappa", fmt_f64(f1.kappa)));
                e.push(("params.f1_c", fmt_f64(f1.c)));
                e.push(("params.f2_kappa", fmt_f64(f2.kappa)));
                e.push(("params.f2_c", fmt_f64(f2.c)));
            }
        }
        e.extend([
            ("scheme.dt", fmt_f64(self.scheme.dt)),
            ("scheme.tol_inner", fmt_f64(self.scheme.tol_inner)),
            ("scheme.tol_picard", fmt_f64(self.scheme.tol_picard)),
            ("scheme.max_picard", self.scheme.max_picard.to_string()),
            ("scheme.max_iter", self.scheme.max_iter.to_string()),
            ("diag.eta", fmt_f64(self.diag.eta)),
            ("diag.calibration", fmt_f64(self.diag.calibration)),
            ("diag.delta", self.diag.delta.map(fmt_f64).unwrap_or_else(|| "auto".into())),
            ("decay.flat_tol", fmt_f64(self.decay.flat_tol)),
            ("decay.window", fmt_f64(self.decay.window)),
            ("difference.perturbation", fmt_f64(self.difference.perturbation)),
            ("difference.radius", fmt_f64(self.difference.radius)),
            ("difference.discard", fmt_f64(self.difference.discard)),
            ("difference.min_r2", fmt_f64(self.difference.min_r2)),
            ("probe.parameter", self.probe.parameter.clone()),
            ("probe.values", fmt_list(&self.probe.values)),
        ]);
        e.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.serialize().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        let p = parse_config("").unwrap();
        assert_eq!(p.config, RunConfig::default());
        assert!(p.defaulted.contains(&"scheme.dt".to_string()));
        assert!(!p.defaulted.contains(&"params.f1_kappa".to_string()));
    }

    #[test]
    fn dt_default_follows_grid() {
        let p = parse_config("domain.n_cells = 64").unwrap();
        assert_eq!(p.config.scheme.dt, 1.0 / 256.0);
    }

    #[test]
    fn negative_gamma_is_rejected() {
        match parse_config("params.gamma=-1") {
            Err(Error::Invalid(v)) => {
                assert!(v.iter().any(|m| m.contains("params.gamma") && m.contains("strictly positive")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_problem_is_reported() {
        let text = "domain.n_cells = many\nbogus.key = 1\nparams.rho1 = -2\nno equals sign\nparams.f1_c = 1\n";
        match parse_config(text) {
            Err(Error::Invalid(v)) => {
                assert_eq!(v.len(), 5, "{v:?}");
                assert!(v.iter().any(|m| m.starts_with("line 1: domain.n_cells")));
                assert!(v.iter().any(|m| m.starts_with("line 4:")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_win_and_reach_metadata() {
        let p = parse_config_with(
            "scheme.dt = 0.01",
            &[("scheme.dt".into(), "0.001".into())],
        )
        .unwrap();
        assert_eq!(p.config.scheme.dt, 0.001);
        assert!(p.config.serialize().contains("scheme.dt = 1.0000000000000000e-3"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop::sample::select(vec![8usize, 16, 32, 64]),
            0.01f64..2.0,
            0.0f64..3.0,
            -5.0f64..5.0,
            0.1f64..4.0,
            0usize..3,
            any::<u64>(),
            prop::sample::select(Experiment::ALL.to_vec()),
            prop::collection::vec(0.01f64..2.0, 1..5),
        )
            .prop_map(|(n, rho, mu, tension, kappa, variant, seed, experiment, values)| {
                let mut c = RunConfig::default();
                c.domain.n_cells = n;
                c.params.rho2 = rho;
                c.params.mu = mu;
                c.params.nonlinearity = match variant {
                    0 => NonlinearitySpec::Berger { tension, gamma: kappa },
                    1 => NonlinearitySpec::Scalar {
                        f1: CubicLaw { kappa, c: tension },
                        f2: CubicLaw::ZERO,
                    },
                    _ => NonlinearitySpec::linear(),
                };
                c.scheme.dt = 0.25 / n as f64 * rho;
                c.seed = seed;
                c.experiment = experiment;
                c.diag.delta = if variant == 1 { Some(0.01) } else { None };
                c.diag.calibration = 0.0;
                c.probe.values = values;
                c
            })
    }

    proptest! {
        #[test]
        fn serialization_round_trips(c in arb_config()) {
            let back = parse_config(&c.serialize()).unwrap();
            prop_assert_eq!(&back.config, &c);
            prop_assert!(back.defaulted.is_empty());
        }
    }
}
