//! Command-line front end: reads a flat `key = value` run configuration,
//! dispatches the selected experiment and writes its CSV and summary files.
//!
//! Exit codes:
//!
//! | code | category         | meaning                                        |
//! |------|------------------|------------------------------------------------|
//! | 0    |                  | success                                        |
//! | 1    | `usage`          | bad command line                               |
//! | 2    | `config-io`      | configuration file unreadable                  |
//! | 3    | `config-invalid` | configuration rejected (one line per problem)  |
//! | 4    | `solver`         | a linear or nonlinear solve failed             |
//! | 5    | `output-io`      | report files could not be written              |
//! | 6    | `check-failed`   | an asserted check of the experiment failed     |
//!
//! Errors are printed to stderr as `error[<category>]: <message>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thermoplate::{output_dir, parse_config_with, run_experiment, write_report, Error, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "thermoplate", version, about = "Thermoelastic transmission plate simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a configuration file (`default` for the built-in defaults).
    Run {
        config: String,
        /// Replace one configuration entry, e.g. `--override scheme.dt=0.001`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the built-in invariant suites on the default configuration.
    Verify {
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the default configuration block.
    Defaults,
}

struct Failure {
    category: &'static str,
    code: u8,
    lines: Vec<String>,
}

impl Failure {
    fn new(category: &'static str, code: u8, msg: impl Into<String>) -> Self {
        Failure {
            category,
            code,
            lines: vec![msg.into()],
        }
    }

    fn from_core(e: Error, writing: bool) -> Self {
        match e {
            Error::Invalid(v) => Failure {
                category: "config-invalid",
                code: 3,
                lines: v,
            },
            Error::Config(m) => Failure::new("config-invalid", 3, m),
            Error::Usage(m) => Failure::new("usage", 1, m),
            Error::Io(io) if writing => Failure::new("output-io", 5, io.to_string()),
            Error::Io(io) => Failure::new("config-io", 2, io.to_string()),
            other => Failure::new("solver", 4, other.to_string()),
        }
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Failure> {
    raw.iter()
        .map(|o| {
            o.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Failure::new("usage", 1, format!("override `{o}` is not of the form key=value")))
        })
        .collect()
}

fn execute(config: &str, overrides: &[(String, String)]) -> Result<(), Failure> {
    let text = if config == "default" {
        String::new()
    } else {
        let path = PathBuf::from(config);
        std::fs::read_to_string(&path)
            .map_err(|e| Failure::new("config-io", 2, format!("{}: {e}", path.display())))?
    };
    let parsed = parse_config_with(&text, overrides).map_err(|e| Failure::from_core(e, false))?;
    let report = run_experiment(&parsed).map_err(|e| Failure::from_core(e, false))?;
    let dir = output_dir(&parsed.config);
    let paths = write_report(&report, &dir).map_err(|e| Failure::from_core(e, true))?;
    for c in &report.checks {
        println!("{} {}: {}", c.status(), c.name, c.detail);
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| c.asserted && !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        Err(Failure {
            category: "check-failed",
            code: 6,
            lines: failed,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Defaults => {
            print!("{}", RunConfig::default().serialize());
            Ok(())
        }
        Command::Run { config, overrides } => parse_overrides(&overrides).and_then(|o| execute(&config, &o)),
        Command::Verify { overrides } => parse_overrides(&overrides).and_then(|mut o| {
            o.insert(0, ("run.experiment".into(), "verify".into()));
            execute("default", &o)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            for l in &f.lines {
                eprintln!("error[{}]: {l}", f.category);
            }
            ExitCode::from(f.code)
        }
    }
}
