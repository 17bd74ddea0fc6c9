//! Command-line front end for the nrdicke engine.
//!
//! Every subcommand writes plain-text artifacts (CSV or JSON lines) whose
//! header carries the tool version, the resolved model parameters and the
//! full command line that produced them.

mod commands;
pub mod parse;

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nrdicke_core::{Mode, ModelParams};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad values or inconsistent inputs.
    Usage(String),
    /// The computation itself failed.
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<nrdicke_core::Error> for CliError {
    fn from(e: nrdicke_core::Error) -> Self {
        use nrdicke_core::Error as E;
        match e {
            E::InvalidParams(_) | E::Malformed(_) | E::SpecMismatch { .. } | E::UnknownSymmetry(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Numeric(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Numeric(format!("json: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "nrdicke", version, about = "Nonreciprocal three-species Dicke model: dynamics, phases and limit cycles")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "NRDICKE_WORKERS")]
    pub workers: Option<usize>,

    /// Seed for random initial kicks.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// JSON object whose keys mirror the long flags; flags given on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the equations of motion and write the trajectory as CSV.
    Trajectory(commands::TrajectoryArgs),
    /// Find all stationary states and label the phase.
    Stationary(commands::StationaryArgs),
    /// Eigenvalue flow along a path in phi or lambda, with exceptional points.
    Stability(commands::StabilityArgs),
    /// Classify the long-time attractor reached from the normal state.
    Classify(commands::ClassifyArgs),
    /// Steady-state phase map over a (phi, lambda) grid.
    Sweep(commands::SweepArgs),
    /// Ground-state phase map of the closed (kappa = 0) model.
    Groundstate(commands::GroundArgs),
    /// Emergent frequency against lambda and its power-law fit.
    Scaling(commands::ScalingArgs),
    /// Population and frequency compensation plan, optionally with a run.
    Compensate(commands::CompensateArgs),
}

const SUBCOMMANDS: [&str; 8] =
    ["trajectory", "stationary", "stability", "classify", "sweep", "groundstate", "scaling", "compensate"];

/// Physical parameters shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Cavity detuning.
    #[arg(long, default_value = "500", value_parser = parse::real, allow_negative_numbers = true)]
    pub omega_c: f64,
    /// Cavity decay rate.
    #[arg(long, default_value = "150", value_parser = parse::real)]
    pub kappa: f64,
    /// Spin frequency of every species.
    #[arg(long, default_value = "1", value_parser = parse::real)]
    pub omega: f64,
    /// Spin damping.
    #[arg(long, default_value = "0.05", value_parser = parse::real)]
    pub gamma: f64,
    /// Per-species spin frequencies for m = -1,0,+1 (overrides --omega).
    #[arg(long, value_parser = parse::triple, value_name = "W-1,W0,W+1")]
    pub omegas: Option<[f64; 3]>,
    /// Per-species population weights N_m / N_{±1}.
    #[arg(long, value_parser = parse::triple, value_name = "N-1,N0,N+1")]
    pub weights: Option<[f64; 3]>,
    /// Coupling pattern; lambda sets the m = 0 entry and the others scale with it.
    #[arg(long, value_parser = parse::triple, value_name = "R-1,R0,R+1")]
    pub lambda_ratios: Option<[f64; 3]>,
}

impl ModelArgs {
    pub fn params(&self, phi: f64, lambda: f64) -> ModelParams {
        let mut p = ModelParams::homogeneous(self.omega_c, self.kappa, self.gamma, phi, lambda);
        p.omega = self.omegas.unwrap_or([self.omega; 3]);
        if let Some(w) = self.weights {
            p.weight = w;
        }
        if let Some(r) = self.lambda_ratios {
            p.lam = r;
            p = p.with_lambda_scaled(lambda);
        }
        p
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    /// Spins only, with the cavity slaved to the spins.
    Adiabatic,
    /// Spins and cavity.
    Full,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Adiabatic => Mode::Adiabatic,
            ModeArg::Full => Mode::Full,
        }
    }
}

/// Invocation context handed to every subcommand.
pub struct Ctx {
    /// Resolved command line, config file already expanded.
    pub command_line: String,
    pub seed: u64,
}

impl Ctx {
    /// `#`-prefixed preamble lines for CSV artifacts.
    pub fn preamble(&self, params: &impl Serialize) -> CliResult<Vec<String>> {
        Ok(vec![
            format!("nrdicke {VERSION}"),
            format!("command: {}", self.command_line),
            format!("params: {}", serde_json::to_string(params)?),
        ])
    }

    /// Header object for JSON artifacts.
    pub fn header(&self, kind: &str, params: &impl Serialize) -> CliResult<serde_json::Value> {
        Ok(serde_json::json!({
            "format": format!("nrdicke-{kind}"),
            "version": VERSION,
            "command": self.command_line,
            "params": serde_json::to_value(params)?,
        }))
    }
}

/// Buffered writer to `path`, or to stdout when absent.
pub fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(|e| CliError::Numeric(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn shell_quote(s: &str) -> String {
    let safe = |c: char| c.is_ascii_alphanumeric() || "_-./:=,+@%".contains(c);
    if !s.is_empty() && s.chars().all(safe) {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

fn config_tokens(value: serde_json::Value) -> CliResult<(Option<String>, Vec<String>)> {
    use serde_json::Value;
    let obj = match value {
        Value::Object(m) => m,
        _ => return Err(CliError::Usage("config file must hold a JSON object".into())),
    };
    let mut command = None;
    let mut out = Vec::new();
    for (key, v) in obj {
        if key == "command" {
            match v {
                Value::String(s) => command = Some(s),
                _ => return Err(CliError::Usage("config key `command` must be a string".into())),
            }
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| -> CliResult<String> {
            match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(CliError::Usage(format!("config key `{key}` has an unsupported value"))),
            }
        };
        match &v {
            Value::Bool(true) => out.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(scalar).collect::<CliResult<_>>()?;
                out.push(format!("{flag}={}", parts.join(",")));
            }
            other => out.push(format!("{flag}={}", scalar(other)?)),
        }
    }
    Ok((command, out))
}

/// Replaces `--config FILE` by the flags it holds, placed directly after the
/// subcommand so that later command-line flags override them.
pub fn expand_config(argv: Vec<String>) -> CliResult<Vec<String>> {
    let mut args = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| CliError::Usage("--config needs a file".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            args.push(a);
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;
    let (command, tokens) = config_tokens(value)?;
    let pos = match args.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) {
        Some(i) => i + 1,
        None => {
            let cmd = command.ok_or_else(|| CliError::Usage("no subcommand given".into()))?;
            let at = args.len().min(1);
            args.insert(at, cmd);
            at + 1
        }
    };
    args.splice(pos..pos, tokens);
    Ok(args)
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return e.code();
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("{}", CliError::Usage("--workers must be at least 1".into()));
            return EXIT_USAGE;
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let words: Vec<String> = std::iter::once("nrdicke".to_string())
        .chain(argv.iter().skip(1).map(|a| shell_quote(a)))
        .collect();
    let ctx = Ctx { command_line: words.join(" "), seed: cli.seed };
    match commands::dispatch(cli.command, &ctx) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn quoting() {
        assert_eq!(shell_quote("0:pi:128"), "0:pi:128");
        assert_eq!(shell_quote("2*pi/3"), "'2*pi/3'");
        assert_eq!(shell_quote("a b"), "'a b'");
        assert_eq!(shell_quote(""), "''");
    }

    #[test]
    fn config_is_spliced_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"gamma": 0.3, "phi": "2pi/3", "np": true, "lambda_ratios": [1, 2, 1], "off": false}"#)
            .unwrap();
        let a = expand_config(argv(&format!("nrdicke --config {} stationary --lambda 5", cfg.display()))).unwrap();
        assert_eq!(
            a,
            argv("nrdicke stationary --gamma=0.3 --lambda-ratios=1,2,1 --np --phi=2pi/3 --lambda 5")
        );
    }

    #[test]
    fn config_supplies_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"command": "classify", "lambda": 49}"#).unwrap();
        let a = expand_config(vec!["nrdicke".into(), format!("--config={}", cfg.display())]).unwrap();
        assert_eq!(a, argv("nrdicke classify --lambda=49"));
    }

    #[test]
    fn config_errors_are_usage_errors() {
        assert_eq!(expand_config(argv("nrdicke --config /nonexistent.json sweep")).unwrap_err().code(), EXIT_USAGE);
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, "[1, 2]").unwrap();
        let a = argv(&format!("nrdicke --config {} sweep", cfg.display()));
        assert_eq!(expand_config(a).unwrap_err().code(), EXIT_USAGE);
    }

    #[test]
    fn model_args_build_params() {
        let cli = Cli::try_parse_from(argv(
            "nrdicke stationary --phi 2pi/3 --lambda 10 --weights 1,2,1 --omegas 1,0.5,1 --lambda-ratios 1,0.5,1",
        ))
        .unwrap();
        let Command::Stationary(a) = cli.command else { panic!() };
        let p = a.model.params(a.phi, a.lambda);
        assert_eq!(p.phi, 2.0 * std::f64::consts::PI / 3.0);
        assert_eq!(p.weight, [1.0, 2.0, 1.0]);
        assert_eq!(p.omega, [1.0, 0.5, 1.0]);
        assert_eq!(p.lam, [20.0, 10.0, 20.0]);
        assert_eq!((p.omega_c, p.kappa, p.gamma), (500.0, 150.0, 0.05));
    }
}
