//! Command-line front end.
//!
//! Every subcommand resolves its flags (explicit flag, then `--config`
//! file, then built-in default) into a [`RunConfig`], writes it to
//! `resolved-config.json`, and derives all randomness from its seed.
//! Thread count and output directory are not part of the resolved config.

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{LloydConfig, UpdateMode};
use crate::simulation::{DesignName, ErrorKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

pub const SEED_ENV: &str = "MBPC_SEED";

#[derive(Debug, Parser)]
#[command(name = "mbpc", version, about = "Multi-block clusterwise panel regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate cluster parameters and assignments, with HAC inference.
    Fit(FitArgs),
    /// As `fit`, after removing unit fixed effects.
    FeFit(FitArgs),
    /// Choose cluster counts by the Cp criterion.
    Select(SelectArgs),
    /// Run a Monte Carlo design.
    Simulate(SimulateArgs),
    /// Multistart convergence of the estimator on one dataset.
    Diagnose(FitArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Replay a resolved-config.json; explicit flags still take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed; falls back to $MBPC_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Random starts.
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    itermax: Option<usize>,
    /// Standard deviation of the random initial parameters.
    #[arg(long)]
    init_sigma: Option<f64>,
    /// Parameter update inside the iteration: partial | full.
    #[arg(long)]
    update: Option<String>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Long-format CSV or JSON panel.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Block dimensions, e.g. 2,2.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Cluster counts per block, e.g. 2,3.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Confidence level of the intervals.
    #[arg(long)]
    level: Option<f64>,
    /// Scale the covariance by NT / (NT - d_theta).
    #[arg(long)]
    dof_correction: bool,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Largest cluster counts in the grid, e.g. 6,6.
    #[arg(long, value_delimiter = ',')]
    k_max: Option<Vec<usize>>,
    /// Penalty exponent slack: log T / T^(1 - epsilon).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Maximum number of grid points.
    #[arg(long)]
    grid_cap: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// separation | sample-size | clusters | misspec | imbalance | dimension | model-select | convergence
    design: Option<String>,
    #[command(flatten)]
    common: Common,
    /// Error process: ar1 | hk | indep.
    #[arg(long)]
    errors: Option<String>,
    /// Cluster separation angle in radians.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    /// True cluster counts (k1,k2) for the circle designs.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    k_max: Option<Vec<usize>>,
    /// Size of the small block (imbalance design).
    #[arg(long)]
    m: Option<usize>,
    /// Number of covariates (dimension design).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Starts per path in the convergence design.
    #[arg(long)]
    s_max: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<Vec<usize>>,
    #[serde(default)]
    pub lloyd: LloydConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default)]
    pub dof_correction: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
}

impl RunConfig {
    fn empty(command: &str) -> Self {
        Self {
            command: command.into(),
            input: None,
            blocks: None,
            k: None,
            k_max: None,
            lloyd: LloydConfig::default(),
            level: None,
            dof_correction: false,
            epsilon: None,
            grid_cap: None,
            design: None,
            errors: None,
            alpha: None,
            n: None,
            t: None,
            m: None,
            p: None,
            reps: None,
            s_max: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn parse_update(s: &str) -> Result<UpdateMode> {
    match s {
        "partial" => Ok(UpdateMode::Partial),
        "full" => Ok(UpdateMode::Full),
        other => Err(Error::Config(format!("unknown update mode '{other}', expected partial or full"))),
    }
}

/// Starts from the `--config` file (or an empty config), checks the command
/// matches, then overlays the shared estimator flags.
fn base_config(command: &str, common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            if cfg.command != command {
                return Err(Error::Config(format!(
                    "{} was written by '{}', not '{command}'",
                    path.display(),
                    cfg.command
                )));
            }
            cfg
        }
        None => {
            let mut cfg = RunConfig::empty(command);
            if let Ok(v) = std::env::var(SEED_ENV) {
                cfg.lloyd.seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
            }
            cfg
        }
    };
    let l = &mut cfg.lloyd;
    if let Some(v) = common.seed {
        l.seed = v;
    }
    if let Some(v) = common.starts {
        l.n_starts = v;
    }
    if let Some(v) = common.tol {
        l.tol = v;
    }
    if let Some(v) = common.itermax {
        l.itermax = v;
    }
    if let Some(v) = common.init_sigma {
        l.init_sigma = v;
    }
    if let Some(v) = &common.update {
        l.update_mode = parse_update(v)?;
    }
    l.validate()?;
    Ok(cfg)
}

fn overlay<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        *slot = flag.clone();
    }
}

fn resolve(command: &Command) -> Result<(RunConfig, &Common)> {
    match command {
        Command::Fit(a) | Command::FeFit(a) | Command::Diagnose(a) => {
            let name = match command {
                Command::Fit(_) => "fit",
                Command::FeFit(_) => "fe-fit",
                _ => "diagnose",
            };
            let mut cfg = base_config(name, &a.common)?;
            overlay(&mut cfg.input, &a.input);
            overlay(&mut cfg.blocks, &a.blocks);
            overlay(&mut cfg.k, &a.k);
            if name != "diagnose" {
                overlay(&mut cfg.level, &a.level);
                cfg.level.get_or_insert(0.95);
                cfg.dof_correction |= a.dof_correction;
            }
            Ok((cfg, &a.common))
        }
        Command::Select(a) => {
            let mut cfg = base_config("select", &a.common)?;
            overlay(&mut cfg.input, &a.input);
            overlay(&mut cfg.blocks, &a.blocks);
            overlay(&mut cfg.k_max, &a.k_max);
            overlay(&mut cfg.epsilon, &a.epsilon);
            overlay(&mut cfg.grid_cap, &a.grid_cap);
            let defaults = crate::selection::SelectionOptions::default();
            cfg.epsilon.get_or_insert(defaults.epsilon);
            cfg.grid_cap.get_or_insert(defaults.grid_cap);
            Ok((cfg, &a.common))
        }
        Command::Simulate(a) => {
            let mut cfg = base_config("simulate", &a.common)?;
            if let Some(d) = &a.design {
                cfg.design = Some(d.parse()?);
            }
            if let Some(e) = &a.errors {
                cfg.errors = Some(e.parse()?);
            }
            overlay(&mut cfg.alpha, &a.alpha);
            overlay(&mut cfg.n, &a.n);
            overlay(&mut cfg.t, &a.t);
            overlay(&mut cfg.k, &a.k);
            overlay(&mut cfg.k_max, &a.k_max);
            overlay(&mut cfg.m, &a.m);
            overlay(&mut cfg.p, &a.p);
            overlay(&mut cfg.reps, &a.reps);
            overlay(&mut cfg.s_max, &a.s_max);
            overlay(&mut cfg.level, &a.level);
            commands::simulate_defaults(&mut cfg)?;
            Ok((cfg, &a.common))
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let (cfg, common) = resolve(&cli.command)?;
    if let Some(threads) = common.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists (repeated in-process calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    std::fs::create_dir_all(&common.out)?;
    commands::dispatch(&cfg, &common.out)
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_input() {
        EXIT_INPUT
    } else if matches!(err, Error::Config(_) | Error::GridCap { .. } | Error::InvalidLabel { .. }) {
        EXIT_CONFIG
    } else {
        EXIT_FAILURE
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
