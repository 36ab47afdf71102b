//! `ergoflow`: quadrature, flow simulation and pullback sampling for
//! one-dimensional positive recurrent diffusions.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ergoflow_core::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            3 => "non_convergence",
            _ => "validation",
        }
    }

    pub fn exit_code(&self) -> u8 {
        use ergoflow_core::Error as E;
        match self {
            CliError::Core(
                E::NonConvergence(_) | E::Quadrature { .. } | E::Overflow { .. } | E::Bracket(_),
            ) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ergoflow", version, about = "Invariant measures, focusing rates and pullback sampling for 1D diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration (defaults to OU with beta = 1)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output artifact; the JSON sidecar is written next to it
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of paths or seeds
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Horizon T
    #[arg(long, global = true)]
    t: Option<f64>,
    /// Suppress the summary line on stdout
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GammaMethod {
    Quadrature,
    Birkhoff,
    TwoPoint,
    All,
}

impl GammaMethod {
    fn label(self) -> &'static str {
        match self {
            GammaMethod::Quadrature => "quadrature",
            GammaMethod::Birkhoff => "birkhoff",
            GammaMethod::TwoPoint => "two-point",
            GammaMethod::All => "all",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recurrence check, measure table, γ, boundaries and the gap bound
    Analyze,
    /// Forward or sharp ensemble trajectories
    Simulate,
    /// Two-point focusing rate over seeds
    Focusing,
    /// γ by quadrature, Birkhoff average and two-point slope
    Gamma {
        #[arg(long, value_enum)]
        method: Option<GammaMethod>,
    },
    /// Sharp-flow exit probabilities against the invariant CDF
    ExitProb {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Pullback samples of the stagnation point, one per seed
    SampleInvariant {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Stagnation point by three methods on one path
    Attractor,
    /// Spectral gap bound from the trial function
    Gap,
    /// Discrete residual of the equation for f(X↓_t)
    SpdeResidual {
        #[arg(long, value_delimiter = ',')]
        dt: Option<Vec<f64>>,
    },
    /// Strong error of the integrators against the exact OU flow
    OracleCheck {
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        dt: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Raw noise increments of one path
    DumpNoise,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Simulate => "simulate",
            Command::Focusing => "focusing",
            Command::Gamma { .. } => "gamma",
            Command::ExitProb { .. } => "exit-prob",
            Command::SampleInvariant { .. } => "sample-invariant",
            Command::Attractor => "attractor",
            Command::Gap => "gap",
            Command::SpdeResidual { .. } => "spde-residual",
            Command::OracleCheck { .. } => "oracle-check",
            Command::DumpNoise => "dump-noise",
        }
    }

    /// Folds command-specific flags into the config.
    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Gamma { method: Some(m) } => cfg.method = Some(m.label().to_string()),
            Command::ExitProb { x0, n } => {
                if let Some(x0) = x0 {
                    cfg.x0 = Some(x0.clone());
                }
                if n.is_some() {
                    cfg.paths = *n;
                }
            }
            Command::SampleInvariant { n: Some(n) } => cfg.paths = Some(*n),
            Command::SpdeResidual { dt: Some(dt) } => cfg.dt_list = Some(dt.clone()),
            Command::OracleCheck { beta, dt, seeds } => {
                if let Some(beta) = beta {
                    let sigma0 = match &cfg.model {
                        ergoflow_core::ModelSpec::Catalog { kind, params } if kind == "ou" => {
                            params.get("sigma0").copied().unwrap_or(1.0)
                        }
                        _ => 1.0,
                    };
                    cfg.model = ergoflow_core::ModelSpec::catalog("ou", &[("beta", *beta), ("sigma0", sigma0)]);
                }
                if let Some(dt) = dt {
                    cfg.dt_list = Some(dt.clone());
                }
                if seeds.is_some() {
                    cfg.paths = *seeds;
                }
            }
            _ => {}
        }
    }
}

fn configure_workers() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ERGOFLOW_WORKERS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("ERGOFLOW_WORKERS must be a positive integer (got '{v}')")))?;
        if n == 0 {
            return Err(CliError::Config("ERGOFLOW_WORKERS must be at least 1".into()));
        }
        // a second initialisation only happens in tests; the first pool wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.name();
    let setup = || -> Result<RunConfig, CliError> {
        configure_workers()?;
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::ou_default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if cli.paths.is_some() {
            cfg.paths = cli.paths;
        }
        if cli.t.is_some() {
            cfg.t = cli.t;
        }
        cli.command.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    };
    let mut cfg = match setup() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ergoflow {command}: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(commands::default_out(command)));
    if let Some(c) = &cli.config {
        let same = |a: &std::path::Path| match (a.canonicalize(), c.canonicalize()) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        };
        if same(&out) || same(&output::sidecar_path(&out)) {
            eprintln!("ergoflow {command}: output would overwrite the config file {}", c.display());
            return ExitCode::from(2);
        }
    }
    let (artifacts, error) = match commands::run(command, &mut cfg) {
        Ok(a) => (a, None),
        Err((a, e)) => (a, Some(e)),
    };
    let mut write_error = None;
    if let Some(table) = &artifacts.table {
        if let Err(e) = table.write(&out) {
            write_error = Some(e);
        }
    }
    if let Err(e) = output::write_sidecar(&output::sidecar_path(&out), &cfg, command, &artifacts, error.as_ref()) {
        write_error.get_or_insert(e);
    }
    if let Some(e) = write_error {
        eprintln!("ergoflow {command}: {e}");
        return ExitCode::from(2);
    }
    match error {
        Some(e) => {
            eprintln!("ergoflow {command}: {e}");
            ExitCode::from(e.exit_code())
        }
        None => {
            if !cli.quiet {
                println!("{command}: wrote {}", out.display());
            }
            ExitCode::SUCCESS
        }
    }
}
