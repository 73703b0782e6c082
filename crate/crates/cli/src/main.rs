use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cssigma::estimates::{instantiation_exponents, NullformExponents, NullformKind, RatioWindow};
use cssigma::spectral::Grid;
use cssigma_cli::commands::{self, CliError};
use cssigma_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "cssigma",
    version,
    about = "Chern–Simons gauged O(3) sigma model on the torus"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured data, writing diagnostics and snapshots.
    Simulate { config: PathBuf },
    /// Run the Picard iteration and write the difference table.
    Picard {
        config: PathBuf,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run the invariant suite on the configured data.
    Check { config: PathBuf },
    /// Evaluate exponent conditions.
    #[command(subcommand)]
    Lemma(LemmaCommand),
    /// Empirical null-form ratios on random free waves.
    Ratio(RatioArgs),
}

#[derive(Subcommand)]
enum LemmaCommand {
    /// Product estimate conditions for (s0,s1,s2; b0,b1,b2).
    Product {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        s: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        b: Vec<f64>,
        #[arg(long)]
        csv: bool,
    },
    /// Null-form estimate conditions.
    Nullform {
        #[command(flatten)]
        exps: ExponentArgs,
        #[arg(long)]
        csv: bool,
    },
    /// The three exponent choices used for the iteration at regularity s.
    Instances {
        #[arg(long, allow_negative_numbers = true)]
        s: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        eps: f64,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args)]
struct ExponentArgs {
    /// q0, qij or q0j
    #[arg(long)]
    kind: String,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    alpha: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta_plus: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta_minus: f64,
    #[arg(long, default_value_t = 2)]
    n: u32,
}

fn triple(name: &str, v: &[f64]) -> Result<[f64; 3], CliError> {
    v.try_into()
        .map_err(|_| CliError::Usage(format!("{name} takes three comma-separated values")))
}

impl ExponentArgs {
    fn build(&self) -> Result<NullformExponents, CliError> {
        if self.alpha.len() != 2 {
            return Err(CliError::Usage(
                "--alpha takes two comma-separated values".into(),
            ));
        }
        let kind = NullformKind::parse(&self.kind)
            .ok_or_else(|| CliError::Usage(format!("unknown null form '{}'", self.kind)))?;
        Ok(NullformExponents::new(
            kind,
            [self.alpha[0], self.alpha[1]],
            self.beta0,
            self.beta_plus,
            self.beta_minus,
            self.n,
        )?)
    }
}

#[derive(Args)]
struct RatioArgs {
    /// Use the iteration's exponents for this null form (q0, q0j or qij).
    #[arg(long, conflicts_with_all = ["kind", "alpha", "beta0"])]
    instance: Option<String>,
    #[arg(long, default_value_t = 1.1)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    alpha: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    beta0: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta_plus: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta_minus: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 64)]
    n_points: usize,
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    side: f64,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    band: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write per-trial LHS, RHS and ratio here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl RatioArgs {
    fn exponents(&self) -> Result<NullformExponents, CliError> {
        if let Some(name) = &self.instance {
            let kind = NullformKind::parse(name)
                .ok_or_else(|| CliError::Usage(format!("unknown null form '{name}'")))?;
            let all = instantiation_exponents(self.s, self.eps);
            return Ok(*all
                .iter()
                .find(|p| p.kind == kind)
                .expect("every kind is instantiated"));
        }
        let missing = || CliError::Usage("give --instance or --kind, --alpha and --beta0".into());
        ExponentArgs {
            kind: self.kind.clone().ok_or_else(missing)?,
            alpha: self.alpha.clone().ok_or_else(missing)?,
            beta0: self.beta0.ok_or_else(missing)?,
            beta_plus: self.beta_plus,
            beta_minus: self.beta_minus,
            n: 2,
        }
        .build()
    }
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::from_file(path)?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.cmd {
        Command::Simulate { config } => commands::simulate(&load(&config)?, out).map(|_| ()),
        Command::Picard {
            config,
            max_iterations,
            tol,
        } => {
            let mut cfg = load(&config)?;
            if let Some(m) = max_iterations {
                cfg.picard_max_iterations = m;
            }
            if let Some(t) = tol {
                cfg.picard_tol = t;
            }
            commands::picard(&cfg, out).map(|_| ())
        }
        Command::Check { config } => commands::check(&load(&config)?, out).map(|_| ()),
        Command::Lemma(LemmaCommand::Product { s, b, csv }) => {
            let s = triple("--s", &s)?;
            let b = triple("--b", &b)?;
            commands::lemma_product(s, b, csv, out).map(|_| ())
        }
        Command::Lemma(LemmaCommand::Nullform { exps, csv }) => {
            commands::lemma_nullform(&exps.build()?, csv, out).map(|_| ())
        }
        Command::Lemma(LemmaCommand::Instances { s, eps, csv }) => {
            commands::lemma_instances(s, eps, csv, out).map(|_| ())
        }
        Command::Ratio(args) => {
            let p = args.exponents()?;
            let grid =
                Grid::new(args.n_points, args.side).map_err(|e| CliError::Usage(e.to_string()))?;
            let window = RatioWindow {
                dt: args.dt,
                samples: args.samples,
                band: args.band,
                seed: args.seed,
            };
            commands::ratio(&p, args.trials, &grid, &window, args.csv.as_deref(), out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
