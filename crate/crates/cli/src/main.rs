use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rsapa::harness::{
    run_complexity_table, run_convergence, run_error_sweep, run_snr_sweep, run_validation, write_complexity_csv,
    write_convergence_csv, write_sweep_csv, ExperimentSpec,
};
use rsapa::{Error, PrecoderKind, Scheme};

#[derive(Parser)]
#[command(name = "rsapa", version, about = "Power allocation experiments for rate-splitting MU-MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ergodic sum rate against SNR.
    SweepSnr(ExperimentArgs),
    /// Ergodic sum rate against the channel-error variance.
    SweepErr(ExperimentArgs),
    /// Per-iteration MSE and sum-rate traces of the adaptive allocators.
    Convergence(ExperimentArgs),
    /// FLOP model and measured iteration cost.
    Complexity(ComplexityArgs),
    /// Self-checks of gradients, convexity and the closed-form MSE.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    errors: Option<usize>,
    #[arg(long, value_parser = parse_precoder)]
    precoder: Option<PrecoderKind>,
    /// Repeat to select several schemes.
    #[arg(long = "scheme", value_parser = parse_scheme)]
    schemes: Vec<Scheme>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Vec<f64>,
    /// Comma-separated grid of error variances.
    #[arg(long, value_delimiter = ',')]
    err_var: Vec<f64>,
    /// Fixed step size; `auto` uses half the stability bound.
    #[arg(long, value_parser = parse_mu)]
    mu: Option<Step>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Comma-separated problem sizes.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    n: Vec<u64>,
    #[arg(long, default_value_t = 30)]
    iters: u64,
    /// Timing repetitions; 0 skips the measurement.
    #[arg(long, default_value_t = 21)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    instances: usize,
    #[arg(long, default_value_t = 20_000)]
    draws: usize,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long, default_value_t = 0.1)]
    err_var: f64,
}

#[derive(Clone, Copy)]
enum Step {
    Auto,
    Fixed(f64),
}

fn parse_precoder(s: &str) -> Result<PrecoderKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mu(s: &str) -> Result<Step, String> {
    if s == "auto" {
        return Ok(Step::Auto);
    }
    s.parse().map(Step::Fixed).map_err(|e| format!("{e}"))
}

impl ExperimentArgs {
    fn spec(&self, preset: ExperimentSpec) -> rsapa::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_toml_str(&std::fs::read_to_string(path)?)?,
            None => preset,
        };
        if let Some(seed) = self.seed {
            spec.scenario.master_seed = seed;
        }
        if let Some(n) = self.channels {
            spec.n_channels = n;
        }
        if let Some(n) = self.errors {
            spec.n_errors = n;
        }
        if let Some(p) = self.precoder {
            spec.precoder = p;
        }
        if !self.schemes.is_empty() {
            spec.schemes = self.schemes.clone();
        }
        if !self.snr_db.is_empty() {
            spec.snr_grid_db = self.snr_db.clone();
        }
        if !self.err_var.is_empty() {
            spec.err_var_grid = self.err_var.clone();
        }
        match self.mu {
            Some(Step::Auto) => spec.mu = None,
            Some(Step::Fixed(mu)) => spec.mu = Some(mu),
            None => {}
        }
        if let Some(n) = self.iters {
            spec.iterations = n;
        }
        if self.jobs.is_some() {
            spec.jobs = self.jobs;
        }
        if self.out.is_some() {
            spec.output = self.out.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn sink(path: Option<&Path>) -> rsapa::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> rsapa::Result<()> {
    match cli.command {
        Command::SweepSnr(args) => {
            let spec = args.spec(ExperimentSpec::snr_sweep_preset())?;
            let rows = run_snr_sweep(&spec)?;
            write_sweep_csv(&rows, sink(spec.output.as_deref())?)?;
        }
        Command::SweepErr(args) => {
            let spec = args.spec(ExperimentSpec::error_sweep_preset())?;
            let rows = run_error_sweep(&spec)?;
            write_sweep_csv(&rows, sink(spec.output.as_deref())?)?;
        }
        Command::Convergence(args) => {
            let spec = args.spec(ExperimentSpec::convergence_preset())?;
            let rows = run_convergence(&spec, spec.mu)?;
            write_convergence_csv(&rows, sink(spec.output.as_deref())?)?;
        }
        Command::Complexity(args) => {
            let rows = run_complexity_table(&args.n, args.iters, args.reps, args.seed)?;
            write_complexity_csv(&rows, sink(args.out.as_deref())?)?;
        }
        Command::Validate(args) => {
            let cfg = rsapa::SystemConfig::symmetric(4, 2, 2, 2)
                .with_seed(args.seed)
                .with_snr_db(args.snr_db)
                .with_err_var(args.err_var);
            let checks = run_validation(&cfg, args.instances, args.draws)?;
            let mut out = io::stdout().lock();
            for c in &checks {
                writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            if let Some(c) = checks.iter().find(|c| !c.passed) {
                return Err(Error::Degenerate(format!("validation check `{}` failed", c.name)));
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        e if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // usage errors share the configuration exit code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
