//! `pcfit`: piecewise convex fitting, knot selection and multi-window
//! spectra from the command line.
//!
//! Exit codes: 0 on success, 2 when a fit finished with an estimation
//! warning, 1 on any error (including invalid arguments).

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pcfit_core::changepoint::DEFAULT_Z_ALPHA;
use pcfit_core::pcf::{PcfConfig, Stage1Backend};
use pcfit_core::pcic::{Criterion, SelectionConfig, DEFAULT_GAMMA1, DEFAULT_GAMMA2};
use pcfit_core::simulate::Signal;

use commands::{FitJob, Outcome, SelectJob, SimulateJob, SpectrumJob};

#[derive(Parser)]
#[command(name = "pcfit", version, about = "Two-stage piecewise convex fitting")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "PCFIT_WORKERS", global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a piecewise convex smoothing spline to a CSV series.
    Fit {
        #[command(flatten)]
        input: SeriesInput,
        #[command(flatten)]
        pcf: PcfArgs,
        /// Result JSON.
        #[arg(long)]
        out: PathBuf,
        /// Plot CSV (default: next to --out as <stem>.plot.csv).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Sine-taper multi-window spectrum, optionally with a piecewise convex
    /// fit of the log spectrum.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
        /// Column holding the time series.
        #[arg(long, default_value = "y")]
        column: String,
        /// Number of tapers (default: floor((N/2)^(8/15))).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        tapers: Option<u64>,
        /// Fit the bias-corrected log spectrum.
        #[arg(long)]
        fit: bool,
        #[command(flatten)]
        pcf: PcfArgs,
        /// Result JSON.
        #[arg(long)]
        out: PathBuf,
        /// Spectrum CSV (default: <stem>.spectrum.csv next to --out).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Log-spectrum plot CSV when fitting (default: <stem>.plot.csv).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Forward knot selection for a regression spline.
    Select {
        #[command(flatten)]
        input: SeriesInput,
        /// friedman, bayes or pcic.
        #[arg(long, default_value = "pcic", value_parser = parse_criterion)]
        criterion: Criterion,
        #[arg(long, default_value_t = 10)]
        max_knots: usize,
        /// Regression spline degree.
        #[arg(long, default_value_t = 3)]
        degree: usize,
        /// Change points are sign changes of this derivative.
        #[arg(long, default_value_t = 2)]
        ell: usize,
        #[arg(long, default_value_t = DEFAULT_GAMMA1)]
        gamma1: f64,
        #[arg(long, default_value_t = DEFAULT_GAMMA2)]
        gamma2: f64,
        /// Noise variance (default: second-difference estimate).
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write seeded draws of a test signal to CSV.
    Simulate {
        /// sin, cubic, kink, pwquad, ar2 or chirp.
        #[arg(long, value_parser = parse_signal)]
        signal: Signal,
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Noise standard deviation (innovation standard deviation for ar2).
        #[arg(long, default_value_t = 0.2)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SeriesInput {
    /// Headed CSV file.
    #[arg(long = "in")]
    path: PathBuf,
    /// Time column (default: "t" if present, else i/N).
    #[arg(long)]
    t_col: Option<String>,
    #[arg(long, default_value = "y")]
    y_col: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Spline,
    Kernel,
}

#[derive(Args)]
struct PcfArgs {
    /// Change points are sign changes of this derivative.
    #[arg(long, default_value_t = 2)]
    ell: usize,
    /// Penalty order.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Pilot smoother.
    #[arg(long, value_enum, default_value_t = Backend::Spline)]
    backend: Backend,
    #[arg(long, default_value_t = DEFAULT_Z_ALPHA)]
    z_alpha: f64,
    /// Constraint points per interval.
    #[arg(long, default_value_t = 5)]
    density: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA1)]
    gamma1: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA2)]
    gamma2: f64,
    /// Fixed smoothing level instead of GCV.
    #[arg(long, conflicts_with = "gcv")]
    lambda: Option<f64>,
    /// Choose the smoothing level by GCV (the default).
    #[arg(long)]
    gcv: bool,
    /// Fixed pilot halfwidth instead of the inflated GCV halfwidth.
    #[arg(long = "h")]
    halfwidth: Option<f64>,
    /// Noise variance (default: estimated).
    #[arg(long)]
    sigma2: Option<f64>,
    /// Scale on the pilot inflation factor.
    #[arg(long, default_value_t = 1.0)]
    iota_multiplier: f64,
    /// Also fix the curvature sign between change-point intervals.
    #[arg(long)]
    constrain_gaps: bool,
}

impl PcfArgs {
    fn config(&self) -> Result<PcfConfig> {
        let config = PcfConfig {
            ell: self.ell,
            m: self.m,
            stage1_backend: match self.backend {
                Backend::Spline => Stage1Backend::Spline,
                Backend::Kernel => Stage1Backend::Kernel,
            },
            z_alpha: self.z_alpha,
            density: self.density,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            lambda: self.lambda,
            stage1_halfwidth: self.halfwidth,
            sigma2: self.sigma2,
            iota_multiplier: self.iota_multiplier,
            constrain_gaps: self.constrain_gaps,
            ..PcfConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse().map_err(|e: pcfit_core::Error| e.to_string())
}

fn parse_signal(s: &str) -> Result<Signal, String> {
    s.parse().map_err(|e: pcfit_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()?;
    }
    match cli.command {
        Command::Fit {
            input,
            pcf,
            out,
            plot,
        } => commands::cmd_fit(FitJob {
            input: &input.path,
            t_col: input.t_col.as_deref(),
            y_col: &input.y_col,
            config: pcf.config()?,
            out: &out,
            plot,
        }),
        Command::Spectrum {
            input,
            column,
            tapers,
            fit,
            pcf,
            out,
            csv,
            plot,
        } => commands::cmd_spectrum(SpectrumJob {
            input: &input,
            column: &column,
            tapers: tapers.map(|k| k as usize),
            fit: if fit { Some(pcf.config()?) } else { None },
            out: &out,
            csv,
            plot,
        }),
        Command::Select {
            input,
            criterion,
            max_knots,
            degree,
            ell,
            gamma1,
            gamma2,
            sigma2,
            out,
        } => commands::cmd_select(SelectJob {
            input: &input.path,
            t_col: input.t_col.as_deref(),
            y_col: &input.y_col,
            config: SelectionConfig {
                max_knots,
                criterion,
                degree,
                ell,
                gamma1,
                gamma2,
                sigma2,
            },
            out: &out,
        }),
        Command::Simulate {
            signal,
            n,
            sigma,
            seed,
            replicates,
            out,
        } => commands::cmd_simulate(SimulateJob {
            signal,
            n,
            sigma,
            seed,
            replicates,
            out: &out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Warning) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
