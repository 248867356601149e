use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcfit_core::pcf::{fit_pcf, PcfConfig, PcfResult};
use pcfit_core::pcic::{forward_knot_selection, Selection, SelectionConfig};
use pcfit_core::simulate::{replicate_rng, simulate, Signal};
use pcfit_core::spectral::{
    default_num_tapers, log_spectrum_series, multiwindow_spectrum, pcf_log_spectrum,
    SpectrumEstimate,
};
use pcfit_core::SampleSeries;
use rayon::prelude::*;
use serde::Serialize;

use crate::io::{sibling, write_csv, write_json, Cell, Table};

/// How a run ended when it did not fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Warning,
}

/// Affine map from the canonical fitting grid `u` to the input time axis:
/// `t = offset + scale * u`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Grid {
    pub offset: f64,
    pub scale: f64,
}

impl Grid {
    fn to_input(self, u: f64) -> f64 {
        self.offset + self.scale * u
    }
}

/// Reads `y_col` (and the time column, if any) into a series on the
/// canonical grid. Without a time column the samples are taken as `i / N`.
pub fn load_series(
    table: &Table,
    t_col: Option<&str>,
    y_col: &str,
) -> Result<(SampleSeries, Vec<f64>, Grid)> {
    let y = table.column(y_col)?;
    let t_name = match t_col {
        Some(name) => Some(name),
        None if table.has("t") => Some("t"),
        None => None,
    };
    let (series, t, grid) = match t_name {
        Some(name) => {
            let t = table.column(name)?;
            let (series, offset, scale) = SampleSeries::rescaled(&t, y)
                .with_context(|| format!("{}: column '{name}'", table.path.display()))?;
            (series, t, Grid { offset, scale })
        }
        None => {
            let series =
                SampleSeries::from_values(y).with_context(|| table.path.display().to_string())?;
            let t = series.t().to_vec();
            (
                series,
                t,
                Grid {
                    offset: 0.0,
                    scale: 1.0,
                },
            )
        }
    };
    Ok((series, t, grid))
}

fn report_warnings(warnings: &[String]) -> Outcome {
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if warnings.is_empty() {
        Outcome::Clean
    } else {
        Outcome::Warning
    }
}

/// Index of the change-point interval containing `u`.
fn interval_of(result: &PcfResult, u: f64) -> Cell {
    result
        .change_points
        .points
        .iter()
        .position(|p| u >= p.lo && u <= p.hi)
        .map_or(Cell::Empty, |k| Cell::Int(k as i64))
}

#[derive(Serialize)]
struct FitReport<'a> {
    command: &'static str,
    input: String,
    n: usize,
    grid: Grid,
    config: &'a PcfConfig,
    result: &'a PcfResult,
}

pub struct FitJob<'a> {
    pub input: &'a Path,
    pub t_col: Option<&'a str>,
    pub y_col: &'a str,
    pub config: PcfConfig,
    pub out: &'a Path,
    pub plot: Option<PathBuf>,
}

pub fn cmd_fit(job: FitJob) -> Result<Outcome> {
    let table = Table::read(job.input)?;
    if table.len() < 10 {
        bail!(
            "{}: need at least 10 rows, found {}",
            job.input.display(),
            table.len()
        );
    }
    let (series, t, grid) = load_series(&table, job.t_col, job.y_col)?;
    let result = fit_pcf(&series, &job.config)?;
    write_json(
        job.out,
        &FitReport {
            command: "fit",
            input: job.input.display().to_string(),
            n: series.len(),
            grid,
            config: &job.config,
            result: &result,
        },
    )?;
    let u = series.t();
    let stage2 = result.stage2.eval_many(u, 0)?;
    let plot = job.plot.unwrap_or_else(|| sibling(job.out, "plot.csv"));
    write_csv(
        &plot,
        &["t", "u", "y", "stage1", "stage2", "interval"],
        (0..u.len()).map(|i| {
            vec![
                Cell::Num(t[i]),
                Cell::Num(u[i]),
                Cell::Num(series.y()[i]),
                Cell::Num(result.stage1.g[i]),
                Cell::Num(stage2[i]),
                interval_of(&result, u[i]),
            ]
        }),
    )?;
    Ok(report_warnings(&result.diagnostics.warnings))
}

#[derive(Serialize)]
struct SpectrumReport<'a> {
    command: &'static str,
    input: String,
    column: &'a str,
    n: usize,
    tapers: usize,
    delta: f64,
    /// Frequency of the largest estimate.
    peak_frequency: f64,
    /// Frequency of the largest fitted log spectrum, when fitted.
    fitted_peak_frequency: Option<f64>,
    estimate: &'a SpectrumEstimate,
    log_fit: Option<&'a PcfResult>,
}

pub struct SpectrumJob<'a> {
    pub input: &'a Path,
    pub column: &'a str,
    pub tapers: Option<usize>,
    /// PCF settings for the log spectrum; `None` skips the fit.
    pub fit: Option<PcfConfig>,
    pub out: &'a Path,
    pub csv: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

pub fn cmd_spectrum(job: SpectrumJob) -> Result<Outcome> {
    let table = Table::read(job.input)?;
    if table.len() < 10 {
        bail!(
            "{}: need at least 10 rows, found {}",
            job.input.display(),
            table.len()
        );
    }
    let x = table.column(job.column)?;
    let k = job.tapers.unwrap_or_else(|| default_num_tapers(x.len()));
    let estimate = multiwindow_spectrum(&x, k)?;
    let log_fit = job
        .fit
        .as_ref()
        .map(|c| pcf_log_spectrum(&estimate, c))
        .transpose()?;
    let (log_series, freqs) = log_spectrum_series(&estimate)?;
    let fitted = log_fit
        .as_ref()
        .map(|r| r.stage2.eval_many(log_series.t(), 0))
        .transpose()?;
    let fitted_peak_frequency = fitted.as_ref().map(|v| {
        let mut best = 0;
        for (j, x) in v.iter().enumerate() {
            if *x > v[best] {
                best = j;
            }
        }
        freqs[best]
    });
    write_json(
        job.out,
        &SpectrumReport {
            command: "spectrum",
            input: job.input.display().to_string(),
            column: job.column,
            n: estimate.n,
            tapers: k,
            delta: estimate.delta,
            peak_frequency: estimate.peak_frequency(),
            fitted_peak_frequency,
            estimate: &estimate,
            log_fit: log_fit.as_ref(),
        },
    )?;
    let csv = job.csv.unwrap_or_else(|| sibling(job.out, "spectrum.csv"));
    write_csv(
        &csv,
        &["freq", "S"],
        estimate
            .freqs
            .iter()
            .zip(&estimate.s)
            .map(|(f, s)| vec![Cell::Num(*f), Cell::Num(*s)]),
    )?;
    let (Some(result), Some(fitted)) = (&log_fit, &fitted) else {
        return Ok(Outcome::Clean);
    };
    let plot = job.plot.unwrap_or_else(|| sibling(job.out, "plot.csv"));
    let u = log_series.t();
    write_csv(
        &plot,
        &["freq", "u", "log_s", "stage1", "stage2", "interval"],
        (0..u.len()).map(|i| {
            vec![
                Cell::Num(freqs[i]),
                Cell::Num(u[i]),
                Cell::Num(log_series.y()[i]),
                Cell::Num(result.stage1.g[i]),
                Cell::Num(fitted[i]),
                interval_of(result, u[i]),
            ]
        }),
    )?;
    Ok(report_warnings(&result.diagnostics.warnings))
}

#[derive(Serialize)]
struct SelectReport<'a> {
    command: &'static str,
    input: String,
    n: usize,
    grid: Grid,
    config: &'a SelectionConfig,
    /// Selected knots on the input time axis.
    knots: Vec<f64>,
    selection: &'a Selection,
}

pub struct SelectJob<'a> {
    pub input: &'a Path,
    pub t_col: Option<&'a str>,
    pub y_col: &'a str,
    pub config: SelectionConfig,
    pub out: &'a Path,
}

pub fn cmd_select(job: SelectJob) -> Result<Outcome> {
    let table = Table::read(job.input)?;
    let (series, _, grid) = load_series(&table, job.t_col, job.y_col)?;
    let selection = forward_knot_selection(&series, &job.config)?;
    write_json(
        job.out,
        &SelectReport {
            command: "select",
            input: job.input.display().to_string(),
            n: series.len(),
            grid,
            config: &job.config,
            knots: selection.knots.iter().map(|u| grid.to_input(*u)).collect(),
            selection: &selection,
        },
    )?;
    Ok(Outcome::Clean)
}

pub struct SimulateJob<'a> {
    pub signal: Signal,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub replicates: u64,
    pub out: &'a Path,
}

/// Writes `t,y[,truth]`, with a leading `replicate` column when more than
/// one replicate is drawn. Replicates are drawn in parallel and written in
/// index order.
pub fn cmd_simulate(job: SimulateJob) -> Result<Outcome> {
    if job.replicates == 0 {
        bail!("at least one replicate is required");
    }
    let draws = (0..job.replicates)
        .into_par_iter()
        .map(|r| {
            simulate(
                job.signal,
                job.n,
                job.sigma,
                &mut replicate_rng(job.seed, r),
            )
        })
        .collect::<pcfit_core::Result<Vec<_>>>()?;
    let many = job.replicates > 1;
    let with_truth = job.signal.truth(0.5).is_some();
    let mut headers = Vec::new();
    if many {
        headers.push("replicate");
    }
    headers.extend(["t", "y"]);
    if with_truth {
        headers.push("truth");
    }
    let rows = draws.iter().enumerate().flat_map(|(r, (series, truth))| {
        (0..series.len()).map(move |i| {
            let mut row = Vec::with_capacity(4);
            if many {
                row.push(Cell::Int(r as i64));
            }
            row.push(Cell::Num(series.t()[i]));
            row.push(Cell::Num(series.y()[i]));
            if with_truth {
                row.push(Cell::Num(truth[i]));
            }
            row
        })
    });
    write_csv(job.out, &headers, rows)?;
    Ok(Outcome::Clean)
}
