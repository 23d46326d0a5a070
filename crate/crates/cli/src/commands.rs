//! The `run`, `plot` and `oracle` commands.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fedpne::harness::{
    aggregate_runs, communication_check, cumulative_regret, estimate_fstar, grid_extrema,
    run_experiment, run_grid_baseline, CommCheck, HarnessError, RunTrace,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{
    Algorithm, ConfigError, ExperimentConfig, ObjectiveName, ObjectiveSection, RawConfig,
};
use crate::emit::{read_summary, write_comm, write_summary, write_trace, EmitError};
use crate::plot::{render_svg, Series};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run failed for seed {seed}: {source}")]
    Run { seed: u64, source: HarnessError },
    #[error("{0}")]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Emit { path: PathBuf, source: EmitError },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no summary.csv found under {0}")]
    NoSummaries(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit_to<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(BufWriter<File>) -> Result<(), EmitError>,
{
    let file = File::create(path).map_err(io_err(path))?;
    write(BufWriter::new(file)).map_err(|source| CliError::Emit {
        path: path.to_path_buf(),
        source,
    })
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub algorithm: Option<Algorithm>,
    pub preset: Option<crate::config::Preset>,
}

impl RunOverrides {
    pub fn apply(&self, mut raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
        if let Some(seed) = self.seed {
            raw.seeds = Some(vec![seed]);
        }
        if let Some(out) = &self.out {
            raw.output.dir = out.clone();
        }
        if let Some(algorithm) = self.algorithm {
            raw.algorithm = Some(algorithm);
            raw.dp.enabled = algorithm == Algorithm::DpFedpne;
        }
        if let Some(preset) = self.preset {
            raw.preset = Some(preset);
        }
        raw.resolve()
    }
}

#[derive(Debug, Clone)]
pub struct SeedReport {
    pub seed: u64,
    pub phases: usize,
    pub comm_events: usize,
    pub final_average_regret: f64,
    pub comm: CommCheck,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub fstar: f64,
    pub seeds: Vec<SeedReport>,
}

pub fn trace_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("trace_seed{seed}.csv"))
}

pub fn comm_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("comm_seed{seed}.csv"))
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_ECHO: &str = "config.resolved.toml";

/// Runs every seed, writes per-seed traces and the aggregate summary.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let echo = dir.join(CONFIG_ECHO);
    std::fs::write(&echo, cfg.to_toml()).map_err(io_err(&echo))?;

    let setup = cfg.setup()?;
    let traces: Vec<RunTrace> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let trace = match cfg.algorithm {
                Algorithm::GridBaseline => run_grid_baseline(&setup, cfg.grid_arms, seed),
                _ => run_experiment(&setup, seed),
            };
            trace.map_err(|source| CliError::Run { seed, source })
        })
        .collect::<Result<_, _>>()?;

    traces.par_iter().try_for_each(|t| {
        emit_to(&trace_path(&dir, t.seed), |w| write_trace(t, w))?;
        emit_to(&comm_path(&dir, t.seed), |w| write_comm(t, w))
    })?;
    let band = aggregate_runs(&traces, setup.fstar, &setup.objective)?;
    emit_to(&dir.join(SUMMARY_FILE), |w| write_summary(&band, w))?;

    let seeds = traces
        .iter()
        .map(|t| {
            let regret = cumulative_regret(t, setup.fstar, &setup.objective);
            SeedReport {
                seed: t.seed,
                phases: t.phases.len(),
                comm_events: t.comms.len(),
                final_average_regret: regret.final_average(),
                comm: communication_check(t, &t.server),
            }
        })
        .collect();
    Ok(RunReport {
        out_dir: dir,
        fstar: setup.fstar,
        seeds,
    })
}

fn summary_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    if dir.join(SUMMARY_FILE).is_file() {
        found.push(dir.join(SUMMARY_FILE));
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    found.extend(
        subdirs
            .into_iter()
            .map(|d| d.join(SUMMARY_FILE))
            .filter(|p| p.is_file()),
    );
    Ok(found)
}

fn series_label(summary: &Path) -> (String, Option<ExperimentConfig>) {
    let dir = summary.parent().unwrap_or(Path::new("."));
    let cfg = std::fs::read_to_string(dir.join(CONFIG_ECHO))
        .ok()
        .and_then(|text| toml::from_str::<ExperimentConfig>(&text).ok());
    let label = match &cfg {
        Some(c) if c.algorithm == Algorithm::Fedpne => format!("M={}", c.clients),
        Some(c) => format!("{} M={}", c.algorithm, c.clients),
        None => dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into()),
    };
    (label, cfg)
}

/// Plots every `summary.csv` in `input` and its immediate subdirectories.
/// Returns the number of series drawn.
pub fn plot(input: &Path, out: &Path) -> Result<usize, CliError> {
    let files = summary_files(input)?;
    if files.is_empty() {
        return Err(CliError::NoSummaries(input.to_path_buf()));
    }
    let mut series = Vec::with_capacity(files.len());
    let mut objectives = Vec::new();
    for path in &files {
        let file = File::open(path).map_err(io_err(path))?;
        let band = read_summary(file).map_err(|source| CliError::Emit {
            path: path.clone(),
            source,
        })?;
        let (label, cfg) = series_label(path);
        let key = cfg.as_ref().map(|c| (c.algorithm.to_string(), c.clients));
        if let Some(c) = cfg {
            objectives.push(format!("{:?}", c.objective.name).to_lowercase());
        }
        series.push((key, Series { label, band }));
    }
    series.sort_by(|a, b| a.0.cmp(&b.0));
    objectives.dedup();
    let title = match objectives.as_slice() {
        [one] => format!("{one}: average cumulative regret"),
        _ => "average cumulative regret".to_string(),
    };
    let series: Vec<Series> = series.into_iter().map(|(_, s)| s).collect();
    let svg = render_svg(&series, &title);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(out, svg).map_err(io_err(out))?;
    Ok(series.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub fstar: f64,
    pub argmax: Vec<f64>,
    pub min: f64,
    pub argmin: Vec<f64>,
}

/// Dense-grid optimum of a named objective with default parameters.
pub fn oracle(
    name: ObjectiveName,
    resolution: usize,
    normalized: bool,
) -> Result<OracleReport, CliError> {
    let section = ObjectiveSection {
        name,
        normalize: normalized,
        resolution: Some(resolution),
        ..ObjectiveSection::default()
    };
    let raw = section.raw_objective()?;
    let objective = if normalized {
        fedpne::objectives::normalize_objective(&raw, resolution)
            .map_err(|e| ConfigError::Build(e.to_string()))?
    } else {
        raw
    };
    let extrema = grid_extrema(&objective, resolution).map_err(HarnessError::from)?;
    let (fstar, argmax) = estimate_fstar(&objective, resolution).map_err(HarnessError::from)?;
    Ok(OracleReport {
        fstar,
        argmax,
        min: extrema.min,
        argmin: extrema.argmin,
    })
}
