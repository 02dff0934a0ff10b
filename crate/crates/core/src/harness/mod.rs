//! Config-driven runs: each command evaluates stages, collects CSV tables in
//! memory and writes them with `report.json` from one place.

mod config;
mod report;
mod stages;

use std::path::{Path, PathBuf};

pub use config::{ChartConfig, FormName, GridConfig, Numerics, RunConfig, SymbolConfig};
pub use report::{Metadata, Report, Residual, StageVerdict, Status};

use crate::bergman::BergmanSpace;
use crate::foliation::Lattice;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// A finished run: the report plus the CSV files it cites.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    fn new(command: &str, config: &RunConfig, stages: Vec<StageVerdict>, files: Vec<(String, Vec<u8>)>) -> Self {
        let names = files.iter().map(|(n, _)| n.clone()).collect();
        Self {
            report: Report::new(command, config, stages, names),
            files,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            0
        } else {
            1
        }
    }

    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes every CSV and `report.json` into `dir`; returns the report path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes).map_err(io)?;
        }
        let path = dir.join("report.json");
        std::fs::write(&path, self.report_json()).map_err(io)?;
        Ok(path)
    }
}

fn lattice_points(config: &RunConfig) -> Result<(Lattice, Vec<Vec<f64>>), HarnessError> {
    let chart = config.chart()?;
    let lattice = Lattice::covering(&chart, config.grids.lattice_nodes_for(chart.n()));
    let points = lattice.points_in(&chart);
    Ok((lattice, points))
}

/// Pairwise Poisson brackets over the lattice, with Jacobi and
/// field-bracket spot checks.
pub fn run_bracket(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    let chart = config.chart()?;
    let family = config.family()?;
    let (_, points) = lattice_points(config)?;
    let mut stage = stages::poisson(&chart, &family, &points, config.numerics.tau_comm);
    if let serde_json::Value::Object(map) = &mut stage.data {
        map.insert(
            "spot_checks".into(),
            stages::spot_checks(&chart, &family, &points, config.numerics.fd_step),
        );
    }
    Ok(RunOutput::new("bracket", config, vec![stage], Vec::new()))
}

/// Traces leaves through the configured (or default regular) base points.
pub fn run_foliate(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    let chart = config.chart()?;
    let family = config.family()?;
    let (_, points) = lattice_points(config)?;
    let (stage, files) = stages::foliation(&chart, &family, config, &points);
    Ok(RunOutput::new("foliate", config, vec![stage], files))
}

fn require_disk(config: &RunConfig, command: &str) -> Result<(), HarnessError> {
    if !config.is_disk() {
        return Err(HarnessError::Config(format!(
            "{command} needs the disk chart with n = 1"
        )));
    }
    Ok(())
}

/// Toeplitz matrices of every symbol at every `h`, their pairwise
/// commutator norms and Wick symbols at the configured samples.
pub fn run_toeplitz(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    require_disk(config, "toeplitz")?;
    let symbols = config.disk_symbols()?;
    let (stage, files) = stages::toeplitz(config, &symbols);
    Ok(RunOutput::new("toeplitz", config, vec![stage], files))
}

/// Commutator norms of a pair of symbols along `h_list` and their slope.
pub fn run_berezin_scan(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    require_disk(config, "berezin-scan")?;
    if config.symbols.len() != 2 || config.has_complex_symbols() {
        return Err(HarnessError::Config("berezin-scan needs exactly two real symbols".into()));
    }
    let h = &config.numerics.h_list;
    if h.len() < 3 || h.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HarnessError::Config("berezin-scan needs at least three strictly decreasing h values".into()));
    }
    let chart = config.chart()?;
    let family = config.family()?;
    let (_, points) = lattice_points(config)?;
    let (stage, files) = stages::correspondence(&chart, &family, config, &points);
    Ok(RunOutput::new("berezin-scan", config, vec![stage], files))
}

/// The four stages in order: operator commutativity, richness, Poisson
/// commutativity, foliation.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    if config.has_complex_symbols() {
        return Err(HarnessError::Config("pipeline symbols must be real".into()));
    }
    let chart = config.chart()?;
    let family = config.family()?;
    let (lattice, points) = lattice_points(config)?;
    let mut files = Vec::new();

    let operator = if config.is_disk() {
        let (stage, csv) = stages::operator_commutativity(&family, config);
        files.extend(csv);
        stage
    } else {
        StageVerdict::skipped(
            stages::OPERATOR,
            "operator stage skipped: Bergman operators need the disk chart with n = 1",
        )
    };
    let richness = stages::richness(&chart, &family, &lattice, &points, config);
    let poisson = stages::poisson(&chart, &family, &points, config.numerics.tau_comm);
    let (foliation, leaf_files) = stages::foliation(&chart, &family, config, &points);
    files.extend(leaf_files);
    Ok(RunOutput::new(
        "pipeline",
        config,
        vec![operator, richness, poisson, foliation],
        files,
    ))
}

/// Degree the configured truncation gives at `h`, with the space it builds.
pub fn space_for(config: &RunConfig, h: f64) -> Result<BergmanSpace, HarnessError> {
    BergmanSpace::new(h, config.numerics.truncation.degree(h)).map_err(|e| HarnessError::Config(e.to_string()))
}
