use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::norms::{write_rows, HolderRow};

use super::config::{ExperimentConfig, ExperimentKind};

/// One measured quantity; the canonical CSV has one line per row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub level: usize,
    pub grid_id: String,
    pub quantity: String,
    /// Sweep parameter (α, δ, iteration, draw, ...) or empty.
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub salt: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    /// Set when the check holds for a degenerate reason (all-zero data, 0/0).
    pub trivial: bool,
    pub detail: String,
}

/// Long-format plot data: one `(series, level, x, value)` tuple per point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub series: String,
    pub level: usize,
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub invocation: BTreeMap<String, String>,
    pub rows: Vec<StudyRow>,
    pub holder: Vec<HolderRow>,
    pub verdicts: Vec<Verdict>,
    pub plot: Vec<PlotRow>,
    pub wall_clock_s: f64,
    pub code_version: String,
}

impl StudyReport {
    pub(crate) fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment,
            config: config.clone(),
            invocation: BTreeMap::new(),
            rows: Vec::new(),
            holder: Vec::new(),
            verdicts: Vec::new(),
            plot: Vec::new(),
            wall_clock_s: 0.0,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub(crate) fn row(&mut self, level: usize, grid_id: &str, quantity: &str, param: impl ToString, value: f64) {
        self.rows.push(StudyRow {
            level,
            grid_id: grid_id.to_string(),
            quantity: quantity.to_string(),
            param: param.to_string(),
            value,
            seed: self.config.ensemble.seed,
            salt: self.config.ensemble.salt,
        });
    }

    pub(crate) fn point(&mut self, series: &str, level: usize, x: f64, value: f64) {
        self.plot.push(PlotRow {
            series: series.to_string(),
            level,
            x,
            value,
        });
    }

    pub(crate) fn verdict(&mut self, criterion: &str, passed: bool, trivial: bool, detail: String) {
        self.verdicts.push(Verdict {
            criterion: criterion.to_string(),
            passed,
            trivial,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.passed).collect()
    }

    pub fn verdict_named(&self, criterion: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.criterion == criterion)
    }

    /// Values of `quantity` in row order.
    pub fn values(&self, quantity: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.quantity == quantity).map(|r| r.value).collect()
    }

    /// Canonical results CSV: `level,grid_id,quantity,param,value,seed,salt`.
    pub fn results_csv(&self) -> Result<Vec<u8>> {
        to_csv(&self.rows)
    }

    pub fn holder_csv(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_rows(&self.holder, &mut out)?;
        Ok(out)
    }

    pub fn verdicts_csv(&self) -> Result<Vec<u8>> {
        to_csv(&self.verdicts)
    }

    pub fn plot_csv(&self) -> Result<Vec<u8>> {
        to_csv(&self.plot)
    }

    /// Writes `<experiment>_{results,holder,verdicts}.csv`, `<experiment>_report.json`
    /// and, with `plot`, `<experiment>_plot.csv` into `dir`.
    pub fn write(&self, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let name = self.experiment.name();
        let mut files = vec![
            (format!("{name}_results.csv"), self.results_csv()?),
            (format!("{name}_holder.csv"), self.holder_csv()?),
            (format!("{name}_verdicts.csv"), self.verdicts_csv()?),
            (format!("{name}_report.json"), serde_json::to_vec_pretty(self)?),
        ];
        if plot {
            files.push((format!("{name}_plot.csv"), self.plot_csv()?));
        }
        let mut written = Vec::new();
        for (file, bytes) in files {
            let path = dir.join(file);
            fs::File::create(&path)?.write_all(&bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}
