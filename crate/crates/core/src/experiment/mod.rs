//! Experiment orchestration: configs in, CSV tables out.
//!
//! Each experiment is a pure function of its [`ExperimentConfig`], including
//! the seed. Parallel work is keyed by seed and work index, never by worker.

mod config;
mod run;

use std::io::Write;
use std::path::Path;

pub use config::{
    DpConfig, Experiment, ExperimentConfig, Level, DEFAULT_SAMPLES, FULL_SAMPLES,
};
pub use run::{fig3, fig4, fig5, noise_check, train, Fig5Curve, NoiseCheck};

use crate::error::{Error, Result};

/// Numeric result table with a fixed header per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub(crate) fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, row: Vec<f64>) -> Result<()> {
        debug_assert_eq!(row.len(), self.columns.len());
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite result value {v}")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Writes the table as CSV. Floats use the shortest representation that
    /// parses back to the same value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::from(e).context(format!("cannot create {}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let out = match cfg.experiment {
        Experiment::Fig3 => fig3(cfg),
        Experiment::Fig4 => fig4(cfg),
        Experiment::Fig5 => fig5(cfg).and_then(|curves| run::fig5_table(&curves)),
        Experiment::Train => train(cfg),
        Experiment::NoiseCheck => noise_check(cfg).and_then(|n| n.table()),
    };
    out.map_err(|e| e.context(format!("{} experiment", cfg.experiment)))
}
