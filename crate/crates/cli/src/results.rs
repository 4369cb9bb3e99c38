//! Per-trial metrics and their mean/std aggregation.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const CSV_HEADER: &str = "variant,sweep_value,trial,word_acc,cer";
pub const AGGREGATE_HEADER: &str = "variant,sweep_value,trials,acc_mean,acc_std,cer_mean,cer_std";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub word_acc: f64,
    pub cer: f64,
}

/// Statistics over the trials of one (variant, sweep value) point. The std
/// is the sample standard deviation, 0 for a single trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub sweep_value: f64,
    pub trials: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub cer_mean: f64,
    pub cer_std: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    /// Name of the swept quantity, used as the plot's x label.
    pub sweep: String,
    pub rows: Vec<ResultRow>,
}

/// Identical values give that value and exactly zero spread.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.windows(2).all(|w| w[0] == w[1]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl ResultTable {
    pub fn new(sweep: impl Into<String>) -> Self {
        ResultTable {
            sweep: sweep.into(),
            rows: Vec::new(),
        }
    }

    /// Rejects non-finite metrics and names that would break the CSV.
    pub fn push(&mut self, row: ResultRow) -> Result<(), HarnessError> {
        if ![row.sweep_value, row.word_acc, row.cer].iter().all(|v| v.is_finite()) {
            return Err(HarnessError::Results(format!("non-finite metric in {row:?}")));
        }
        if row.variant.is_empty() || row.variant.contains([',', '\n', '"']) {
            return Err(HarnessError::Results(format!("unusable variant name {:?}", row.variant)));
        }
        self.rows.push(row);
        Ok(())
    }

    /// One row per (variant, sweep value), in order of first appearance.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut keys: Vec<(&str, f64)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|&(v, x)| v == r.variant && x == r.sweep_value) {
                keys.push((&r.variant, r.sweep_value));
            }
        }
        keys.into_iter()
            .map(|(variant, x)| {
                let point: Vec<&ResultRow> =
                    self.rows.iter().filter(|r| r.variant == variant && r.sweep_value == x).collect();
                let acc: Vec<f64> = point.iter().map(|r| r.word_acc).collect();
                let cer: Vec<f64> = point.iter().map(|r| r.cer).collect();
                let (acc_mean, acc_std) = mean_std(&acc);
                let (cer_mean, cer_std) = mean_std(&cer);
                AggregateRow {
                    variant: variant.to_string(),
                    sweep_value: x,
                    trials: point.len(),
                    acc_mean,
                    acc_std,
                    cer_mean,
                    cer_std,
                }
            })
            .collect()
    }

    /// Mean accuracy at one point, if it was measured.
    pub fn mean_accuracy(&self, variant: &str, sweep_value: f64) -> Option<f64> {
        self.aggregate()
            .into_iter()
            .find(|a| a.variant == variant && a.sweep_value == sweep_value)
            .map(|a| a.acc_mean)
    }

    pub fn check_trials(&self, expected: usize) -> Result<(), HarnessError> {
        match self.aggregate().into_iter().find(|a| a.trials != expected) {
            Some(a) => Err(HarnessError::Results(format!(
                "{} at {} has {} trials, expected {expected}",
                a.variant, a.sweep_value, a.trials
            ))),
            None => Ok(()),
        }
    }

    /// Floats use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.variant, r.sweep_value, r.trial, r.word_acc, r.cer);
        }
        out
    }

    pub fn from_csv(sweep: impl Into<String>, text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(HarnessError::Results(format!("CSV header must be {CSV_HEADER:?}")));
        }
        let mut table = ResultTable::new(sweep);
        for (i, line) in lines.enumerate() {
            let bad = |what: &str| HarnessError::Results(format!("line {}: bad {what} in {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("field count"));
            }
            table.push(ResultRow {
                variant: f[0].to_string(),
                sweep_value: f[1].parse().map_err(|_| bad("sweep_value"))?,
                trial: f[2].parse().map_err(|_| bad("trial"))?,
                word_acc: f[3].parse().map_err(|_| bad("word_acc"))?,
                cer: f[4].parse().map_err(|_| bad("cer"))?,
            })?;
        }
        Ok(table)
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = format!("{AGGREGATE_HEADER}\n");
        for a in self.aggregate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                a.variant, a.sweep_value, a.trials, a.acc_mean, a.acc_std, a.cer_mean, a.cer_std
            );
        }
        out
    }

    /// Writes `results.csv`, `aggregate.csv` and `plot.svg` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.to_csv())?;
        std::fs::write(dir.join("aggregate.csv"), self.aggregate_csv())?;
        std::fs::write(dir.join("plot.svg"), crate::plot::emit_plot(self))?;
        Ok(())
    }
}
