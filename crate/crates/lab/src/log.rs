//! Per-epoch CSV training log.

use std::fs::File;
use std::path::Path;

use algd_core::train::EpochRecord;
use anyhow::{ensure, Context, Result};

pub const LOG_HEADER: [&str; 11] = [
    "epoch",
    "env_steps",
    "train_return",
    "train_episode_cost",
    "eval_return",
    "eval_episode_cost",
    "lambda",
    "score_loss",
    "q_loss",
    "qc_loss",
    "mean_ess",
];

/// Nine significant digits in scientific notation.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

pub fn record_fields(r: &EpochRecord) -> [String; 11] {
    [
        r.epoch.to_string(),
        r.env_steps.to_string(),
        fmt_opt(r.train_return),
        fmt_opt(r.train_episode_cost),
        fmt_opt(r.eval_return),
        fmt_opt(r.eval_episode_cost),
        fmt_real(r.lambda),
        fmt_opt(r.score_loss),
        fmt_opt(r.q_loss),
        fmt_opt(r.qc_loss),
        fmt_opt(r.mean_ess),
    ]
}

/// Appends rows to a CSV log, flushing after each one.
pub struct LogWriter {
    inner: csv::Writer<File>,
}

impl LogWriter {
    /// Creates (truncates) the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating log {}", path.display()))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(LOG_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, row: &EpochRecord) -> Result<()> {
        self.inner.write_record(record_fields(row))?;
        self.inner.flush().context("flushing log row")?;
        Ok(())
    }
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading log {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    ensure!(header == LOG_HEADER, "unexpected log header {header:?}");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let opt = |i: usize| -> Result<Option<f64>> {
            let f = &rec[i];
            Ok(if f.is_empty() { None } else { Some(f.parse()?) })
        };
        out.push(EpochRecord {
            epoch: rec[0].parse()?,
            env_steps: rec[1].parse()?,
            train_return: opt(2)?,
            train_episode_cost: opt(3)?,
            eval_return: opt(4)?,
            eval_episode_cost: opt(5)?,
            lambda: rec[6].parse()?,
            score_loss: opt(7)?,
            q_loss: opt(8)?,
            qc_loss: opt(9)?,
            mean_ess: opt(10)?,
        });
    }
    Ok(out)
}

/// Writes a numeric table as CSV.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| fmt_real(*x)))?;
    }
    w.flush()?;
    Ok(())
}
