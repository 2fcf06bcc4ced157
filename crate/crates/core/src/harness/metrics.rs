use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "env_step,episode,eval_success_rate,eval_return,mean_reachability,high_actor_loss,high_critic_loss,low_actor_loss,low_critic_loss";

/// One evaluation point. Loss columns are means over the updates since the
/// previous row (NaN before the first update).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_step: u64,
    pub episode: u64,
    pub eval_success_rate: f64,
    pub eval_return: f64,
    pub mean_reachability: f64,
    pub high_actor_loss: f64,
    pub high_critic_loss: f64,
    pub low_actor_loss: f64,
    pub low_critic_loss: f64,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.env_step,
            self.episode,
            self.eval_success_rate,
            self.eval_return,
            self.mean_reachability,
            self.high_actor_loss,
            self.high_critic_loss,
            self.low_actor_loss,
            self.low_critic_loss
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 9 {
            return Err(Error::contract(format!("metrics line has {} fields, expected 9", f.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| Error::contract(format!("bad integer {s:?}: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| Error::contract(format!("bad number {s:?}: {e}")));
        Ok(MetricsRow {
            env_step: int(f[0])?,
            episode: int(f[1])?,
            eval_success_rate: real(f[2])?,
            eval_return: real(f[3])?,
            mean_reachability: real(f[4])?,
            high_actor_loss: real(f[5])?,
            high_critic_loss: real(f[6])?,
            low_actor_loss: real(f[7])?,
            low_critic_loss: real(f[8])?,
        })
    }
}

/// Receives metrics rows (and optionally checkpoints) from a training run.
pub trait MetricsSink {
    fn emit(&mut self, row: &MetricsRow) -> Result<()>;
}

/// Collects rows in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub rows: Vec<MetricsRow>,
}

impl MetricsSink for MemorySink {
    fn emit(&mut self, row: &MetricsRow) -> Result<()> {
        self.rows.push(*row);
        Ok(())
    }
}

/// CSV file with the fixed header, flushed after every row.
pub struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
    last_step: Option<u64>,
}

impl CsvSink {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
        Ok(CsvSink {
            path,
            out,
            last_step: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl MetricsSink for CsvSink {
    fn emit(&mut self, row: &MetricsRow) -> Result<()> {
        if self.last_step.is_some_and(|s| row.env_step < s) {
            return Err(Error::contract("metrics rows must have non-decreasing env_step"));
        }
        if !(0.0..=1.0).contains(&row.eval_success_rate) {
            return Err(Error::contract("success rate outside [0, 1]"));
        }
        self.last_step = Some(row.env_step);
        writeln!(self.out, "{}", row.to_csv_line()).map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads a metrics file written by [`CsvSink`].
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => return Err(Error::contract(format!("{} does not start with the metrics header", path.display()))),
    }
    lines.filter(|l| !l.is_empty()).map(MetricsRow::parse_csv_line).collect()
}
