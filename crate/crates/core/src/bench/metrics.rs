use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::RoundReport;

/// One JSONL row. Every experiment kind emits this same shape; fields that
/// do not apply are `null` or empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub kind: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub arm: String,
    pub seed: u64,
    pub round: usize,
    pub mean_accuracy: f64,
    /// Accuracy per evaluation domain, keyed `d<id>`.
    pub domain_accuracy: BTreeMap<String, f64>,
    pub learning_rate: Option<f64>,
    pub distill_loss_first: Option<f64>,
    pub distill_loss_last: Option<f64>,
    pub teacher_weights: Option<Vec<f64>>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub projection_bytes: u64,
    /// Kind-specific scalars.
    pub extra: BTreeMap<String, f64>,
    pub wall_time_ms: f64,
}

/// Identity fields shared by every row of one experiment run.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordContext {
    pub experiment: String,
    pub kind: String,
    pub config_hash: String,
    pub dataset_hash: String,
}

pub fn domain_key(domain: usize) -> String {
    format!("d{domain}")
}

impl MetricsRecord {
    pub fn blank(ctx: &RecordContext, arm: impl Into<String>, seed: u64, round: usize) -> Self {
        Self {
            experiment: ctx.experiment.clone(),
            kind: ctx.kind.clone(),
            config_hash: ctx.config_hash.clone(),
            dataset_hash: ctx.dataset_hash.clone(),
            arm: arm.into(),
            seed,
            round,
            mean_accuracy: 0.0,
            domain_accuracy: BTreeMap::new(),
            learning_rate: None,
            distill_loss_first: None,
            distill_loss_last: None,
            teacher_weights: None,
            bytes_up: 0,
            bytes_down: 0,
            projection_bytes: 0,
            extra: BTreeMap::new(),
            wall_time_ms: 0.0,
        }
    }

    pub fn from_round(ctx: &RecordContext, arm: impl Into<String>, seed: u64, r: &RoundReport) -> Self {
        let mut rec = Self::blank(ctx, arm, seed, r.round);
        rec.mean_accuracy = r.mean_accuracy;
        rec.domain_accuracy = r
            .domain_accuracy
            .iter()
            .map(|d| (domain_key(d.domain), d.accuracy))
            .collect();
        rec.learning_rate = Some(r.learning_rate);
        if let Some(d) = &r.distill {
            rec.distill_loss_first = d.losses.first().copied();
            rec.distill_loss_last = d.losses.last().copied();
            rec.teacher_weights = Some(d.mean_weights.clone());
        }
        rec.bytes_up = r.bytes_up;
        rec.bytes_down = r.bytes_down;
        rec.projection_bytes = r.projection_bytes;
        rec.wall_time_ms = r.wall_time_ms;
        rec
    }
}

/// Labelled rows of numbers, written as CSV and printed as a table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SummaryTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl SummaryTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push((label.into(), values));
    }

    pub fn get(&self, label: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|(l, _)| l == label).map(|(_, v)| v[c])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut header = vec!["row".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Config(e.to_string()))?;
        for (label, values) in &self.rows {
            let mut rec = vec![label.clone()];
            rec.extend(values.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec).map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(3).max(3);
        let col_w: Vec<usize> = self.columns.iter().map(|c| c.len().max(8)).collect();
        let mut out = format!("{:width$}", "");
        for (c, w) in self.columns.iter().zip(&col_w) {
            out += &format!("  {c:>w$}");
        }
        out.push('\n');
        for (label, values) in &self.rows {
            out += &format!("{label:width$}");
            for (v, w) in values.iter().zip(&col_w) {
                out += &format!("  {v:>w$.4}");
            }
            out.push('\n');
        }
        out
    }
}

/// Writes rows to `<dir>/metrics.jsonl` (appending) and keeps them in memory.
#[derive(Debug)]
pub struct MetricsSink {
    dir: Option<PathBuf>,
    jsonl: Option<BufWriter<File>>,
    records: Vec<MetricsRecord>,
}

impl MetricsSink {
    /// In-memory only.
    pub fn memory() -> Self {
        Self {
            dir: None,
            jsonl: None,
            records: Vec::new(),
        }
    }

    pub fn to_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("metrics.jsonl"))?;
        Ok(Self {
            dir: Some(dir),
            jsonl: Some(BufWriter::new(file)),
            records: Vec::new(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn push(&mut self, rec: MetricsRecord) -> Result<()> {
        if let Some(w) = &mut self.jsonl {
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    /// Flushes the JSONL stream and writes `summary.csv` next to it.
    pub fn finish(mut self, summary: &SummaryTable) -> Result<Vec<MetricsRecord>> {
        if let Some(w) = &mut self.jsonl {
            w.flush()?;
        }
        if let Some(dir) = &self.dir {
            summary.write_csv(&dir.join("summary.csv"))?;
        }
        Ok(self.records)
    }
}
