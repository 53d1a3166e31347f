//! Per-iteration solver records and their CSV / JSON-lines exports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dist::protocol::Message;
use crate::error::Result;

pub const TRACE_CSV_HEADER: &str = "iter,objective,primal_residual,dual_residual,dual_norm,ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Full objective of the recovered primal, evaluated by the harness.
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub dual_norm: f64,
    /// Elapsed wall time; only recorded when timing is enabled.
    pub ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveTrace {
    pub solver: String,
    pub records: Vec<IterRecord>,
    pub transcript: Vec<Message>,
}

impl SolveTrace {
    pub fn new(solver: impl Into<String>) -> Self {
        Self {
            solver: solver.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, rec: IterRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.iter < rec.iter));
        self.records.push(rec);
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn last_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    /// First iteration whose objective is within `gap` (relative) of `optimum`.
    pub fn iterations_to_gap(&self, optimum: f64, gap: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| relative_gap(r.objective, optimum) <= gap)
            .map(|r| r.iter)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            let ms = r.ms.map(|v| format!("{v:.3}")).unwrap_or_default();
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{}",
                r.iter, r.objective, r.primal_residual, r.dual_residual, r.dual_norm, ms
            )?;
        }
        Ok(())
    }

    pub fn write_transcript_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for m in &self.transcript {
            serde_json::to_writer(&mut w, m)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn relative_gap(value: f64, optimum: f64) -> f64 {
    (value - optimum).abs() / optimum.abs().max(f64::MIN_POSITIVE)
}
