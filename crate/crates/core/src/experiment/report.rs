//! Report assembly and rendering: the three-column table plus the
//! machine-readable `experiment,stream,run,accuracy` lines.

use super::config::ExperimentConfig;
use super::stages::{load_result, Column, StreamRole};
use super::{ExperimentError, PipelineCache};
use crate::classifier::{aggregate_runs, round2, Evaluation, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnReport {
    pub stream: String,
    pub summary: RunSummary,
    pub per_run: Vec<Evaluation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub columns: Vec<ColumnReport>,
}

impl ExperimentReport {
    pub fn column(&self, stream: &str) -> Option<&ColumnReport> {
        self.columns.iter().find(|c| c.stream == stream)
    }

    /// Plain-text table (stream A | stream B | fused) followed by the
    /// machine-readable lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("experiment: {}\n", self.name));
        let header: Vec<&str> = self.columns.iter().map(|c| c.stream.as_str()).collect();
        out.push_str(&header.join(" | "));
        out.push('\n');
        let cells: Vec<String> = self.columns.iter().map(|c| c.summary.formatted()).collect();
        out.push_str(&cells.join(" | "));
        out.push('\n');
        out.push('\n');
        out.push_str("experiment,stream,run,accuracy\n");
        for c in &self.columns {
            for (i, acc) in c.summary.accuracies.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{:.2}\n",
                    self.name,
                    c.stream,
                    i + 1,
                    round2(*acc)
                ));
            }
            out.push_str(&format!(
                "{},{},mean,{:.2}\n",
                self.name,
                c.stream,
                round2(c.summary.mean)
            ));
        }
        out
    }
}

pub(super) fn assemble(
    config: &ExperimentConfig,
    cache: &PipelineCache,
) -> Result<ExperimentReport, ExperimentError> {
    let mut columns = Vec::new();
    for column in [Column::Stream(StreamRole::A), Column::Stream(StreamRole::B), Column::Fused] {
        let mut per_run = Vec::with_capacity(config.runs);
        for run in 0..config.runs {
            per_run.push(load_result(config, cache, column, run)?);
        }
        let accuracies: Vec<f64> = per_run.iter().map(Evaluation::accuracy).collect();
        columns.push(ColumnReport {
            stream: column.id(config),
            summary: aggregate_runs(&accuracies),
            per_run,
        });
    }
    Ok(ExperimentReport { name: config.name.clone(), columns })
}
