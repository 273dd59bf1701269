use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{compute_metrics, human_fraction, CollabMetrics, MetricsError};
use crate::session::SessionMode;
use crate::store::Trajectory;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("no trajectories to aggregate")]
    EmptySet,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Mean metrics for one (mode, backbone) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub mode: SessionMode,
    pub backbone: Option<String>,
    /// Run count; zero for hand-entered reference rows.
    #[serde(default)]
    pub n: usize,
    pub accuracy: f64,
    pub agent_steps: f64,
    pub human_steps: f64,
    pub total_steps: f64,
    pub interventions: Option<f64>,
    pub agent_driven: Option<f64>,
}

impl AggregateRow {
    pub fn human_fraction(&self) -> Option<f64> {
        human_fraction(self.human_steps, self.total_steps)
    }

    /// Checks the relations every row must satisfy, allowing `tol` for
    /// rounding in published or hand-entered figures.
    pub fn check_consistency(&self, tol: f64) -> Result<(), String> {
        let sum = self.agent_steps + self.human_steps;
        if (sum - self.total_steps).abs() > tol {
            return Err(format!(
                "agent {} + human {} != total {}",
                self.agent_steps, self.human_steps, self.total_steps
            ));
        }
        if let Some(d) = self.agent_driven {
            if d > self.accuracy + tol {
                return Err(format!("agent-driven {d} exceeds accuracy {}", self.accuracy));
            }
        }
        match self.mode {
            SessionMode::FullyAutonomous => {
                if self.human_steps.abs() > tol || self.interventions.is_some_and(|i| i.abs() > tol) {
                    return Err("autonomous row has human activity".into());
                }
                if self.agent_driven.is_some_and(|d| (d - self.accuracy).abs() > tol) {
                    return Err("autonomous agent-driven differs from accuracy".into());
                }
            }
            SessionMode::HumanOnly => {
                if self.agent_steps.abs() > tol || self.interventions.is_some() || self.agent_driven.is_some() {
                    return Err("human-only row has agent columns".into());
                }
            }
            SessionMode::Copilot => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub rows: Vec<AggregateRow>,
}

impl AggregateReport {
    pub fn row(&self, mode: SessionMode, backbone: Option<&str>) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.mode == mode && r.backbone.as_deref() == backbone)
    }

    pub fn total_runs(&self) -> usize {
        self.rows.iter().map(|r| r.n).sum()
    }
}

fn mode_rank(m: SessionMode) -> u8 {
    match m {
        SessionMode::FullyAutonomous => 0,
        SessionMode::Copilot => 1,
        SessionMode::HumanOnly => 2,
    }
}

/// Groups by (mode, model) and averages each group.
pub fn aggregate<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> Result<AggregateReport, AggregateError> {
    let mut groups: BTreeMap<(u8, Option<String>), (SessionMode, Vec<CollabMetrics>)> = BTreeMap::new();
    for t in trajectories {
        let m = compute_metrics(t)?;
        let backbone = if t.mode == SessionMode::HumanOnly { None } else { t.model_id.clone() };
        groups.entry((mode_rank(t.mode), backbone)).or_insert_with(|| (t.mode, Vec::new())).1.push(m);
    }
    if groups.is_empty() {
        return Err(AggregateError::EmptySet);
    }
    let rows = groups
        .into_iter()
        .map(|((_, backbone), (mode, ms))| {
            let n = ms.len() as f64;
            let mean = |f: &dyn Fn(&CollabMetrics) -> f64| ms.iter().map(f).sum::<f64>() / n;
            let optional = |f: &dyn Fn(&CollabMetrics) -> Option<f64>| {
                let vals: Option<Vec<f64>> = ms.iter().map(f).collect();
                vals.map(|v| v.iter().sum::<f64>() / n)
            };
            AggregateRow {
                mode,
                backbone,
                n: ms.len(),
                accuracy: mean(&|m| m.task_success as u8 as f64),
                agent_steps: mean(&|m| m.agent_step_count as f64),
                human_steps: mean(&|m| m.human_step_count as f64),
                total_steps: mean(&|m| m.total_step_count as f64),
                interventions: optional(&|m| m.human_intervention_count.map(|c| c as f64)),
                agent_driven: optional(&|m| m.agent_driven_completion.map(|d| d as u8 as f64)),
            }
        })
        .collect();
    Ok(AggregateReport { schema_version: REPORT_SCHEMA_VERSION, rows })
}

const HEADERS: [&str; 8] = ["Mode", "Backbone", "Accuracy", "Agent", "Human", "Total", "Interventions", "Agent-driven"];

fn table(rows: &[[String; 8]], first_header: &str) -> String {
    let mut headers = HEADERS.map(str::to_string);
    headers[0] = first_header.to_string();
    let widths: Vec<usize> =
        (0..8).map(|i| rows.iter().map(|r| r[i].len()).chain([headers[i].len()]).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String; 8]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i < 2 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &headers);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for r in rows {
        line(&mut out, r);
    }
    out
}

fn opt2(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.2}"))
}

/// Text table with one row per (mode, backbone) group.
pub fn render_table(report: &AggregateReport) -> String {
    let rows: Vec<[String; 8]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.mode.as_str().to_string(),
                r.backbone.clone().unwrap_or_else(|| "-".into()),
                format!("{:.2}", r.accuracy),
                format!("{:.2}", r.agent_steps),
                format!("{:.2}", r.human_steps),
                format!("{:.2}", r.total_steps),
                opt2(r.interventions),
                opt2(r.agent_driven),
            ]
        })
        .collect();
    table(&rows, "Mode")
}

/// Text table with one row per trajectory. Step counts are integers here;
/// fractions only appear in aggregates.
pub fn render_trajectory_table(items: &[(&Trajectory, CollabMetrics)]) -> String {
    let rows: Vec<[String; 8]> = items
        .iter()
        .map(|(t, m)| {
            [
                format!("{} ({})", t.trajectory_id, t.mode.as_str()),
                t.model_id.clone().unwrap_or_else(|| "-".into()),
                if m.task_success { "success" } else { "failure" }.into(),
                m.agent_step_count.to_string(),
                m.human_step_count.to_string(),
                m.total_step_count.to_string(),
                m.human_intervention_count.map_or("-".into(), |c| c.to_string()),
                m.agent_driven_completion.map_or("-".into(), |d| if d { "yes" } else { "no" }.into()),
            ]
        })
        .collect();
    table(&rows, "Trajectory")
}

pub fn render_json(report: &AggregateReport) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize")
}
