use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::batch::{Aggregate, SCHEMA_VERSION};
use super::ExperimentError;

/// One row of the cross-run table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub source: PathBuf,
    pub eps: f64,
    pub delta: usize,
    pub interval: u64,
    pub rounds: u64,
    pub trials: usize,
    pub violation_rate: f64,
    pub median_decision_slot: Option<u64>,
    pub fraction_within_budget: f64,
}

fn read_aggregate(path: &Path) -> Result<Aggregate, ExperimentError> {
    // A directory means its aggregate.json.
    let file = if path.is_dir() {
        path.join("aggregate.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).map_err(|source| ExperimentError::Io {
        path: file.clone(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text)?;
    let found = value
        .get("schema_version")
        .and_then(Value::as_u64)
        .unwrap_or(0);
    if found != u64::from(SCHEMA_VERSION) {
        return Err(ExperimentError::Schema {
            path: file,
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(serde_json::from_value(value)?)
}

/// Reads aggregate files (or result directories) and tabulates them, sorted
/// by `(eps, delta)`.
pub fn summarize<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<SummaryRow>, ExperimentError> {
    if paths.is_empty() {
        return Err(ExperimentError::NoInputs);
    }
    let mut rows = paths
        .iter()
        .map(|p| {
            let a = read_aggregate(p.as_ref())?;
            Ok(SummaryRow {
                source: p.as_ref().to_path_buf(),
                eps: a.eps,
                delta: a.delta,
                interval: a.interval,
                rounds: a.rounds,
                trials: a.completed,
                violation_rate: a.violation_rate,
                median_decision_slot: a.median_decision_slot,
                fraction_within_budget: a.fraction_within_budget,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    rows.sort_by(|a, b| a.eps.total_cmp(&b.eps).then(a.delta.cmp(&b.delta)));
    Ok(rows)
}

pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:>6} {:>6} {:>8} {:>8} {:>7} {:>10} {:>12} {:>10}  {}\n",
        "eps", "delta", "I", "R", "trials", "viol_rate", "median_slot", "in_budget", "source"
    );
    for r in rows {
        let median = r
            .median_decision_slot
            .map_or_else(|| "-".to_string(), |m| m.to_string());
        out.push_str(&format!(
            "{:>6} {:>6} {:>8} {:>8} {:>7} {:>10.4} {:>12} {:>10.4}  {}\n",
            r.eps,
            r.delta,
            r.interval,
            r.rounds,
            r.trials,
            r.violation_rate,
            median,
            r.fraction_within_budget,
            r.source.display()
        ));
    }
    out
}
