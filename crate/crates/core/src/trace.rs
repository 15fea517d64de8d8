//! Execution traces and their line-delimited JSON encoding.
//!
//! A trace file starts with one header line followed by one [`SlotRecord`]
//! per line, in slot order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;

pub const TRACE_FORMAT: &str = "beepmis-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    In,
    Out,
}

/// Estimation-interval verdict on the effective degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    High,
    Low,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Estimation,
    Marking,
    Final,
    /// A whole LOCAL-model round.
    Round,
}

/// How much per-node state a trace keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verbosity {
    /// Every slot, with a snapshot of every active node.
    Full,
    /// Every slot; snapshots only where an estimation interval closed.
    Intervals,
    /// Only slots in which some node decided, without channel activity.
    #[default]
    Decisions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    Slot,
    Round,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub node: NodeId,
    pub decision: Decision,
}

/// Node state after the slot's outcome was processed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub node: NodeId,
    /// Desire level is `2^-desire_exp`.
    pub desire_exp: u32,
    /// Emulated round, 0-based.
    pub round: u64,
    pub phase: Phase,
    pub slot_in_phase: u64,
    /// Listening slots in the current estimation interval.
    pub listened: u64,
    /// Beeps heard in the current estimation interval.
    pub heard: u64,
    /// Own beeps in the current estimation interval.
    pub beeped: u64,
    pub marked: bool,
    /// Set only in the slot that closed an estimation interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<Class>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beepers: Vec<NodeId>,
    /// Listeners that heard at least one beep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub heard: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<DecisionEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<NodeSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub nodes: usize,
    pub unit: TimeUnit,
    pub verbosity: Verbosity,
    pub seed: u64,
    /// Slots (or rounds) actually executed.
    pub slots_run: u64,
    /// True when the run hit its slot cap with undecided nodes left.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<SlotRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty trace file")]
    Empty,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported trace format `{format}` version {version}")]
    Format { format: String, version: u32 },
}

impl Trace {
    pub fn new(nodes: usize, unit: TimeUnit, verbosity: Verbosity, seed: u64) -> Self {
        Self {
            header: TraceHeader {
                format: TRACE_FORMAT.to_owned(),
                version: TRACE_VERSION,
                nodes,
                unit,
                verbosity,
                seed,
                slots_run: 0,
                truncated: false,
            },
            records: Vec::new(),
        }
    }

    /// All decision events with their slot, in trace order.
    pub fn decisions(&self) -> impl Iterator<Item = (u64, DecisionEvent)> + '_ {
        self.records
            .iter()
            .flat_map(|r| r.decisions.iter().map(move |d| (r.slot, *d)))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(first).map_err(|source| TraceError::Json { line: 1, source })?;
        if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
            return Err(TraceError::Format {
                format: header.format,
                version: header.version,
            });
        }
        let records = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|source| TraceError::Json {
                    line: i + 1,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { header, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut t = Trace::new(2, TimeUnit::Slot, Verbosity::Full, 9);
        t.records.push(SlotRecord {
            slot: 0,
            beepers: vec![1],
            heard: vec![0],
            decisions: vec![],
            snapshots: vec![NodeSnapshot {
                node: 0,
                desire_exp: 1,
                round: 0,
                phase: Phase::Estimation,
                slot_in_phase: 0,
                listened: 1,
                heard: 1,
                beeped: 0,
                marked: false,
                class: Some(Class::Low),
            }],
        });
        t.records.push(SlotRecord {
            slot: 3,
            decisions: vec![DecisionEvent {
                node: 1,
                decision: Decision::In,
            }],
            ..Default::default()
        });
        t.header.slots_run = 4;
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(Trace::from_jsonl(&text).unwrap(), t);
        assert_eq!(
            t.decisions().collect::<Vec<_>>(),
            vec![(
                3,
                DecisionEvent {
                    node: 1,
                    decision: Decision::In
                }
            )]
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Trace::from_jsonl(""), Err(TraceError::Empty)));
        let bad = r#"{"format":"other","version":1,"nodes":1,"unit":"slot","verbosity":"full","seed":0,"slots_run":0,"truncated":false}"#;
        assert!(matches!(
            Trace::from_jsonl(bad),
            Err(TraceError::Format { .. })
        ));
        let t = Trace::new(1, TimeUnit::Slot, Verbosity::Full, 0).to_jsonl() + "{not json}\n";
        assert!(matches!(
            Trace::from_jsonl(&t),
            Err(TraceError::Json { line: 2, .. })
        ));
    }
}
