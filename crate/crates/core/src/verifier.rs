//! Output checks against MIS correctness and termination statistics.

use std::collections::{BTreeMap, HashMap};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeId};
use crate::protocol::{sum_desire, DesireLevel, ProtocolParams};
use crate::trace::{Class, Decision, Trace, Verbosity};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("node {node} decided twice (slots {first} and {second})")]
    DuplicateDecision {
        node: NodeId,
        first: u64,
        second: u64,
    },
    #[error("slot {slot} does not follow slot {prev}")]
    SlotOrder { prev: u64, slot: u64 },
    #[error("trace mentions node {node} but the graph has {n} nodes")]
    UnknownNode { node: NodeId, n: usize },
    #[error("trace has {trace} nodes, graph has {graph}")]
    SizeMismatch { trace: usize, graph: usize },
    #[error("trace has no state snapshots (recorded with `{0:?}` verbosity); rerun with `full` or `intervals`")]
    SnapshotsMissing(Verbosity),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    In,
    Out,
    Undecided,
}

impl From<Decision> for Outcome {
    fn from(d: Decision) -> Self {
        match d {
            Decision::In => Outcome::In,
            Decision::Out => Outcome::Out,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeVerdict {
    pub outcome: Outcome,
    /// Slot (or round) of the decision.
    pub slot: Option<u64>,
}

/// Final per-node outcome of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub nodes: Vec<NodeVerdict>,
}

impl Verdict {
    pub fn undecided(n: usize) -> Self {
        Self {
            nodes: vec![
                NodeVerdict {
                    outcome: Outcome::Undecided,
                    slot: None,
                };
                n
            ],
        }
    }

    /// Checks slot order and decision uniqueness, then collects decisions.
    pub fn from_trace(trace: &Trace) -> Result<Self, VerifyError> {
        let n = trace.header.nodes;
        let mut verdict = Self::undecided(n);
        let mut prev: Option<u64> = None;
        for record in &trace.records {
            if let Some(prev) = prev {
                if record.slot <= prev {
                    return Err(VerifyError::SlotOrder {
                        prev,
                        slot: record.slot,
                    });
                }
            }
            prev = Some(record.slot);
            for event in &record.decisions {
                let entry = verdict
                    .nodes
                    .get_mut(event.node)
                    .ok_or(VerifyError::UnknownNode {
                        node: event.node,
                        n,
                    })?;
                if let Some(first) = entry.slot {
                    return Err(VerifyError::DuplicateDecision {
                        node: event.node,
                        first,
                        second: record.slot,
                    });
                }
                *entry = NodeVerdict {
                    outcome: event.decision.into(),
                    slot: Some(record.slot),
                };
            }
        }
        Ok(verdict)
    }

    pub fn outcome(&self, v: NodeId) -> Outcome {
        self.nodes[v].outcome
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.nodes.iter().filter(|n| n.outcome == outcome).count()
    }
}

/// Every edge with both endpoints IN.
pub fn check_independence(g: &Graph, verdict: &Verdict) -> Vec<(NodeId, NodeId)> {
    g.edges()
        .filter(|&(u, v)| verdict.outcome(u) == Outcome::In && verdict.outcome(v) == Outcome::In)
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaximalityReport {
    /// OUT nodes without an IN neighbor.
    pub uncovered: Vec<NodeId>,
    pub undecided: Vec<NodeId>,
}

impl MaximalityReport {
    pub fn is_empty(&self) -> bool {
        self.uncovered.is_empty() && self.undecided.is_empty()
    }
}

pub fn check_maximality(g: &Graph, verdict: &Verdict) -> MaximalityReport {
    let mut report = MaximalityReport::default();
    for v in 0..g.node_count() {
        match verdict.outcome(v) {
            Outcome::Undecided => report.undecided.push(v),
            Outcome::Out
                if !g
                    .neighbors(v)
                    .iter()
                    .any(|&u| verdict.outcome(u) == Outcome::In) =>
            {
                report.uncovered.push(v)
            }
            _ => {}
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalViolation {
    /// Adjacent nodes both output IN; `slot` is the later decision.
    ConflictingIn { u: NodeId, v: NodeId, slot: u64 },
    /// OUT with no neighbor IN at or before that slot.
    OutWithoutIn { node: NodeId, slot: u64 },
}

/// Checks decision timing: IN never coexists with an IN neighbor, and OUT
/// follows a neighbor's IN in the same or an earlier slot.
pub fn check_local_correctness(
    g: &Graph,
    trace: &Trace,
) -> Result<Vec<TemporalViolation>, VerifyError> {
    if trace.header.nodes != g.node_count() {
        return Err(VerifyError::SizeMismatch {
            trace: trace.header.nodes,
            graph: g.node_count(),
        });
    }
    let verdict = Verdict::from_trace(trace)?;
    let in_slot = |v: NodeId| match verdict.nodes[v] {
        NodeVerdict {
            outcome: Outcome::In,
            slot,
        } => slot,
        _ => None,
    };

    let mut violations = Vec::new();
    for (u, v) in g.edges() {
        if let (Some(a), Some(b)) = (in_slot(u), in_slot(v)) {
            violations.push(TemporalViolation::ConflictingIn {
                u,
                v,
                slot: a.max(b),
            });
        }
    }
    for (v, nv) in verdict.nodes.iter().enumerate() {
        if let NodeVerdict {
            outcome: Outcome::Out,
            slot: Some(t),
        } = *nv
        {
            let covered = g
                .neighbors(v)
                .iter()
                .any(|&u| in_slot(u).is_some_and(|s| s <= t));
            if !covered {
                violations.push(TemporalViolation::OutWithoutIn { node: v, slot: t });
            }
        }
    }
    Ok(violations)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationStats {
    pub nodes: usize,
    pub decided: usize,
    pub undecided: usize,
    pub budget: u64,
    pub within_budget: usize,
    pub fraction_within_budget: f64,
    pub median_slot: Option<u64>,
    pub p90_slot: Option<u64>,
    /// `(bucket start, count)` over decided nodes, bucketed by `bucket_width`.
    pub histogram: Vec<(u64, usize)>,
}

/// Nearest-rank quantile of sorted data.
pub fn quantile(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Fraction of all nodes that decided strictly before slot `budget`.
pub fn fraction_within(verdict: &Verdict, budget: u64) -> f64 {
    if verdict.nodes.is_empty() {
        return 1.0;
    }
    let hits = verdict
        .nodes
        .iter()
        .filter(|n| n.slot.is_some_and(|s| s < budget))
        .count();
    hits as f64 / verdict.nodes.len() as f64
}

pub fn termination_stats(verdict: &Verdict, budget: u64, bucket_width: u64) -> TerminationStats {
    let mut slots: Vec<u64> = verdict.nodes.iter().filter_map(|n| n.slot).collect();
    slots.sort_unstable();
    let width = bucket_width.max(1);
    let mut histogram: BTreeMap<u64, usize> = BTreeMap::new();
    for &s in &slots {
        *histogram.entry(s / width * width).or_default() += 1;
    }
    let within_budget = slots.iter().filter(|&&s| s < budget).count();
    TerminationStats {
        nodes: verdict.nodes.len(),
        decided: slots.len(),
        undecided: verdict.nodes.len() - slots.len(),
        budget,
        within_budget,
        fraction_within_budget: fraction_within(verdict, budget),
        median_slot: quantile(&slots, 0.5),
        p90_slot: quantile(&slots, 0.9),
        histogram: histogram.into_iter().collect(),
    }
}

/// Termination statistics of a beep-model run against its `R (2I + 1)` budget,
/// bucketed per emulated round.
pub fn beep_termination_stats(verdict: &Verdict, params: &ProtocolParams) -> TerminationStats {
    termination_stats(verdict, params.slot_budget(), params.round_len())
}

/// Which good-node conditions one estimation interval met.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodCheck {
    pub listened_enough: bool,
    pub high_justified: bool,
    pub low_justified: bool,
}

impl GoodCheck {
    pub fn is_good(&self) -> bool {
        self.listened_enough && self.high_justified && self.low_justified
    }
}

/// Evaluates the three good-node conditions for one node and interval,
/// given the true effective degree.
pub fn good_node_check(
    listened: u64,
    interval: u64,
    class: Class,
    effective_degree: &BigRational,
) -> GoodCheck {
    let tenth = BigRational::new(1.into(), 10.into());
    let cap = BigRational::from_integer(22.into());
    GoodCheck {
        listened_enough: 3 * listened > interval,
        high_justified: class != Class::High || *effective_degree >= tenth,
        low_justified: class != Class::Low || *effective_degree <= cap,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundGood {
    pub round: u64,
    pub evaluated: u64,
    pub good: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodNodeReport {
    pub interval: u64,
    /// Node-intervals evaluated.
    pub evaluated: u64,
    pub good: u64,
    pub frequency: f64,
    pub listened_too_little: u64,
    pub high_unjustified: u64,
    pub low_unjustified: u64,
    /// `1 - 2 e^{-I/100}`.
    pub lemma_floor: f64,
    pub per_round: Vec<RoundGood>,
}

/// Recomputes true effective degrees from the snapshots at every closed
/// estimation interval and scores each node's classification.
pub fn good_node_stats(
    g: &Graph,
    trace: &Trace,
    params: &ProtocolParams,
) -> Result<GoodNodeReport, VerifyError> {
    if trace.header.verbosity == Verbosity::Decisions {
        return Err(VerifyError::SnapshotsMissing(trace.header.verbosity));
    }
    let n = g.node_count();
    let interval = params.interval_len();
    let mut report = GoodNodeReport {
        interval,
        evaluated: 0,
        good: 0,
        frequency: 0.0,
        listened_too_little: 0,
        high_unjustified: 0,
        low_unjustified: 0,
        lemma_floor: 1.0 - 2.0 * (-(interval as f64) / 100.0).exp(),
        per_round: Vec::new(),
    };
    let mut rounds: BTreeMap<u64, RoundGood> = BTreeMap::new();

    for record in &trace.records {
        if !record.snapshots.iter().any(|s| s.class.is_some()) {
            continue;
        }
        let mut desire: HashMap<NodeId, DesireLevel> =
            HashMap::with_capacity(record.snapshots.len());
        for s in &record.snapshots {
            if s.node >= n {
                return Err(VerifyError::UnknownNode { node: s.node, n });
            }
            let level = DesireLevel::from_exponent(s.desire_exp).unwrap_or(DesireLevel::INITIAL);
            desire.insert(s.node, level);
        }
        for s in &record.snapshots {
            let Some(class) = s.class else { continue };
            let d = sum_desire(
                g.neighbors(s.node)
                    .iter()
                    .filter_map(|u| desire.get(u).copied()),
            );
            let check = good_node_check(s.listened, interval, class, &d);
            let entry = rounds.entry(s.round).or_insert_with(|| RoundGood {
                round: s.round,
                ..Default::default()
            });
            entry.evaluated += 1;
            report.evaluated += 1;
            if check.is_good() {
                entry.good += 1;
                report.good += 1;
            }
            report.listened_too_little += u64::from(!check.listened_enough);
            report.high_unjustified += u64::from(!check.high_justified);
            report.low_unjustified += u64::from(!check.low_justified);
        }
    }
    report.frequency = if report.evaluated == 0 {
        0.0
    } else {
        report.good as f64 / report.evaluated as f64
    };
    report.per_round = rounds.into_values().collect();
    Ok(report)
}

/// All checks for one trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    pub independence: Vec<(NodeId, NodeId)>,
    pub maximality: MaximalityReport,
    pub temporal: Vec<TemporalViolation>,
    pub termination: TerminationStats,
}

impl VerificationReport {
    /// Violations of independence, maximality (including undecided nodes) and decision timing.
    pub fn violation_count(&self) -> usize {
        self.independence.len()
            + self.maximality.uncovered.len()
            + self.maximality.undecided.len()
            + self.temporal.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0
    }
}

pub fn verify(
    g: &Graph,
    trace: &Trace,
    budget: u64,
    bucket_width: u64,
) -> Result<VerificationReport, VerifyError> {
    let temporal = check_local_correctness(g, trace)?;
    let verdict = Verdict::from_trace(trace)?;
    Ok(VerificationReport {
        independence: check_independence(g, &verdict),
        maximality: check_maximality(g, &verdict),
        temporal,
        termination: termination_stats(&verdict, budget, bucket_width),
        verdict,
    })
}
