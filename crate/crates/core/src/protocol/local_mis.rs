//! LOCAL-model MIS baseline with exact effective degrees.
//!
//! Per round, every active node with desire level `p_t`:
//! computes `d_t` from its active neighbors, is marked with probability
//! `p_t`, joins the MIS if marked with no marked active neighbor, and
//! otherwise moves to `p_{t+1} = p_t / 2` if `d_t >= 2`, else
//! `min(2 p_t, 1/2)`. Neighbors of joining nodes leave with OUT.
//!
//! Traces use the slot record format with one record per round: the
//! `beepers` field lists marked nodes and `heard` lists nodes that saw a
//! marked neighbor.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::{sum_desire, update_desire, DesireLevel};
use crate::channel::ChannelError;
use crate::coins::{below_pow2, CoinSource, DrawKind, NodeCoins};
use crate::graph::{Graph, NodeId};
use crate::trace::{
    Class, Decision, DecisionEvent, NodeSnapshot, Phase, SlotRecord, TimeUnit, Trace, Verbosity,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalNodeState {
    pub desire: DesireLevel,
    pub decision: Option<Decision>,
}

impl Default for LocalNodeState {
    fn default() -> Self {
        Self {
            desire: DesireLevel::INITIAL,
            decision: None,
        }
    }
}

impl LocalNodeState {
    pub fn is_active(&self) -> bool {
        self.decision.is_none()
    }
}

/// Sum of desire levels of `v`'s active neighbors.
pub fn effective_degree(g: &Graph, v: NodeId, states: &[LocalNodeState]) -> BigRational {
    sum_desire(
        g.neighbors(v)
            .iter()
            .map(|&u| &states[u])
            .filter(|s| s.is_active())
            .map(|s| s.desire),
    )
}

/// `d >= 2` maps to HIGH.
pub fn degree_class(d: &BigRational) -> Class {
    if *d >= BigRational::from_integer(2.into()) {
        Class::High
    } else {
        Class::Low
    }
}

/// What happened in one round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundReport {
    pub marked: Vec<NodeId>,
    pub saw_mark: Vec<NodeId>,
    pub decisions: Vec<DecisionEvent>,
    /// `(node, p_t, class)` for every node active at the start of the round.
    pub classes: Vec<(NodeId, DesireLevel, Class)>,
}

/// One synchronous round over all active nodes.
pub fn local_round(
    g: &Graph,
    states: &mut [LocalNodeState],
    coins: &mut [NodeCoins],
) -> RoundReport {
    let n = g.node_count();
    let active: Vec<NodeId> = (0..n).filter(|&v| states[v].is_active()).collect();

    let mut report = RoundReport::default();
    let mut marked = vec![false; n];
    for &v in &active {
        let d = effective_degree(g, v, states);
        report.classes.push((v, states[v].desire, degree_class(&d)));
        marked[v] = below_pow2(coins[v].draw(DrawKind::Mark), states[v].desire.exponent());
    }
    report.marked = active.iter().copied().filter(|&v| marked[v]).collect();
    report.saw_mark = active
        .iter()
        .copied()
        .filter(|&v| g.neighbors(v).iter().any(|&u| marked[u]))
        .collect();

    let joins: Vec<NodeId> = report
        .marked
        .iter()
        .copied()
        .filter(|&v| !g.neighbors(v).iter().any(|&u| marked[u]))
        .collect();
    let mut decided = vec![None; n];
    for &v in &joins {
        decided[v] = Some(Decision::In);
    }
    for &v in &joins {
        for &u in g.neighbors(v) {
            if states[u].is_active() && decided[u].is_none() {
                decided[u] = Some(Decision::Out);
            }
        }
    }

    for &(v, desire, class) in &report.classes {
        match decided[v] {
            Some(decision) => {
                states[v].decision = Some(decision);
                report.decisions.push(DecisionEvent { node: v, decision });
            }
            None => states[v].desire = update_desire(desire, class),
        }
    }
    report.decisions.sort_by_key(|e| e.node);
    report
}

/// Runs rounds until every node decided or `max_rounds` is reached.
pub fn run(
    g: &Graph,
    max_rounds: u64,
    coins: &CoinSource,
    verbosity: Verbosity,
) -> Result<Trace, ChannelError> {
    if max_rounds == 0 {
        return Err(ChannelError::ZeroMaxSlots);
    }
    let n = g.node_count();
    let mut states = vec![LocalNodeState::default(); n];
    let mut streams: Vec<_> = (0..n).map(|v| coins.stream(v)).collect();
    let mut trace = Trace::new(n, TimeUnit::Round, verbosity, coins.seed());

    let mut round = 0;
    while round < max_rounds && states.iter().any(LocalNodeState::is_active) {
        let report = local_round(g, &mut states, &mut streams);
        let mut record = SlotRecord {
            slot: round,
            decisions: report.decisions,
            ..Default::default()
        };
        if verbosity != Verbosity::Decisions {
            record.beepers = report.marked;
            record.heard = report.saw_mark;
            record.snapshots = report
                .classes
                .iter()
                .map(|&(v, desire, class)| NodeSnapshot {
                    node: v,
                    desire_exp: desire.exponent(),
                    round,
                    phase: Phase::Round,
                    slot_in_phase: 0,
                    listened: 0,
                    heard: 0,
                    beeped: 0,
                    marked: record_marked(&record.beepers, v),
                    class: Some(class),
                })
                .collect();
        }
        if verbosity != Verbosity::Decisions || !record.decisions.is_empty() {
            trace.records.push(record);
        }
        round += 1;
    }
    trace.header.slots_run = round;
    trace.header.truncated = states.iter().any(LocalNodeState::is_active);
    Ok(trace)
}

fn record_marked(marked: &[NodeId], v: NodeId) -> bool {
    marked.binary_search(&v).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins::CoinScript;
    use crate::graph;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn level(k: u32) -> DesireLevel {
        DesireLevel::from_exponent(k).unwrap()
    }

    #[test]
    fn effective_degree_examples() {
        let states = vec![LocalNodeState::default(); 5];
        assert_eq!(effective_degree(&Graph::empty(1), 0, &states), ratio(0, 1));
        assert_eq!(effective_degree(&graph::star(4), 0, &states), ratio(2, 1));

        let mut states = vec![LocalNodeState::default(); 3];
        states[2].desire = level(2);
        assert_eq!(effective_degree(&graph::star(2), 0, &states), ratio(3, 4));

        // Removed neighbors contribute nothing.
        states[2].decision = Some(Decision::Out);
        assert_eq!(effective_degree(&graph::star(2), 0, &states), ratio(1, 2));
    }

    fn all_marked(n: usize) -> Vec<NodeCoins> {
        let coins = CoinSource::new(0).with_script(0..n, CoinScript::AlwaysMin);
        (0..n).map(|v| coins.stream(v)).collect()
    }

    #[test]
    fn isolated_marked_nodes_join() {
        let g = Graph::empty(2);
        let mut states = vec![LocalNodeState::default(); 2];
        let report = local_round(&g, &mut states, &mut all_marked(2));
        assert_eq!(report.decisions.len(), 2);
        assert!(states.iter().all(|s| s.decision == Some(Decision::In)));
    }

    #[test]
    fn marked_neighbors_block_each_other() {
        let g = graph::path(2);
        let mut states = vec![LocalNodeState::default(); 2];
        let report = local_round(&g, &mut states, &mut all_marked(2));
        assert!(report.decisions.is_empty());
        assert!(states.iter().all(LocalNodeState::is_active));
        assert_eq!(report.marked, vec![0, 1]);
    }

    #[test]
    fn degree_two_halves() {
        // Center of a 4-star sees d = 4 * 1/2 = 2 exactly.
        let g = graph::star(4);
        let mut states = vec![LocalNodeState::default(); 5];
        let coins = CoinSource::new(0).with_script(0..5, CoinScript::AlwaysMax);
        let mut streams: Vec<_> = (0..5).map(|v| coins.stream(v)).collect();
        let report = local_round(&g, &mut states, &mut streams);
        assert_eq!(report.classes[0], (0, level(1), Class::High));
        assert_eq!(states[0].desire, level(2));
        // Leaves see d = 1/2 < 2 and stay capped at 1/2.
        assert_eq!(states[1].desire, level(1));

        assert_eq!(degree_class(&ratio(2, 1)), Class::High);
        assert_eq!(degree_class(&ratio(15, 8)), Class::Low);
    }

    #[test]
    fn join_removes_neighbors() {
        // Only node 1 (center of a 3-path) is marked.
        let g = graph::path(3);
        let coins = CoinSource::new(0)
            .with_script([1], CoinScript::AlwaysMin)
            .with_script([0, 2], CoinScript::AlwaysMax);
        let mut streams: Vec<_> = (0..3).map(|v| coins.stream(v)).collect();
        let mut states = vec![LocalNodeState::default(); 3];
        let report = local_round(&g, &mut states, &mut streams);
        assert_eq!(
            report.decisions,
            vec![
                DecisionEvent {
                    node: 0,
                    decision: Decision::Out
                },
                DecisionEvent {
                    node: 1,
                    decision: Decision::In
                },
                DecisionEvent {
                    node: 2,
                    decision: Decision::Out
                },
            ]
        );
        assert_eq!(report.saw_mark, vec![0, 2]);
    }

    #[test]
    fn run_produces_mis() {
        for seed in 0..20 {
            let g = graph::erdos_renyi(40, 0.15, seed).unwrap();
            let trace = run(&g, 1000, &CoinSource::new(seed), Verbosity::Full).unwrap();
            assert!(!trace.header.truncated);
            let mut decision = [None; 40];
            for (_, e) in trace.decisions() {
                assert!(decision[e.node].replace(e.decision).is_none());
            }
            for (u, v) in g.edges() {
                assert!(!(decision[u] == Some(Decision::In) && decision[v] == Some(Decision::In)));
            }
            for v in 0..40 {
                if decision[v] == Some(Decision::Out) {
                    assert!(g
                        .neighbors(v)
                        .iter()
                        .any(|&u| decision[u] == Some(Decision::In)));
                }
            }
        }
        assert!(run(&Graph::empty(1), 0, &CoinSource::new(0), Verbosity::Full).is_err());
    }
}
