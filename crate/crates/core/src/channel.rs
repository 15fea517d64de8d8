//! Slot-synchronous beep channel and the lockstep protocol engine.
//!
//! In every slot each active node either beeps or listens. A listener learns
//! only whether at least one neighbor beeped; a beeper learns nothing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coins::{CoinSource, NodeCoins};
use crate::graph::{Graph, NodeId};
use crate::trace::{Decision, DecisionEvent, NodeSnapshot, SlotRecord, TimeUnit, Trace, Verbosity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotAction {
    Beep,
    Listen,
}

/// What a listener perceives in one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    HeardBeep,
    Silence,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("action supplied for removed node {0}")]
    ActionForRemoved(NodeId),
    #[error("no action supplied for active node {0}")]
    MissingAction(NodeId),
    #[error("expected {expected} entries, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("max_slots must be positive")]
    ZeroMaxSlots,
}

/// Transport for one beep slot: the native channel or an emulation of it.
pub trait Medium {
    fn graph(&self) -> &Graph;

    fn is_active(&self, v: NodeId) -> bool;

    /// Silences `v` for the rest of the run.
    fn remove(&mut self, v: NodeId);

    /// Executes one slot. `actions[v]` must be `Some` exactly for active nodes;
    /// the result is `Some` exactly for active listeners.
    fn transmit(
        &mut self,
        actions: &[Option<SlotAction>],
    ) -> Result<Vec<Option<Sense>>, ChannelError>;
}

/// Actions must be present exactly for active nodes.
pub(crate) fn check_actions(
    active: &[bool],
    actions: &[Option<SlotAction>],
) -> Result<(), ChannelError> {
    if actions.len() != active.len() {
        return Err(ChannelError::WrongLength {
            expected: active.len(),
            got: actions.len(),
        });
    }
    for (v, (&active, action)) in active.iter().zip(actions).enumerate() {
        match (active, action) {
            (false, Some(_)) => return Err(ChannelError::ActionForRemoved(v)),
            (true, None) => return Err(ChannelError::MissingAction(v)),
            _ => {}
        }
    }
    Ok(())
}

/// The native beep channel over a fixed topology.
#[derive(Clone, Debug)]
pub struct Channel<'g> {
    graph: &'g Graph,
    active: Vec<bool>,
    slots: u64,
}

impl<'g> Channel<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        Self {
            graph,
            active: vec![true; graph.node_count()],
            slots: 0,
        }
    }

    /// Slots executed through [`Medium::transmit`].
    pub fn slots(&self) -> u64 {
        self.slots
    }

    /// OR-over-neighbors outcome of one slot.
    pub fn run_slot(
        &self,
        actions: &[Option<SlotAction>],
    ) -> Result<Vec<Option<Sense>>, ChannelError> {
        check_actions(&self.active, actions)?;
        let mut heard = vec![false; actions.len()];
        for (v, action) in actions.iter().enumerate() {
            if *action == Some(SlotAction::Beep) {
                for &u in self.graph.neighbors(v) {
                    heard[u] = true;
                }
            }
        }
        Ok(actions
            .iter()
            .zip(heard)
            .map(|(action, heard)| match action {
                Some(SlotAction::Listen) if heard => Some(Sense::HeardBeep),
                Some(SlotAction::Listen) => Some(Sense::Silence),
                _ => None,
            })
            .collect())
    }
}

impl Medium for Channel<'_> {
    fn graph(&self) -> &Graph {
        self.graph
    }

    fn is_active(&self, v: NodeId) -> bool {
        self.active[v]
    }

    fn remove(&mut self, v: NodeId) {
        self.active[v] = false;
    }

    fn transmit(
        &mut self,
        actions: &[Option<SlotAction>],
    ) -> Result<Vec<Option<Sense>>, ChannelError> {
        let out = self.run_slot(actions)?;
        self.slots += 1;
        Ok(out)
    }
}

/// A per-node beep-model state machine.
pub trait BeepNode {
    /// Chooses this slot's action.
    fn act(&mut self, coins: &mut NodeCoins) -> SlotAction;

    /// Processes the slot outcome (`None` when the node beeped). A returned
    /// decision is final and removes the node from the channel.
    fn observe(&mut self, sense: Option<Sense>, coins: &mut NodeCoins) -> Option<Decision>;

    fn snapshot(&self, node: NodeId) -> NodeSnapshot;

    /// True in slots that close an estimation interval.
    fn interval_closed(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub max_slots: u64,
    pub verbosity: Verbosity,
    /// Stop as soon as all of these nodes have decided.
    pub stop_when_decided: Option<Vec<NodeId>>,
}

impl RunOptions {
    pub fn new(max_slots: u64, verbosity: Verbosity) -> Self {
        Self {
            max_slots,
            verbosity,
            stop_when_decided: None,
        }
    }
}

/// Runs `nodes` in lockstep over `medium` until every node decided or the cap is reached.
pub fn run_protocol<N, M>(
    medium: &mut M,
    nodes: &mut [N],
    coins: &CoinSource,
    opts: &RunOptions,
) -> Result<Trace, ChannelError>
where
    N: BeepNode,
    M: Medium + ?Sized,
{
    if opts.max_slots == 0 {
        return Err(ChannelError::ZeroMaxSlots);
    }
    let n = medium.graph().node_count();
    if nodes.len() != n {
        return Err(ChannelError::WrongLength {
            expected: n,
            got: nodes.len(),
        });
    }

    let mut trace = Trace::new(n, TimeUnit::Slot, opts.verbosity, coins.seed());
    let mut streams: Vec<NodeCoins> = (0..n).map(|v| coins.stream(v)).collect();
    let mut active: Vec<NodeId> = (0..n).filter(|&v| medium.is_active(v)).collect();
    let mut decided = vec![false; n];
    let mut actions: Vec<Option<SlotAction>> = vec![None; n];

    let watch_done = |decided: &[bool]| {
        opts.stop_when_decided
            .as_ref()
            .is_some_and(|w| w.iter().all(|&v| decided[v]))
    };

    let mut slot = 0;
    while slot < opts.max_slots && !active.is_empty() && !watch_done(&decided) {
        for &v in &active {
            actions[v] = Some(nodes[v].act(&mut streams[v]));
        }
        let senses = medium.transmit(&actions)?;

        let mut record = SlotRecord {
            slot,
            ..Default::default()
        };
        for &v in &active {
            if let Some(decision) = nodes[v].observe(senses[v], &mut streams[v]) {
                record.decisions.push(DecisionEvent { node: v, decision });
            }
        }

        let snapshots = match opts.verbosity {
            Verbosity::Full => true,
            Verbosity::Intervals => active.iter().any(|&v| nodes[v].interval_closed()),
            Verbosity::Decisions => false,
        };
        if snapshots {
            record.snapshots = active.iter().map(|&v| nodes[v].snapshot(v)).collect();
        }
        if opts.verbosity != Verbosity::Decisions {
            record.beepers = active
                .iter()
                .copied()
                .filter(|&v| actions[v] == Some(SlotAction::Beep))
                .collect();
            record.heard = active
                .iter()
                .copied()
                .filter(|&v| senses[v] == Some(Sense::HeardBeep))
                .collect();
        }

        for event in &record.decisions {
            decided[event.node] = true;
            actions[event.node] = None;
            medium.remove(event.node);
        }
        active.retain(|&v| !decided[v]);

        if opts.verbosity != Verbosity::Decisions || !record.decisions.is_empty() {
            trace.records.push(record);
        }
        slot += 1;
    }

    trace.header.slots_run = slot;
    trace.header.truncated = !active.is_empty();
    Ok(trace)
}
