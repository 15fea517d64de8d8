//! Abstract MAC layer with progress bound and abort, and a beep-slot
//! emulation on top of it.
//!
//! Slot `t` (1-based) of the beep model occupies MAC times
//! `(t-1) f_prog + 1 ..= t f_prog`. Every beeper injects a broadcast of
//! `"beep"` at the first instant and aborts it at the last. By the progress
//! bound, each neighbor of a beeper receives some message inside that
//! window, so "received anything" equals "heard a beep".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{check_actions, ChannelError, Medium, Sense, SlotAction};
use crate::graph::{Graph, NodeId};

pub const BEEP_MESSAGE: &str = "beep";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MacError {
    #[error("f_prog must be at least 1")]
    ProgressBound,
    #[error("f_ack ({f_ack}) must be at least f_prog ({f_prog})")]
    AckBound { f_ack: u64, f_prog: u64 },
    #[error("beep slots are numbered from 1")]
    SlotZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacParams {
    pub f_prog: u64,
    /// Carried for completeness; the emulation never waits on it.
    pub f_ack: u64,
}

impl MacParams {
    pub fn new(f_prog: u64, f_ack: u64) -> Result<Self, MacError> {
        let params = Self { f_prog, f_ack };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MacError> {
        if self.f_prog < 1 {
            return Err(MacError::ProgressBound);
        }
        if self.f_ack < self.f_prog {
            return Err(MacError::AckBound {
                f_ack: self.f_ack,
                f_prog: self.f_prog,
            });
        }
        Ok(())
    }

    /// Closed MAC-time window of beep slot `t >= 1`.
    pub fn slot_window(&self, t: u64) -> Result<TimeWindow, MacError> {
        if t == 0 {
            return Err(MacError::SlotZero);
        }
        Ok(TimeWindow {
            start: (t - 1) * self.f_prog + 1,
            end: t * self.f_prog,
        })
    }
}

/// Closed interval of MAC time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: u64,
    pub end: u64,
}

impl TimeWindow {
    pub fn covers(&self, other: &TimeWindow) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// A broadcast that is in progress over `active`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Broadcast {
    pub node: NodeId,
    pub active: TimeWindow,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MacEvent {
    Bcast {
        node: NodeId,
        message: String,
        time: u64,
    },
    Abort {
        node: NodeId,
        time: u64,
    },
    Receive {
        node: NodeId,
        from: NodeId,
        message: String,
        time: u64,
    },
}

impl MacEvent {
    pub fn node(&self) -> NodeId {
        match self {
            MacEvent::Bcast { node, .. }
            | MacEvent::Abort { node, .. }
            | MacEvent::Receive { node, .. } => *node,
        }
    }

    pub fn time(&self) -> u64 {
        match self {
            MacEvent::Bcast { time, .. }
            | MacEvent::Abort { time, .. }
            | MacEvent::Receive { time, .. } => *time,
        }
    }
}

/// One JSON object per line.
pub fn events_to_jsonl(events: &[MacEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    /// Deliver at the last permitted instant, from the highest-id sender.
    #[default]
    Adversarial,
    /// Deliver at a uniform instant in the window, from a uniform sender.
    Random,
}

/// Chooses delivery times and senders within the progress guarantee.
#[derive(Clone, Debug)]
pub struct Scheduler {
    mode: SchedulerMode,
    rng: ChaCha8Rng,
}

impl Scheduler {
    pub fn new(mode: SchedulerMode, seed: u64) -> Self {
        Self {
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> SchedulerMode {
        self.mode
    }
}

/// Receive events for `window`: every node with at least one neighbor
/// broadcasting throughout the whole window receives exactly one message.
/// Broadcasts that only partly overlap the window carry no guarantee and
/// are not delivered.
pub fn mac_deliver(
    g: &Graph,
    broadcasts: &[Broadcast],
    window: TimeWindow,
    scheduler: &mut Scheduler,
) -> Vec<MacEvent> {
    let mut senders: Vec<Vec<NodeId>> = vec![Vec::new(); g.node_count()];
    for b in broadcasts.iter().filter(|b| b.active.covers(&window)) {
        for &u in g.neighbors(b.node) {
            senders[u].push(b.node);
        }
    }
    let mut events = Vec::new();
    for (v, mut from) in senders.into_iter().enumerate() {
        if from.is_empty() {
            continue;
        }
        from.sort_unstable();
        from.dedup();
        let (sender, time) = match scheduler.mode {
            SchedulerMode::Adversarial => (*from.last().expect("non-empty"), window.end),
            SchedulerMode::Random => {
                let i = scheduler.rng.random_range(0..from.len());
                (
                    from[i],
                    scheduler.rng.random_range(window.start..=window.end),
                )
            }
        };
        events.push(MacEvent::Receive {
            node: v,
            from: sender,
            message: BEEP_MESSAGE.to_owned(),
            time,
        });
    }
    events.sort_by_key(|e| (e.time(), e.node()));
    events
}

/// Emulates beep slot `t` over the MAC layer: broadcast in the slot window,
/// abort at its end. Returns per-node heard flags (false for beepers) and
/// the event log.
pub fn emulate_beep_slot(
    g: &Graph,
    t: u64,
    beepers: &[NodeId],
    mac: &MacParams,
    scheduler: &mut Scheduler,
) -> Result<(Vec<bool>, Vec<MacEvent>), MacError> {
    let window = mac.slot_window(t)?;
    let mut log = Vec::new();
    let mut broadcasts = Vec::with_capacity(beepers.len());
    let mut is_beeper = vec![false; g.node_count()];
    for &u in beepers {
        is_beeper[u] = true;
        log.push(MacEvent::Bcast {
            node: u,
            message: BEEP_MESSAGE.to_owned(),
            time: window.start,
        });
        broadcasts.push(Broadcast {
            node: u,
            active: window,
        });
    }
    let receives = mac_deliver(g, &broadcasts, window, scheduler);
    let mut heard = vec![false; g.node_count()];
    for event in &receives {
        if let MacEvent::Receive { node, .. } = event {
            heard[*node] = !is_beeper[*node];
        }
    }
    log.extend(receives);
    log.extend(beepers.iter().map(|&u| MacEvent::Abort {
        node: u,
        time: window.end,
    }));
    log.sort_by_key(MacEvent::time);
    Ok((heard, log))
}

/// Runs beep slots over the MAC emulation.
#[derive(Clone, Debug)]
pub struct MacAdapter<'g> {
    graph: &'g Graph,
    params: MacParams,
    scheduler: Scheduler,
    active: Vec<bool>,
    slots: u64,
    log: Option<Vec<MacEvent>>,
}

impl<'g> MacAdapter<'g> {
    pub fn new(graph: &'g Graph, params: MacParams, scheduler: Scheduler) -> Self {
        Self {
            graph,
            params,
            scheduler,
            active: vec![true; graph.node_count()],
            slots: 0,
            log: None,
        }
    }

    /// Keep every MAC event for later inspection.
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn events(&self) -> &[MacEvent] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    /// MAC time consumed so far.
    pub fn elapsed(&self) -> u64 {
        self.slots * self.params.f_prog
    }
}

impl Medium for MacAdapter<'_> {
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
        check_actions(&self.active, actions)?;
        let beepers: Vec<NodeId> = (0..actions.len())
            .filter(|&v| actions[v] == Some(SlotAction::Beep))
            .collect();
        self.slots += 1;
        let (heard, events) = emulate_beep_slot(
            self.graph,
            self.slots,
            &beepers,
            &self.params,
            &mut self.scheduler,
        )
        .expect("slot numbers start at 1");
        if let Some(log) = &mut self.log {
            log.extend(events);
        }
        Ok(actions
            .iter()
            .zip(heard)
            .map(|(a, heard)| match a {
                Some(SlotAction::Listen) if heard => Some(Sense::HeardBeep),
                Some(SlotAction::Listen) => Some(Sense::Silence),
                _ => None,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;

    #[test]
    fn params_validation() {
        assert!(MacParams::new(3, 10).is_ok());
        assert_eq!(MacParams::new(0, 10), Err(MacError::ProgressBound));
        assert_eq!(
            MacParams::new(5, 4),
            Err(MacError::AckBound {
                f_ack: 4,
                f_prog: 5
            })
        );
    }

    #[test]
    fn slot_window_timing() {
        let mac = MacParams::new(5, 5).unwrap();
        assert_eq!(
            mac.slot_window(3).unwrap(),
            TimeWindow { start: 11, end: 15 }
        );
        assert_eq!(mac.slot_window(1).unwrap(), TimeWindow { start: 1, end: 5 });
        assert_eq!(mac.slot_window(0), Err(MacError::SlotZero));
    }

    #[test]
    fn delivery_examples() {
        let window = TimeWindow { start: 1, end: 7 };
        let g = graph::path(3);
        for mode in [SchedulerMode::Adversarial, SchedulerMode::Random] {
            let mut s = Scheduler::new(mode, 1);
            let one = [Broadcast {
                node: 0,
                active: window,
            }];
            let ev = mac_deliver(&g, &one, window, &mut s);
            assert_eq!(ev.len(), 1);
            let MacEvent::Receive {
                node, from, time, ..
            } = ev[0]
            else {
                panic!()
            };
            assert_eq!((node, from), (1, 0));
            assert!((window.start..=window.end).contains(&time));

            // Node 2 has no broadcasting neighbor.
            assert!(ev
                .iter()
                .all(|e| !matches!(e, MacEvent::Receive { node: 2, .. })));

            let two = [
                Broadcast {
                    node: 0,
                    active: window,
                },
                Broadcast {
                    node: 2,
                    active: window,
                },
            ];
            let ev = mac_deliver(&g, &two, window, &mut s);
            let MacEvent::Receive { node, from, .. } = ev[0] else {
                panic!()
            };
            assert_eq!(node, 1);
            assert!(from == 0 || from == 2);

            let partial = [Broadcast {
                node: 0,
                active: TimeWindow { start: 2, end: 7 },
            }];
            assert!(mac_deliver(&g, &partial, window, &mut s).is_empty());
        }
    }

    #[test]
    fn random_mode_uses_both_senders_and_whole_window() {
        let g = graph::path(3);
        let window = TimeWindow { start: 1, end: 7 };
        let two = [
            Broadcast {
                node: 0,
                active: window,
            },
            Broadcast {
                node: 2,
                active: window,
            },
        ];
        let mut s = Scheduler::new(SchedulerMode::Random, 2);
        let mut senders = std::collections::BTreeSet::new();
        let mut times = std::collections::BTreeSet::new();
        for _ in 0..200 {
            for e in mac_deliver(&g, &two, window, &mut s) {
                if let MacEvent::Receive { from, time, .. } = e {
                    senders.insert(from);
                    times.insert(time);
                }
            }
        }
        assert_eq!(senders.len(), 2);
        assert_eq!(times.len(), 7);
    }

    #[test]
    fn emulated_slot_log() {
        let g = graph::path(2);
        let mac = MacParams::new(5, 9).unwrap();
        let mut s = Scheduler::new(SchedulerMode::Adversarial, 0);
        let (heard, log) = emulate_beep_slot(&g, 3, &[0], &mac, &mut s).unwrap();
        assert_eq!(heard, vec![false, true]);
        assert_eq!(
            log,
            vec![
                MacEvent::Bcast {
                    node: 0,
                    message: "beep".into(),
                    time: 11
                },
                MacEvent::Receive {
                    node: 1,
                    from: 0,
                    message: "beep".into(),
                    time: 15
                },
                MacEvent::Abort { node: 0, time: 15 },
            ]
        );
        assert_eq!(events_to_jsonl(&log).lines().count(), 3);

        let (heard, log) = emulate_beep_slot(&g, 1, &[], &mac, &mut s).unwrap();
        assert_eq!(heard, vec![false, false]);
        assert!(log.is_empty());
    }
}
