//! Simulator for a maximal independent set algorithm in the beeping model,
//! with a LOCAL-model reference, an abstract MAC layer emulation and a
//! verifier for recorded traces.

pub mod channel;
pub mod coins;
pub mod experiment;
pub mod graph;
pub mod mac;
pub mod protocol;
pub mod trace;
pub mod verifier;

pub use channel::{BeepNode, Channel, ChannelError, Medium, RunOptions, Sense, SlotAction};
pub use coins::{CoinScript, CoinSource, DrawKind, NodeCoins};
pub use graph::{Graph, GraphError, NodeId};
pub use protocol::{DesireLevel, ProtocolError, ProtocolParams};
pub use trace::{Decision, Trace, Verbosity};
pub use verifier::{verify, Outcome, Verdict, VerificationReport};
