use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::coins::{CoinScript, CoinSource};
use crate::graph::{self, Graph, NodeId};
use crate::mac::{MacParams, SchedulerMode};
use crate::protocol::ProtocolParams;
use crate::trace::Verbosity;

/// Topology source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    ErdosRenyi { n: usize, p: f64, seed: u64 },
    RandomRegular { n: usize, degree: usize, seed: u64 },
    SwatLine { delta: usize },
    RingLattice { n: usize, k: usize },
    Path { n: usize },
    Cycle { n: usize },
    Star { leaves: usize },
    Complete { n: usize },
    Empty { n: usize },
    File { path: PathBuf },
}

impl GraphSpec {
    /// Builds the graph; `seed` replaces the spec's own seed for random generators.
    pub fn build(&self, seed: Option<u64>) -> Result<Graph, ExperimentError> {
        Ok(match *self {
            GraphSpec::ErdosRenyi { n, p, seed: s } => graph::erdos_renyi(n, p, seed.unwrap_or(s))?,
            GraphSpec::RandomRegular { n, degree, seed: s } => {
                graph::random_regular(n, degree, seed.unwrap_or(s))?
            }
            GraphSpec::SwatLine { delta } => graph::swat_line(delta)?,
            GraphSpec::RingLattice { n, k } => graph::ring_lattice(n, k),
            GraphSpec::Path { n } => graph::path(n),
            GraphSpec::Cycle { n } => graph::cycle(n),
            GraphSpec::Star { leaves } => graph::star(leaves),
            GraphSpec::Complete { n } => graph::complete(n),
            GraphSpec::Empty { n } => Graph::empty(n),
            GraphSpec::File { ref path } => {
                let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
                    path: path.clone(),
                    source,
                })?;
                Graph::parse_edge_list(&text)?
            }
        })
    }

    pub fn is_random(&self) -> bool {
        matches!(
            self,
            GraphSpec::ErdosRenyi { .. } | GraphSpec::RandomRegular { .. }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Beep,
    Local,
    BeepOverMac,
}

/// Which nodes get scripted coins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarySelect {
    Nodes(Vec<NodeId>),
    /// Every node farther than `hops` from `node`.
    OutsideNeighborhood {
        node: NodeId,
        hops: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub select: AdversarySelect,
    pub script: CoinScript,
    /// Node whose decision rate is reported separately. Defaults to the
    /// center of an `outside_neighborhood` selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<NodeId>,
    /// End each trial once the target has decided.
    #[serde(default)]
    pub stop_after_target: bool,
}

impl AdversarySpec {
    pub fn target(&self) -> Option<NodeId> {
        self.target.or(match self.select {
            AdversarySelect::OutsideNeighborhood { node, .. } => Some(node),
            AdversarySelect::Nodes(_) => None,
        })
    }

    pub fn nodes(&self, g: &Graph) -> Result<BTreeSet<NodeId>, ExperimentError> {
        match &self.select {
            AdversarySelect::Nodes(list) => {
                for &v in list {
                    if v >= g.node_count() {
                        return Err(ExperimentError::config(
                            "adversary.select.nodes",
                            format!("node {v} out of range"),
                        ));
                    }
                }
                Ok(list.iter().copied().collect())
            }
            AdversarySelect::OutsideNeighborhood { node, hops } => {
                let inside = g.neighborhood(*node, *hops)?;
                Ok((0..g.node_count())
                    .filter(|v| !inside.contains(v))
                    .collect())
            }
        }
    }

    pub fn apply(&self, g: &Graph, coins: CoinSource) -> Result<CoinSource, ExperimentError> {
        Ok(coins.with_script(self.nodes(g)?, self.script.clone()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory receiving `verdicts.csv` and `aggregate.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write each trial's trace, graph and violation report.
    #[serde(default)]
    pub traces: bool,
}

/// One experiment: a topology, a protocol, and a batch of seeded trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSpec,
    /// Draw a fresh random graph per trial from the trial seed.
    #[serde(default)]
    pub resample_graph: bool,
    pub protocol: ProtocolKind,
    pub params: ProtocolParams,
    /// When set, overrides `params.scale` so that the interval has this many slots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<MacParams>,
    #[serde(default)]
    pub scheduler: SchedulerMode,
    pub trials: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversarySpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub verbosity: Verbosity,
    /// Worker threads for trial-level parallelism; `None` uses all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| ExperimentError::config("<root>", e.to_string()))?;
        Self::from_value(value)
    }

    /// Applies `path=value` overrides (dotted JSON paths) before decoding.
    pub fn from_json_with_overrides(
        text: &str,
        overrides: &[String],
    ) -> Result<Self, ExperimentError> {
        let mut value: Value = serde_json::from_str(text)
            .map_err(|e| ExperimentError::config("<root>", e.to_string()))?;
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        Self::from_value(value)
    }

    fn from_value(value: Value) -> Result<Self, ExperimentError> {
        let config: RunConfig = serde_json::from_value(value)
            .map_err(|e| ExperimentError::config("<root>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials < 1 {
            return Err(ExperimentError::config("trials", "must be at least 1"));
        }
        self.effective_params()
            .validate()
            .map_err(|e| ExperimentError::config("params", e.to_string()))?;
        if let GraphSpec::File { path } = &self.graph {
            if !path.is_file() {
                return Err(ExperimentError::config(
                    "graph.path",
                    format!("{} does not exist", path.display()),
                ));
            }
        }
        match (&self.protocol, &self.mac) {
            (ProtocolKind::BeepOverMac, None) => {
                return Err(ExperimentError::config("mac", "required for beep-over-mac"))
            }
            (_, Some(mac)) => mac
                .validate()
                .map_err(|e| ExperimentError::config("mac", e.to_string()))?,
            _ => {}
        }
        if self.resample_graph && !self.graph.is_random() {
            return Err(ExperimentError::config(
                "resample_graph",
                "only random generators can be resampled",
            ));
        }
        if self.workers == Some(0) {
            return Err(ExperimentError::config("workers", "must be positive"));
        }
        Ok(())
    }

    /// Protocol parameters with the `interval` override applied.
    pub fn effective_params(&self) -> ProtocolParams {
        match self.interval {
            Some(i) => self.params.clone().with_interval(i),
            None => self.params.clone(),
        }
    }

    /// Hex digest of the canonical JSON encoding, leaving out fields that
    /// cannot change results (output location, worker count).
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output = OutputSpec::default();
        keyed.workers = None;
        let json = serde_json::to_vec(&keyed).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

fn apply_override(root: &mut Value, item: &str) -> Result<(), ExperimentError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| ExperimentError::config(item, "override must look like path=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut cursor = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = cursor else {
            return Err(ExperimentError::config(path, "parent is not an object"));
        };
        if i + 1 == parts.len() {
            map.insert((*part).to_owned(), value);
            return Ok(());
        }
        cursor = map
            .entry((*part).to_owned())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(ExperimentError::config(path, "empty path"))
}

fn derive(tag: &str, a: u64, b: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    derive("trial", master, index)
}

/// Seed for a resampled graph of a trial.
pub fn graph_seed(trial_seed: u64) -> u64 {
    derive("graph", trial_seed, 0)
}

/// Seed for the MAC scheduler of a trial.
pub fn scheduler_seed(trial_seed: u64) -> u64 {
    derive("mac", trial_seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "graph": {"kind": "erdos_renyi", "n": 10, "p": 0.3, "seed": 1},
        "protocol": "beep",
        "params": {"eps": 0.2, "delta_bound": 0},
        "interval": 30,
        "trials": 2,
        "seed": 7
    }"#;

    #[test]
    fn parses_and_hashes() {
        let c = RunConfig::from_json(BASE).unwrap();
        assert_eq!(c.effective_params().interval_len(), 30);
        assert_eq!(c.verbosity, Verbosity::Decisions);
        assert_eq!(c.hash().len(), 16);
        assert_eq!(c.hash(), RunConfig::from_json(BASE).unwrap().hash());
        let mut moved = c.clone();
        moved.output.dir = Some("elsewhere".into());
        moved.workers = Some(3);
        assert_eq!(moved.hash(), c.hash());
    }

    #[test]
    fn overrides_follow_json_paths() {
        let c = RunConfig::from_json_with_overrides(
            BASE,
            &[
                "params.eps=0.3".into(),
                "trials=5".into(),
                "verbosity=full".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.params.eps, 0.3);
        assert_eq!(c.trials, 5);
        assert_eq!(c.verbosity, Verbosity::Full);
        assert_ne!(c.hash(), RunConfig::from_json(BASE).unwrap().hash());
        assert!(RunConfig::from_json_with_overrides(BASE, &["trials".into()]).is_err());
    }

    #[test]
    fn validation_names_fields() {
        let err = |o: &str| {
            RunConfig::from_json_with_overrides(BASE, &[o.to_owned()])
                .unwrap_err()
                .to_string()
        };
        assert!(err("trials=0").contains("trials"));
        assert!(err("params.eps=1.5").contains("params"));
        assert!(err("protocol=beep-over-mac").contains("mac"));
        assert!(err(r#"graph={"kind":"file","path":"/nonexistent/g.txt"}"#).contains("graph.path"));
        assert!(err("bogus=1").contains("bogus"));
    }

    #[test]
    fn adversary_selection() {
        let g = graph::path(6);
        let spec = AdversarySpec {
            select: AdversarySelect::OutsideNeighborhood { node: 0, hops: 2 },
            script: CoinScript::AlwaysMin,
            target: None,
            stop_after_target: false,
        };
        assert_eq!(spec.nodes(&g).unwrap(), BTreeSet::from([3, 4, 5]));
        assert_eq!(spec.target(), Some(0));
        let coins = spec.apply(&g, CoinSource::new(1)).unwrap();
        assert_eq!(coins.scripted_nodes(), BTreeSet::from([3, 4, 5]));

        let bad = AdversarySpec {
            select: AdversarySelect::Nodes(vec![9]),
            ..spec
        };
        assert!(bad.nodes(&g).is_err());
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(trial_seed(1, 2), trial_seed(1, 2));
        assert_ne!(trial_seed(1, 2), trial_seed(1, 3));
        assert_ne!(trial_seed(1, 2), trial_seed(2, 2));
        assert_ne!(graph_seed(5), scheduler_seed(5));
    }
}
