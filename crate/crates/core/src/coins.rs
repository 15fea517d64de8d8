//! Per-node coin streams with optional adversarial scripts.
//!
//! Every node owns an independent ChaCha8 stream: the generator is keyed by
//! the master seed and node `v` reads stream number `v`. Draws are raw `u64`
//! words, and probabilities of the form `2^-k` are tested with integer
//! comparisons only, so runs are bit-reproducible on every platform.
//!
//! A script replaces a node's draws by position. The honest stream is still
//! advanced on every draw, so a script never shifts the schedule of the
//! draws it leaves alone.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

/// What a draw is used for. Protocols consume draws in a fixed order per slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawKind {
    /// Beep-or-listen decision in an estimation slot.
    Beep,
    /// Tie-breaking coin when a node listened too little to classify.
    Classify,
    /// Marking decision at the start of a marking interval.
    Mark,
    /// Slot-subset selection for marked nodes.
    Subset,
}

/// Adversarial replacement for a node's coin stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoinScript {
    /// Every draw is `0`: beep in every estimation slot, always marked.
    AlwaysMin,
    /// Every draw is `u64::MAX`: never beep, never marked.
    AlwaysMax,
    /// Replays the given words by draw position, then falls back to the honest stream.
    Sequence(Vec<u64>),
    /// Overrides only draws of one kind.
    Fixed { kind: DrawKind, value: u64 },
}

impl CoinScript {
    fn apply(&self, position: u64, kind: DrawKind, honest: u64) -> u64 {
        match self {
            CoinScript::AlwaysMin => 0,
            CoinScript::AlwaysMax => u64::MAX,
            CoinScript::Sequence(words) => usize::try_from(position)
                .ok()
                .and_then(|i| words.get(i).copied())
                .unwrap_or(honest),
            CoinScript::Fixed { kind: k, value } if *k == kind => *value,
            CoinScript::Fixed { .. } => honest,
        }
    }
}

/// Master-seeded coin source, with per-node script overrides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinSource {
    seed: u64,
    scripts: BTreeMap<NodeId, CoinScript>,
}

impl CoinSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scripts: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn script(&self, v: NodeId) -> Option<&CoinScript> {
        self.scripts.get(&v)
    }

    pub fn scripted_nodes(&self) -> BTreeSet<NodeId> {
        self.scripts.keys().copied().collect()
    }

    /// Replaces the streams of `nodes` with `script`; other nodes are untouched.
    pub fn with_script<I>(mut self, nodes: I, script: CoinScript) -> Self
    where
        I: IntoIterator<Item = NodeId>,
    {
        for v in nodes {
            self.scripts.insert(v, script.clone());
        }
        self
    }

    /// Fresh draw stream for node `v`, positioned at its first draw.
    pub fn stream(&self, v: NodeId) -> NodeCoins {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(v as u64);
        NodeCoins {
            rng,
            script: self.scripts.get(&v).cloned(),
            position: 0,
        }
    }
}

/// Overrides the coins of `nodes` with an adversarial `script`.
pub fn script_adversary<I>(coins: CoinSource, nodes: I, script: CoinScript) -> CoinSource
where
    I: IntoIterator<Item = NodeId>,
{
    coins.with_script(nodes, script)
}

/// One node's draw stream.
#[derive(Clone, Debug)]
pub struct NodeCoins {
    rng: ChaCha8Rng,
    script: Option<CoinScript>,
    position: u64,
}

impl NodeCoins {
    pub fn draw(&mut self, kind: DrawKind) -> u64 {
        let honest = self.rng.next_u64();
        let position = self.position;
        self.position += 1;
        match &self.script {
            Some(script) => script.apply(position, kind, honest),
            None => honest,
        }
    }

    /// Number of draws consumed so far.
    pub fn position(&self) -> u64 {
        self.position
    }
}

/// True with probability `2^-exponent` for a uniform `draw`.
///
/// Exact for exponents up to 64; larger exponents always return false
/// (an absolute error below `2^-64`).
pub fn below_pow2(draw: u64, exponent: u32) -> bool {
    match exponent {
        0 => true,
        1..=63 => draw >> (64 - exponent) == 0,
        64 => draw == 0,
        _ => false,
    }
}

/// Fair coin.
pub fn fair(draw: u64) -> bool {
    below_pow2(draw, 1)
}

/// Maps a uniform word to `0..bound` by multiply-shift (bias below `bound / 2^64`).
pub fn uniform_index(draw: u64, bound: u64) -> u64 {
    ((u128::from(draw) * u128::from(bound)) >> 64) as u64
}

/// Uniform `size`-subset of `0..universe` using Floyd's algorithm.
///
/// Consumes exactly `size` draws of kind [`DrawKind::Subset`].
pub fn random_subset(coins: &mut NodeCoins, universe: u64, size: u64) -> BTreeSet<u64> {
    assert!(size <= universe, "subset larger than universe");
    let mut chosen = BTreeSet::new();
    for j in universe - size..universe {
        let t = uniform_index(coins.draw(DrawKind::Subset), j + 1);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn take(coins: &CoinSource, v: NodeId, k: usize) -> Vec<u64> {
        let mut s = coins.stream(v);
        (0..k).map(|_| s.draw(DrawKind::Beep)).collect()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = CoinSource::new(5);
        assert_eq!(take(&a, 3, 64), take(&CoinSource::new(5), 3, 64));
        assert_ne!(take(&a, 3, 8), take(&a, 4, 8));
        assert_ne!(take(&a, 3, 8), take(&CoinSource::new(6), 3, 8));
    }

    #[test]
    fn empty_script_is_identity() {
        let a = CoinSource::new(11);
        let b = script_adversary(a.clone(), [], CoinScript::AlwaysMin);
        assert_eq!(a, b);
        for v in 0..5 {
            assert_eq!(take(&a, v, 32), take(&b, v, 32));
        }
    }

    #[test]
    fn scripts_leave_other_nodes_alone() {
        let a = CoinSource::new(11);
        let b = a.clone().with_script([2, 7], CoinScript::AlwaysMax);
        assert_eq!(take(&b, 2, 4), vec![u64::MAX; 4]);
        for v in [0, 1, 3, 6, 8] {
            assert_eq!(take(&a, v, 100), take(&b, v, 100));
        }
    }

    #[test]
    fn sequence_and_fixed_scripts_are_positional() {
        let honest = take(&CoinSource::new(1), 0, 6);
        let seq = CoinSource::new(1).with_script([0], CoinScript::Sequence(vec![9, 8]));
        assert_eq!(take(&seq, 0, 6), [&[9, 8][..], &honest[2..]].concat());

        let fixed = CoinSource::new(1).with_script(
            [0],
            CoinScript::Fixed {
                kind: DrawKind::Mark,
                value: 0,
            },
        );
        let mut s = fixed.stream(0);
        let mut h = CoinSource::new(1).stream(0);
        assert_eq!(s.draw(DrawKind::Beep), h.draw(DrawKind::Beep));
        assert_eq!(s.draw(DrawKind::Mark), 0);
        h.draw(DrawKind::Mark);
        assert_eq!(s.draw(DrawKind::Beep), h.draw(DrawKind::Beep));
        assert_eq!(s.position(), 3);
    }

    #[test]
    fn below_pow2_thresholds() {
        assert!(below_pow2(u64::MAX, 0));
        assert!(below_pow2((1 << 63) - 1, 1));
        assert!(!below_pow2(1 << 63, 1));
        assert!(below_pow2((1 << 61) - 1, 3));
        assert!(!below_pow2(1 << 61, 3));
        assert!(below_pow2(0, 64));
        assert!(!below_pow2(1, 64));
        assert!(!below_pow2(0, 65));
    }

    #[test]
    fn below_pow2_frequency() {
        let mut s = CoinSource::new(3).stream(0);
        let hits = (0..100_000)
            .filter(|_| below_pow2(s.draw(DrawKind::Beep), 2))
            .count();
        assert!((24_000..26_000).contains(&hits), "hits = {hits}");
    }

    #[test]
    fn subset_uniformity_small() {
        // All 6 two-subsets of 0..4 should appear with roughly equal frequency.
        let mut s = CoinSource::new(17).stream(0);
        let mut counts = BTreeMap::new();
        for _ in 0..60_000 {
            *counts.entry(random_subset(&mut s, 4, 2)).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (subset, c) in counts {
            assert!((9_300..10_700).contains(&c), "{subset:?}: {c}");
        }
    }

    proptest! {
        #[test]
        fn subset_has_exact_size(seed: u64, universe in 1u64..400, frac in 0.0f64..=1.0) {
            let size = (universe as f64 * frac) as u64;
            let mut s = CoinSource::new(seed).stream(0);
            let set = random_subset(&mut s, universe, size);
            prop_assert_eq!(set.len() as u64, size);
            prop_assert!(set.iter().all(|&x| x < universe));
            prop_assert_eq!(s.position(), size);
        }

        #[test]
        fn uniform_index_in_range(draw: u64, bound in 1u64..u64::MAX) {
            prop_assert!(uniform_index(draw, bound) < bound);
        }
    }
}
