//! Undirected simple graphs, topology generators and the edge-list format.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node identifier in `0..n`.
pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {node} out of range for graph with {n} nodes")]
    InvalidNode { node: NodeId, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("line construction needs an even delta >= 2, got {0}")]
    InvalidDelta(usize),
    #[error("no simple {degree}-regular graph on {n} nodes")]
    InvalidDegree { n: usize, degree: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Undirected simple graph stored as sorted, duplicate-free adjacency lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Edgeless graph on `n` nodes.
    pub fn empty(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from unordered pairs. Duplicate pairs collapse into one edge.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut adjacency = vec![Vec::new(); n];
        for (u, v) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(GraphError::InvalidNode { node, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.node_count() && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Maximum neighbor-list length, 0 for edgeless (or empty) graphs.
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edges as `(u, v)` pairs with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    /// All nodes within hop distance `h` of `v`, including `v`.
    pub fn neighborhood(&self, v: NodeId, h: usize) -> Result<BTreeSet<NodeId>, GraphError> {
        let dist = self.bfs_distances(v)?;
        Ok(dist
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some_and(|d| d <= h))
            .map(|(u, _)| u)
            .collect())
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: NodeId) -> Result<Vec<Option<usize>>, GraphError> {
        let n = self.node_count();
        if source >= n {
            return Err(GraphError::InvalidNode { node: source, n });
        }
        let mut dist = vec![None; n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for &w in &self.adjacency[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    /// Largest eccentricity, or `None` when the graph is disconnected or empty.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for v in 0..self.node_count() {
            let dist = self.bfs_distances(v).ok()?;
            for d in dist {
                best = best.max(d?);
            }
        }
        (self.node_count() > 0).then_some(best)
    }

    /// Serializes to the edge-list text format: a `n <count>` header, then one `u v` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.node_count());
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    /// Parses the edge-list text format. Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let parse_err = |line: usize, message: String| GraphError::Parse { line, message };

        let (header_line, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `n <count>` header".into()))?;
        let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["n", count] => count
                .parse::<usize>()
                .map_err(|e| parse_err(header_line, format!("bad node count: {e}")))?,
            _ => return Err(parse_err(header_line, "expected `n <count>` header".into())),
        };

        let mut edges = Vec::new();
        for (line, body) in lines {
            let fields: Vec<_> = body.split_whitespace().collect();
            let [u, v] = fields.as_slice() else {
                return Err(parse_err(line, format!("expected `u v`, got `{body}`")));
            };
            let parse_id = |s: &str| {
                s.parse::<NodeId>()
                    .map_err(|e| parse_err(line, format!("bad node id `{s}`: {e}")))
            };
            let (u, v) = (parse_id(u)?, parse_id(v)?);
            if u == v {
                return Err(parse_err(line, format!("self-loop on node {u}")));
            }
            if u >= n || v >= n {
                return Err(parse_err(line, format!("node id {} >= n = {n}", u.max(v))));
            }
            edges.push((u, v));
        }
        Self::from_edges(n, edges)
    }
}

pub fn path(n: usize) -> Graph {
    Graph::from_edges(n, (1..n).map(|v| (v - 1, v))).expect("valid path")
}

pub fn cycle(n: usize) -> Graph {
    if n < 3 {
        return path(n);
    }
    Graph::from_edges(n, (0..n).map(|v| (v, (v + 1) % n))).expect("valid cycle")
}

/// Star with center `0` and `leaves` leaves.
pub fn star(leaves: usize) -> Graph {
    Graph::from_edges(leaves + 1, (1..=leaves).map(|v| (0, v))).expect("valid star")
}

pub fn complete(n: usize) -> Graph {
    let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
    Graph::from_edges(n, edges).expect("valid complete graph")
}

/// Circulant graph joining every node to the `k` nearest nodes on each side of a ring.
pub fn ring_lattice(n: usize, k: usize) -> Graph {
    let k = k.min(n.saturating_sub(1) / 2);
    let edges = (0..n).flat_map(|u| (1..=k).map(move |j| (u, (u + j) % n)));
    Graph::from_edges(n, edges).expect("valid ring lattice")
}

/// G(n, p): every unordered pair is present independently with probability `p`.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph, GraphError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::InvalidProbability(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Random `degree`-regular graph.
///
/// Starts from a deterministic regular circulant and randomizes it with
/// degree-preserving double-edge swaps (10 swap attempts per edge).
pub fn random_regular(n: usize, degree: usize, seed: u64) -> Result<Graph, GraphError> {
    if degree >= n.max(1) || (n * degree) % 2 == 1 {
        return Err(GraphError::InvalidDegree { n, degree });
    }
    let mut adj: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
    let mut edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(n * degree / 2);
    let add = |adj: &mut Vec<BTreeSet<NodeId>>, u: NodeId, v: NodeId| {
        adj[u].insert(v);
        adj[v].insert(u);
    };
    for u in 0..n {
        for j in 1..=degree / 2 {
            add(&mut adj, u, (u + j) % n);
        }
        // Odd degree implies even n: pair each node with its antipode.
        if degree % 2 == 1 && u < n / 2 {
            add(&mut adj, u, u + n / 2);
        }
    }
    for (u, list) in adj.iter().enumerate() {
        edges.extend(list.iter().filter(|&&v| u < v).map(|&v| (u, v)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = edges.len();
    if m >= 2 {
        for _ in 0..10 * m {
            let i = rng.random_range(0..m);
            let j = rng.random_range(0..m);
            let (a, b) = edges[i];
            let (c, d) = edges[j];
            // Rewire a-b, c-d into a-d, c-b (or a-c, b-d).
            let (x, y) = if rng.random_bool(0.5) { (d, c) } else { (c, d) };
            if a == x || b == y || adj[a].contains(&x) || adj[b].contains(&y) {
                continue;
            }
            if i == j || a == y || b == x {
                continue;
            }
            adj[a].remove(&b);
            adj[b].remove(&a);
            adj[c].remove(&d);
            adj[d].remove(&c);
            adj[a].insert(x);
            adj[x].insert(a);
            adj[b].insert(y);
            adj[y].insert(b);
            edges[i] = (a.min(x), a.max(x));
            edges[j] = (b.min(y), b.max(y));
        }
    }
    let mut order: Vec<_> = edges;
    order.shuffle(&mut rng);
    Graph::from_edges(n, order)
}

/// `delta` nodes on a line at unit spacing with transmission range `delta / 2`:
/// node `i` is adjacent to node `j` iff `|i - j| <= delta / 2`.
pub fn swat_line(delta: usize) -> Result<Graph, GraphError> {
    if delta < 2 || delta % 2 == 1 {
        return Err(GraphError::InvalidDelta(delta));
    }
    let range = delta / 2;
    let edges = (0..delta).flat_map(|i| (i + 1..delta.min(i + range + 1)).map(move |j| (i, j)));
    Graph::from_edges(delta, edges)
}
