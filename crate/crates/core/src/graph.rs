//! Undirected topologies with stable node identities.
//!
//! The same type describes the full network as well as the spanning subgraphs
//! (BFS trees, spanners) that protocols route over.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Immutable undirected simple graph on nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    edges: Vec<(NodeId, NodeId)>,
    adj: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds a graph, normalizing each edge to `(min, max)`.
    ///
    /// Rejects self-loops, duplicate edges and out-of-range endpoints.
    /// Connectivity is not required here; see [`Graph::is_connected`].
    pub fn new(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::NodeOutOfRange { node: u.max(v), n });
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph { n, edges, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// Sorted neighbor list of `u`.
    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.n && self.adj[u].binary_search(&v).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        self.distances_from(0).iter().all(Option::is_some)
    }

    /// Connected and acyclic.
    pub fn is_tree(&self) -> bool {
        self.n >= 1 && self.m() + 1 == self.n && self.is_connected()
    }

    /// Hop distances from `src`; `None` for unreachable nodes.
    pub fn distances_from(&self, src: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or_default();
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn distance(&self, u: NodeId, v: NodeId) -> Option<usize> {
        self.distances_from(u)[v]
    }

    /// True iff every edge of `self` is an edge of `other` and both share the node set.
    pub fn is_subgraph_of(&self, other: &Graph) -> bool {
        self.n == other.n && self.edges.iter().all(|&(u, v)| other.has_edge(u, v))
    }

    /// Parses the edge-list format: `n m` on the first line, then `m` lines `u v`.
    ///
    /// Lines starting with `#` are comments and may appear anywhere.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing `n m` header".into(),
        })?;
        let [n, m] = parse_pair(hline, header)?;
        let mut edges = Vec::with_capacity(m);
        for (line, text) in lines {
            if edges.len() == m {
                return Err(Error::Parse {
                    line,
                    msg: format!("more than the declared {m} edges"),
                });
            }
            let [u, v] = parse_pair(line, text)?;
            if !(u < v && v < n) {
                return Err(Error::Parse {
                    line,
                    msg: format!("edge `{u} {v}` must satisfy 0 <= u < v < {n}"),
                });
            }
            edges.push((u, v));
        }
        if edges.len() != m {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                msg: format!("declared {m} edges, found {}", edges.len()),
            });
        }
        Graph::new(n, edges)
    }

    /// Serializes to the edge-list format, preceded by optional `#` comment lines.
    pub fn to_edge_list(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{} {}", self.n, self.m());
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }
}

fn parse_pair(line: usize, text: &str) -> Result<[usize; 2]> {
    let fields: Vec<_> = text.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::Parse {
            line,
            msg: format!("expected two integers, found `{text}`"),
        });
    }
    let mut out = [0; 2];
    for (slot, f) in out.iter_mut().zip(&fields) {
        *slot = f.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("`{f}` is not a non-negative integer"),
        })?;
    }
    Ok(out)
}

/// Graph families understood by [`generate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GraphKind {
    Path,
    Cycle,
    Star,
    Complete,
    Grid,
    /// Erdős–Rényi `G(n, p)`, resampled until connected.
    Random(f64),
}

const RANDOM_RETRIES: usize = 1000;

/// Deterministic graph generator; `seed` only matters for [`GraphKind::Random`].
pub fn generate(kind: GraphKind, n: usize, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidGraph("n must be at least 1".into()));
    }
    match kind {
        GraphKind::Path => Graph::new(n, (1..n).map(|i| (i - 1, i))),
        GraphKind::Cycle => {
            if n < 3 {
                return Err(Error::InvalidGraph("a cycle needs at least 3 nodes".into()));
            }
            Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
        }
        GraphKind::Star => Graph::new(n, (1..n).map(|i| (0, i))),
        GraphKind::Complete => {
            Graph::new(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
        }
        GraphKind::Grid => {
            // Row-major layout; the last row may be partial.
            let rows = (n as f64).sqrt().floor().max(1.0) as usize;
            let cols = n.div_ceil(rows);
            let mut edges = Vec::new();
            for u in 0..n {
                let (r, c) = (u / cols, u % cols);
                if c + 1 < cols && u + 1 < n {
                    edges.push((u, u + 1));
                }
                if (r + 1) * cols + c < n {
                    edges.push((u, u + cols));
                }
            }
            Graph::new(n, edges)
        }
        GraphKind::Random(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidGraph(format!("edge probability {p} not in (0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..RANDOM_RETRIES {
                let mut edges = Vec::new();
                for u in 0..n {
                    for v in u + 1..n {
                        if rng.random_bool(p) {
                            edges.push((u, v));
                        }
                    }
                }
                let g = Graph::new(n, edges)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::RetriesExhausted(RANDOM_RETRIES))
        }
    }
}

/// Every connected labeled graph on `n` nodes (`n` small: there are `2^(n(n-1)/2)` candidates).
pub fn all_connected_graphs(n: usize) -> Vec<Graph> {
    let pairs: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    assert!(pairs.len() < 24, "enumeration limited to tiny graphs");
    (0u32..1 << pairs.len())
        .filter_map(|mask| {
            let edges = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e);
            Graph::new(n, edges).ok().filter(Graph::is_connected)
        })
        .collect()
}
