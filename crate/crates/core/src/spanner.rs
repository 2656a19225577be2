//! Greedy t-spanners, their verification, and a distributed construction
//! expressed as an input protocol.
//!
//! The distributed construction gathers every node's adjacency at the root,
//! which runs the greedy algorithm and scatters to each node its incident
//! spanner edges. Reports and replies are `n`-bit bitmaps indexed by node id.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::pi::{NodeTranscript, PiDescriptor, PiMessage};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpannerResult {
    pub subgraph: Graph,
    pub t: usize,
    pub s: usize,
}

impl SpannerResult {
    /// Edge list with a comment header recording `t` and `s`.
    pub fn to_text(&self) -> String {
        self.subgraph.to_edge_list(&[format!("t {}", self.t), format!("s {}", self.s)])
    }
}

/// `ceil(log2 n)`, at least 1.
pub fn default_k(n: usize) -> usize {
    (usize::BITS - n.max(2).saturating_sub(1).leading_zeros()).max(1) as usize
}

/// Hop distance from `u` to `v` in `adj`, searching at most `limit` hops.
fn bounded_distance(adj: &[Vec<NodeId>], u: NodeId, v: NodeId, limit: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::from([u]);
    dist[u] = 0;
    while let Some(x) = queue.pop_front() {
        if x == v {
            return Some(dist[x]);
        }
        if dist[x] == limit {
            continue;
        }
        for &y in &adj[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    None
}

/// Scans edges in lexicographic order and keeps `(u, v)` iff the spanner
/// built so far has no `u`-`v` path of at most `2k - 1` hops.
pub fn greedy_spanner(graph: &Graph, k: usize) -> Result<SpannerResult> {
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    let t = 2 * k - 1;
    let mut adj = vec![Vec::new(); graph.n()];
    let mut kept = Vec::new();
    for &(u, v) in graph.edges() {
        if bounded_distance(&adj, u, v, t).is_none() {
            adj[u].push(v);
            adj[v].push(u);
            kept.push((u, v));
        }
    }
    let s = kept.len();
    Ok(SpannerResult {
        subgraph: Graph::new(graph.n(), kept)?,
        t,
        s,
    })
}

/// True iff `candidate` is a connected spanning subgraph of `graph` in which
/// the endpoints of every `graph` edge are at most `t` hops apart.
pub fn verify_spanner(graph: &Graph, candidate: &Graph, t: usize) -> bool {
    if !(candidate.is_subgraph_of(graph) && candidate.is_connected()) {
        return false;
    }
    let adj: Vec<Vec<NodeId>> = (0..candidate.n()).map(|x| candidate.neighbors(x).to_vec()).collect();
    graph.edges().iter().all(|&(u, v)| bounded_distance(&adj, u, v, t).is_some())
}

fn bitmap(n: usize, set: impl IntoIterator<Item = NodeId>) -> Vec<bool> {
    let mut bits = vec![false; n];
    for v in set {
        bits[v] = true;
    }
    bits
}

fn to_bits(x: usize, width: usize) -> Vec<bool> {
    (0..width).rev().map(|i| (x >> i) & 1 == 1).collect()
}

fn from_bits(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
}

fn from_bitmap(bits: &[bool], n: usize) -> BTreeSet<NodeId> {
    bits.iter().take(n).enumerate().filter(|(_, &b)| b).map(|(v, _)| v).collect()
}

/// Bits used to carry a spanner edge count on `n` nodes.
pub fn size_width(n: usize) -> usize {
    let max = (n * n.saturating_sub(1) / 2).max(1);
    (usize::BITS - max.leading_zeros()) as usize
}

/// Gather/scatter construction: every other node reports its adjacency to
/// `root`; once all reports are in, `root` answers each node with its incident
/// edges of `greedy_spanner(graph, k)`.
///
/// Message `i` for `i < n - 1` is the report of the `i`-th non-root node; the
/// replies follow in the same node order. A reply is the incident-edge bitmap,
/// then the spanner's edge count in `size_width(n)` bits (MSB first), then one
/// bit set only for the root's smallest neighbor.
pub fn distributed_spanner_protocol(graph: &Graph, k: usize, root: NodeId) -> Result<PiDescriptor> {
    let n = graph.n();
    if n < 2 {
        return Err(Error::InvalidGraph("spanner protocol needs at least two nodes".into()));
    }
    if root >= n {
        return Err(Error::NodeOutOfRange { node: root, n });
    }
    let spanner = greedy_spanner(graph, k)?.subgraph;
    let others: Vec<NodeId> = (0..n).filter(|&u| u != root).collect();
    let partner = graph.neighbors(root).first().copied();
    let size_bits = to_bits(spanner.m(), size_width(n));
    let mut messages: Vec<PiMessage> = others
        .iter()
        .map(|&u| PiMessage {
            src: u,
            dst: root,
            bits: bitmap(n, graph.neighbors(u).iter().copied()),
            deps: vec![],
        })
        .collect();
    let reports: Vec<usize> = (0..others.len()).collect();
    for &u in &others {
        messages.push(PiMessage {
            src: root,
            dst: u,
            bits: [
                bitmap(n, spanner.neighbors(u).iter().copied()),
                size_bits.clone(),
                vec![Some(u) == partner],
            ]
            .concat(),
            deps: reports.clone(),
        });
    }
    PiDescriptor::new(n, messages)
}

/// What one node knows about the spanner after the construction protocol.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpannerView {
    pub incident: BTreeSet<NodeId>,
    /// Edge count of the whole spanner.
    pub s: usize,
    /// Set at the root's smallest neighbor.
    pub pad_partner: bool,
}

/// The spanner as learned by node `u` from its run of the construction
/// protocol.
///
/// The root rebuilds the graph from the reports it decoded plus its own
/// adjacency and reruns the greedy algorithm; everyone else reads the reply.
/// Ids that are not `graph` neighbors of `u` are discarded, since a node can
/// only ever talk to its neighbors.
pub fn learned_view(
    graph: &Graph,
    k: usize,
    root: NodeId,
    u: NodeId,
    pi: &PiDescriptor,
    transcript: &NodeTranscript,
) -> SpannerView {
    let n = graph.n();
    let mut view = if u == root {
        let mut edges = BTreeSet::new();
        for &v in graph.neighbors(root) {
            edges.insert((root.min(v), root.max(v)));
        }
        for (&i, bits) in &transcript.received {
            let src = pi.messages()[i].src;
            for v in from_bitmap(bits, n) {
                if v != src {
                    edges.insert((src.min(v), src.max(v)));
                }
            }
        }
        match Graph::new(n, edges).and_then(|g| greedy_spanner(&g, k)) {
            Ok(s) => SpannerView {
                incident: s.subgraph.neighbors(root).iter().copied().collect(),
                s: s.s,
                pad_partner: false,
            },
            Err(_) => SpannerView::default(),
        }
    } else {
        let reply = pi.stream(root, u).first().and_then(|i| transcript.received.get(i));
        match reply {
            Some(bits) => {
                let w = size_width(n);
                SpannerView {
                    incident: from_bitmap(bits, n),
                    s: bits.get(n..n + w).map(from_bits).unwrap_or(0),
                    pad_partner: bits.get(n + w).copied().unwrap_or(false),
                }
            }
            None => SpannerView::default(),
        }
    };
    view.incident.retain(|&v| graph.has_edge(u, v));
    view
}

/// Incident spanner edges as learned by node `u`; see [`learned_view`].
pub fn learned_incident_edges(
    graph: &Graph,
    k: usize,
    root: NodeId,
    u: NodeId,
    pi: &PiDescriptor,
    transcript: &NodeTranscript,
) -> BTreeSet<NodeId> {
    learned_view(graph, k, root, u, pi, transcript).incident
}

/// Assembles per-node incident sets into a graph, or `None` if two
/// endpoints disagree about an edge.
pub fn assemble_spanner(n: usize, incident: &[BTreeSet<NodeId>]) -> Option<Graph> {
    let mut edges = Vec::new();
    for (u, set) in incident.iter().enumerate() {
        for &v in set {
            if !incident.get(v)?.contains(&u) {
                return None;
            }
            if u < v {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).ok()
}
