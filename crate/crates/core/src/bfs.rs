//! Content-oblivious BFS tree construction.
//!
//! Every message is empty and every received payload is ignored: a node's
//! behavior depends only on who a message came from and on its own state.
//! The blocking pseudocode maps onto four states:
//!
//! * `Init`: the first message sets the parent and is acknowledged.
//! * `Idle`: a message from the parent starts an explore step; anything else
//!   marks the sender as a sibling and is acknowledged.
//! * `Explore`: neighbors other than the parent are messaged one at a time in
//!   ascending id order, each reply releasing the next. On the `(n-1)`-th step
//!   the node then repeats the loop over its current children (the dummy
//!   step) before acknowledging its parent. A message from any neighbor other
//!   than the one awaited is a sibling's explore.
//! * `Done`: the node has acknowledged its parent for the last time; the next
//!   message from the parent belongs to whatever runs after BFS.
//!
//! Exactly one message is in flight at any time, so a run has a single
//! possible delivery order.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::netsim::{AdversarySpec, Automaton, Ctx, Metrics, Simulation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BfsState {
    Init,
    Idle,
    Explore,
    Done,
}

/// How a node reacts to one incoming message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reaction {
    Send(NodeId),
    Quiet,
    /// A message from the parent after `Done`: not BFS traffic.
    Handoff,
}

#[derive(Clone, Debug)]
pub struct BfsNode {
    n: usize,
    is_root: bool,
    neighbors: Vec<NodeId>,
    state: BfsState,
    parent: Option<NodeId>,
    children: BTreeSet<NodeId>,
    /// Regular explore steps started.
    count: usize,
    dummy_done: bool,
    targets: Vec<NodeId>,
    cursor: usize,
    in_dummy: bool,
    done_at: Option<u64>,
    /// Messages that fit no transition (never expected in a valid run).
    unexpected: u64,
}

impl BfsNode {
    pub fn new(n: usize, neighbors: Vec<NodeId>, is_root: bool) -> Self {
        assert!(n >= 1);
        let (state, children) = if is_root {
            (BfsState::Idle, neighbors.iter().copied().collect())
        } else {
            (BfsState::Init, BTreeSet::new())
        };
        BfsNode {
            n,
            is_root,
            neighbors,
            state,
            parent: None,
            children,
            count: 0,
            dummy_done: false,
            targets: Vec::new(),
            cursor: 0,
            in_dummy: false,
            done_at: None,
            unexpected: 0,
        }
    }

    pub fn state(&self) -> BfsState {
        self.state
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> &BTreeSet<NodeId> {
        &self.children
    }

    /// Explore steps performed, the dummy step included.
    pub fn explores(&self) -> usize {
        self.count + usize::from(self.dummy_done)
    }

    pub fn done_at(&self) -> Option<u64> {
        self.done_at
    }

    pub fn unexpected(&self) -> u64 {
        self.unexpected
    }

    /// Root only: begins the first explore step.
    pub fn wake(&mut self, now: u64) -> Reaction {
        debug_assert!(self.is_root);
        if self.neighbors.is_empty() {
            // Single node: the n steps are all vacuous.
            self.count = self.n - 1;
            self.dummy_done = true;
            self.finish(now);
            return Reaction::Quiet;
        }
        self.start_explore(now)
    }

    pub fn receive(&mut self, from: NodeId, now: u64) -> Reaction {
        match self.state {
            BfsState::Init => {
                self.parent = Some(from);
                self.children = self.neighbors.iter().copied().filter(|&v| v != from).collect();
                self.state = BfsState::Idle;
                Reaction::Send(from)
            }
            BfsState::Idle if Some(from) == self.parent => self.start_explore(now),
            BfsState::Explore if from == self.targets[self.cursor] => {
                self.cursor += 1;
                self.advance(now)
            }
            BfsState::Explore if Some(from) == self.parent => {
                self.unexpected += 1;
                Reaction::Quiet
            }
            BfsState::Done if Some(from) == self.parent => Reaction::Handoff,
            BfsState::Idle | BfsState::Explore | BfsState::Done => {
                self.children.remove(&from);
                Reaction::Send(from)
            }
        }
    }

    fn start_explore(&mut self, now: u64) -> Reaction {
        self.state = BfsState::Explore;
        self.count += 1;
        self.targets = self.neighbors.iter().copied().filter(|&v| Some(v) != self.parent).collect();
        self.cursor = 0;
        self.in_dummy = false;
        self.advance(now)
    }

    fn advance(&mut self, now: u64) -> Reaction {
        loop {
            if let Some(&v) = self.targets.get(self.cursor) {
                return Reaction::Send(v);
            }
            if !self.in_dummy && self.count == self.n - 1 {
                self.in_dummy = true;
                self.dummy_done = true;
                self.targets = self.children.iter().copied().collect();
                self.cursor = 0;
                continue;
            }
            break;
        }
        self.finish(now);
        match self.parent {
            Some(p) => Reaction::Send(p),
            None if self.state == BfsState::Done => Reaction::Quiet,
            None => self.start_explore(now),
        }
    }

    fn finish(&mut self, now: u64) {
        if self.count == self.n - 1 {
            self.state = BfsState::Done;
            self.done_at = Some(now);
        } else {
            self.state = BfsState::Idle;
        }
    }
}

impl Automaton for BfsNode {
    fn on_wake(&mut self, ctx: &mut Ctx<'_>) {
        if let Reaction::Send(v) = self.wake(ctx.now()) {
            ctx.send(v, Vec::new());
        }
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_>, from: NodeId, _payload: &[u8]) {
        match self.receive(from, ctx.now()) {
            Reaction::Send(v) => ctx.send(v, Vec::new()),
            Reaction::Quiet => {}
            Reaction::Handoff => self.unexpected += 1,
        }
    }
}

/// One automaton per node of `graph`.
pub fn bfs_automata(graph: &Graph, root: NodeId) -> Vec<BfsNode> {
    (0..graph.n())
        .map(|u| BfsNode::new(graph.n(), graph.neighbors(u).to_vec(), u == root))
        .collect()
}

/// Worst-case message count: each of the `n` steps at each node sends at most
/// one message and one reply across every incident edge, from both ends.
pub fn bfs_message_bound(n: usize, m: usize) -> u64 {
    4 * n as u64 * m as u64
}

/// Outcome of a standalone BFS run.
pub struct BfsRun {
    pub tree: BfsTree,
    pub nodes: Vec<BfsNode>,
    pub metrics: Metrics,
}

/// Runs BFS from `root` on `graph` under `adversary`.
pub fn run_bfs(graph: &Graph, root: NodeId, adversary: &AdversarySpec, seed: u64) -> Result<BfsRun> {
    if root >= graph.n() {
        return Err(Error::NodeOutOfRange { node: root, n: graph.n() });
    }
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let out = Simulation::new(graph.clone(), bfs_automata(graph, root), root, adversary, seed)?.run_to_quiescence()?;
    Ok(BfsRun {
        tree: BfsTree::from_nodes(root, &out.nodes),
        nodes: out.nodes,
        metrics: out.metrics,
    })
}

/// A rooted spanning tree as learned by the nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BfsTree {
    pub root: NodeId,
    pub parent: Vec<Option<NodeId>>,
    pub children: Vec<BTreeSet<NodeId>>,
}

impl BfsTree {
    /// Children derived from the parent pointers.
    pub fn from_parents(root: NodeId, parent: Vec<Option<NodeId>>) -> Self {
        let mut children = vec![BTreeSet::new(); parent.len()];
        for (u, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p < children.len() {
                    children[p].insert(u);
                }
            }
        }
        BfsTree {
            root,
            parent,
            children,
        }
    }

    /// Collects each node's own view after a run.
    pub fn from_nodes(root: NodeId, nodes: &[BfsNode]) -> Self {
        BfsTree {
            root,
            parent: nodes.iter().map(BfsNode::parent).collect(),
            children: nodes.iter().map(|s| s.children().clone()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    /// The tree edges, as a graph on the same node set.
    pub fn to_graph(&self) -> Result<Graph> {
        let edges = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(u, p)| p.map(|p| (u, p)));
        let g = Graph::new(self.n(), edges)?;
        if !g.is_tree() {
            return Err(Error::NotATree);
        }
        Ok(g)
    }

    /// One `child parent` line per non-root node.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (u, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                let _ = writeln!(out, "{u} {p}");
            }
        }
        out
    }

    /// Inverse of [`BfsTree::to_text`] for a tree on `n` nodes.
    pub fn parse(text: &str, n: usize, root: NodeId) -> Result<Self> {
        let mut parent = vec![None; n];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|f| f.parse().map_err(|_| bad(format!("`{f}` is not a node id"))))
                .collect::<Result<_>>()?;
            let [c, p] = nums[..] else {
                return Err(bad("expected `child parent`".into()));
            };
            if c >= n || p >= n || c == root || parent[c].is_some() {
                return Err(bad(format!("invalid entry `{line}`")));
            }
            parent[c] = Some(p);
        }
        Ok(BfsTree::from_parents(root, parent))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerificationReport {
    pub spanning: bool,
    pub acyclic: bool,
    pub distance_correct: bool,
    pub children_consistent: bool,
}

impl VerificationReport {
    pub fn all(&self) -> bool {
        self.spanning && self.acyclic && self.distance_correct && self.children_consistent
    }
}

/// Checks `tree` against breadth-first distances in `graph`.
pub fn verify_bfs(graph: &Graph, root: NodeId, tree: &BfsTree) -> VerificationReport {
    let n = graph.n();
    if tree.n() != n || tree.children.len() != n || root >= n {
        return VerificationReport::default();
    }
    let spanning = tree.root == root
        && tree.parent[root].is_none()
        && (0..n)
            .filter(|&u| u != root)
            .all(|u| tree.parent[u].is_some_and(|p| graph.has_edge(u, p)));

    // Every node must reach the root by following parents within n hops.
    let acyclic = (0..n).all(|u| {
        let mut cur = u;
        for _ in 0..n {
            match tree.parent[cur] {
                Some(p) if p < n => cur = p,
                Some(_) => return false,
                None => return cur == root,
            }
        }
        false
    });

    let dist = bfs_distances(graph, root);
    let distance_correct = (0..n).all(|u| match tree.parent[u] {
        None => u == root,
        Some(p) => p < n && dist[p] + 1 == dist[u],
    });

    let children_consistent = graph.edges().iter().all(|&(u, v)| {
        let tree_edge = tree.parent[u] == Some(v) || tree.parent[v] == Some(u);
        let claims_uv = tree.children[u].contains(&v);
        let claims_vu = tree.children[v].contains(&u);
        claims_uv == (tree.parent[v] == Some(u))
            && claims_vu == (tree.parent[u] == Some(v))
            && (tree_edge || !(claims_uv || claims_vu))
    }) && (0..n).all(|u| tree.children[u].iter().all(|&c| graph.has_edge(u, c)));

    VerificationReport {
        spanning,
        acyclic,
        distance_correct,
        children_consistent,
    }
}

fn bfs_distances(graph: &Graph, root: NodeId) -> Vec<usize> {
    let mut dist = vec![usize::MAX; graph.n()];
    let mut queue = VecDeque::from([root]);
    dist[root] = 0;
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}
