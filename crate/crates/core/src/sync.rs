//! Root-triggered synchronizer: runs a FUS protocol round by round on top of
//! the asynchronous network.
//!
//! The initiator opens a round by sending its symbols to every neighbor. A
//! node that receives its first symbol of a round adopts the sender as its
//! parent for that round, sends its own symbols to everyone but the parent,
//! and holds the parent's symbol back until all other neighbors have been
//! heard. The initiator opens round `r + 1` only after finishing round `r`,
//! so rounds cannot interleave at any node and no round marker is needed.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::fus::{FusNode, FusProtocol};
use crate::graph::{Graph, NodeId};
use crate::netsim::{AdversarySpec, Automaton, Ctx, Metrics, Simulation, Tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncState {
    Init,
    Active,
    Done,
}

/// Outgoing envelope produced by the synchronizer.
pub type Outgoing = (NodeId, Vec<u8>, Tag);

/// Step numbers at which a node started and finished one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundLog {
    pub round: u64,
    pub parent: Option<NodeId>,
    pub started: u64,
    pub finished: u64,
}

#[derive(Clone, Debug)]
pub struct SyncNode<N> {
    inner: N,
    initiator: bool,
    rounds: u64,
    stage: u32,
    round: u64,
    state: SyncState,
    parent: Option<NodeId>,
    received: Vec<Option<Vec<u8>>>,
    held: Option<Vec<u8>>,
    started: u64,
    log: Vec<RoundLog>,
}

impl<N: FusNode> SyncNode<N> {
    pub fn new(inner: N, initiator: bool, rounds: u64, stage: u32) -> Self {
        let degree = inner.neighbors().len();
        SyncNode {
            inner,
            initiator,
            rounds,
            stage,
            round: 0,
            state: SyncState::Init,
            parent: None,
            received: vec![None; degree],
            held: None,
            started: 0,
            log: Vec::new(),
        }
    }

    pub fn inner(&self) -> &N {
        &self.inner
    }

    pub fn into_inner(self) -> N {
        self.inner
    }

    pub fn state(&self) -> SyncState {
        self.state
    }

    /// Rounds this node has finished.
    pub fn rounds_done(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn is_complete(&self) -> bool {
        self.rounds_done() == self.rounds
    }

    pub fn log(&self) -> &[RoundLog] {
        &self.log
    }

    /// Initiator only: opens round 1.
    pub fn start(&mut self, now: u64, out: &mut Vec<Outgoing>) {
        debug_assert!(self.initiator);
        if self.rounds > 0 {
            self.open_round(None, now, out);
        }
    }

    pub fn receive(&mut self, from: NodeId, payload: &[u8], now: u64, out: &mut Vec<Outgoing>) {
        if self.state != SyncState::Active {
            if self.initiator || self.is_complete() {
                // Not part of any round this node can still take part in.
                return;
            }
            self.open_round(Some(from), now, out);
        }
        let Ok(slot) = self.inner.neighbors().binary_search(&from) else {
            return;
        };
        self.received[slot] = Some(payload.to_vec());
        if self.received.iter().all(Option::is_some) {
            self.close_round(now, out);
        }
    }

    fn open_round(&mut self, parent: Option<NodeId>, now: u64, out: &mut Vec<Outgoing>) {
        self.round += 1;
        self.state = SyncState::Active;
        self.parent = parent;
        self.started = now;
        let tag = Tag { stage: self.stage, round: self.round };
        let symbols = self.inner.emit(self.round);
        for (&v, payload) in self.inner.neighbors().iter().zip(symbols) {
            if Some(v) == parent {
                self.held = Some(payload);
            } else {
                out.push((v, payload, tag));
            }
        }
        if self.inner.neighbors().is_empty() {
            self.close_round(now, out);
        }
    }

    fn close_round(&mut self, now: u64, out: &mut Vec<Outgoing>) {
        let inbox: Vec<Vec<u8>> = self.received.iter_mut().map(|m| m.take().unwrap_or_default()).collect();
        self.inner.absorb(self.round, &inbox);
        if let (Some(p), Some(payload)) = (self.parent, self.held.take()) {
            out.push((p, payload, Tag { stage: self.stage, round: self.round }));
        }
        self.state = SyncState::Done;
        self.log.push(RoundLog {
            round: self.round,
            parent: self.parent,
            started: self.started,
            finished: now,
        });
        if self.initiator && self.round < self.rounds {
            self.open_round(None, now, out);
        }
    }
}

impl<N: FusNode> Automaton for SyncNode<N> {
    fn on_wake(&mut self, ctx: &mut Ctx<'_>) {
        let mut out = Vec::new();
        self.start(ctx.now(), &mut out);
        for (v, p, tag) in out {
            ctx.send_tagged(v, p, tag);
        }
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_>, from: NodeId, payload: &[u8]) {
        let mut out = Vec::new();
        self.receive(from, payload, ctx.now(), &mut out);
        for (v, p, tag) in out {
            ctx.send_tagged(v, p, tag);
        }
    }
}

/// Result of a synchronized run.
pub struct SyncOutcome<N> {
    pub nodes: Vec<SyncNode<N>>,
    pub metrics: Metrics,
    pub digest: [u8; 32],
}

/// Step cap for `rounds` synchronized rounds over `backbone`.
pub fn sync_step_cap(backbone: &Graph, rounds: u64) -> u64 {
    10 * (rounds * 2 * backbone.m() as u64 + 1)
}

/// Runs every round of `protocol` through the synchronizer.
pub fn run_synchronized<N: FusNode + 'static>(
    protocol: FusProtocol<N>,
    initiator: NodeId,
    adversary: &AdversarySpec,
    seed: u64,
) -> Result<SyncOutcome<N>> {
    let rounds = protocol.rounds;
    let cap = sync_step_cap(&protocol.backbone, rounds);
    let nodes = protocol
        .nodes
        .into_iter()
        .enumerate()
        .map(|(u, n)| SyncNode::new(n, u == initiator, rounds, 0))
        .collect();
    let out = Simulation::new(protocol.backbone, nodes, initiator, adversary, seed)?
        .with_step_cap(cap)
        .run_to_quiescence()?;
    Ok(SyncOutcome {
        nodes: out.nodes,
        metrics: out.metrics,
        digest: out.transcript.digest,
    })
}

/// Ordered-edge message map for a single round.
pub type Outbox = BTreeMap<(NodeId, NodeId), Vec<u8>>;

/// One-round FUS node that sends fixed payloads and keeps what it receives.
#[derive(Clone, Debug)]
pub struct FixedRound {
    me: NodeId,
    neighbors: Vec<NodeId>,
    outgoing: Vec<Vec<u8>>,
    pub inbox: Vec<Vec<u8>>,
}

impl FixedRound {
    pub fn new(me: NodeId, backbone: &Graph, outbox: &Outbox) -> Self {
        let neighbors = backbone.neighbors(me).to_vec();
        let outgoing = neighbors
            .iter()
            .map(|&v| outbox.get(&(me, v)).cloned().unwrap_or_default())
            .collect();
        FixedRound {
            me,
            neighbors,
            outgoing,
            inbox: Vec::new(),
        }
    }
}

impl FusNode for FixedRound {
    fn neighbors(&self) -> &[NodeId] {
        &self.neighbors
    }

    fn emit(&mut self, _round: u64) -> Vec<Vec<u8>> {
        self.outgoing.clone()
    }

    fn absorb(&mut self, _round: u64, inbox: &[Vec<u8>]) {
        self.inbox = inbox.to_vec();
    }
}

pub struct SyncRoundResult {
    pub delivered: Outbox,
    /// First-contact parent of every node (`None` at the initiator).
    pub parents: Vec<Option<NodeId>>,
    pub all_done: bool,
    pub metrics: Metrics,
}

/// Runs a single synchronized round carrying `outbox`.
pub fn sync_round(
    backbone: &Graph,
    initiator: NodeId,
    outbox: &Outbox,
    adversary: &AdversarySpec,
    seed: u64,
) -> Result<SyncRoundResult> {
    let protocol = FusProtocol {
        backbone: backbone.clone(),
        nodes: (0..backbone.n()).map(|u| FixedRound::new(u, backbone, outbox)).collect(),
        rounds: 1,
    };
    let out = run_synchronized(protocol, initiator, adversary, seed)?;
    let mut delivered = Outbox::new();
    for node in &out.nodes {
        let inner = node.inner();
        for (&w, payload) in inner.neighbors.iter().zip(&inner.inbox) {
            delivered.insert((w, inner.me), payload.clone());
        }
    }
    Ok(SyncRoundResult {
        delivered,
        parents: out.nodes.iter().map(|s| s.log().first().and_then(|l| l.parent)).collect(),
        all_done: out.nodes.iter().all(|s| s.state() == SyncState::Done),
        metrics: out.metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GraphKind};

    #[test]
    fn p2_round() {
        let g = generate(GraphKind::Path, 2, 0).unwrap();
        let outbox = Outbox::from([((0, 1), b"a".to_vec()), ((1, 0), b"b".to_vec())]);
        let r = sync_round(&g, 0, &outbox, &AdversarySpec::none(), 0).unwrap();
        assert_eq!(r.delivered, outbox);
        assert_eq!(r.parents, vec![None, Some(0)]);
        assert!(r.all_done);
    }

    #[test]
    fn star_round_uses_two_messages_per_edge() {
        let g = generate(GraphKind::Star, 6, 0).unwrap();
        let outbox: Outbox = g
            .edges()
            .iter()
            .flat_map(|&(u, v)| [((u, v), vec![u as u8]), ((v, u), vec![v as u8])])
            .collect();
        let r = sync_round(&g, 0, &outbox, &AdversarySpec::random(), 3).unwrap();
        assert_eq!(r.delivered, outbox);
        assert!((1..6).all(|i| r.parents[i] == Some(0)));
        assert_eq!(r.metrics.messages_sent, 2 * g.m() as u64);
    }

    #[test]
    fn parents_ignore_payload_corruption() {
        use crate::netsim::{Budget, CorruptionRule, Delivery, Target};
        let g = generate(GraphKind::Random(0.4), 9, 4).unwrap();
        let outbox: Outbox = g.edges().iter().flat_map(|&(u, v)| [((u, v), vec![7; 3]), ((v, u), vec![9; 2])]).collect();
        let noisy = AdversarySpec {
            delivery: Delivery::Random,
            budget: Budget::ALL,
            corruption: CorruptionRule::FlipAllBits,
            target: Target::All,
        };
        for seed in 0..20 {
            let a = sync_round(&g, 2, &outbox, &AdversarySpec::random(), seed).unwrap();
            let b = sync_round(&g, 2, &outbox, &noisy, seed).unwrap();
            assert_eq!(a.parents, b.parents);
            assert!(b.all_done);
            assert_eq!(b.metrics.corruptions_used, b.metrics.messages_sent);
        }
    }

    #[derive(Clone)]
    struct Silent(Vec<NodeId>);

    impl FusNode for Silent {
        fn neighbors(&self) -> &[NodeId] {
            &self.0
        }
        fn emit(&mut self, _: u64) -> Vec<Vec<u8>> {
            vec![vec![0]; self.0.len()]
        }
        fn absorb(&mut self, _: u64, _: &[Vec<u8>]) {}
    }

    fn silent(g: &Graph, rounds: u64) -> FusProtocol<Silent> {
        FusProtocol {
            backbone: g.clone(),
            nodes: (0..g.n()).map(|u| Silent(g.neighbors(u).to_vec())).collect(),
            rounds,
        }
    }

    #[test]
    fn message_counts() {
        let c4 = generate(GraphKind::Cycle, 4, 0).unwrap();
        let out = run_synchronized(silent(&c4, 0), 0, &AdversarySpec::none(), 0).unwrap();
        assert_eq!(out.metrics.messages_sent, 0);
        let out = run_synchronized(silent(&c4, 3), 0, &AdversarySpec::random(), 0).unwrap();
        assert_eq!(out.metrics.messages_sent, 24);
        assert!(out.nodes.iter().all(SyncNode::is_complete));
    }

    #[test]
    fn single_node_runs_all_rounds() {
        let g = Graph::new(1, []).unwrap();
        let out = run_synchronized(silent(&g, 5), 0, &AdversarySpec::none(), 0).unwrap();
        assert_eq!(out.nodes[0].rounds_done(), 5);
        assert_eq!(out.metrics.messages_sent, 0);
    }
}
