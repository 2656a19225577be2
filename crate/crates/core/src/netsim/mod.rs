//! Deterministic discrete-event engine for the asynchronous message-passing model.
//!
//! Nodes sleep until a message arrives; a delivery runs the receiving node's
//! handler to completion and whatever it sends becomes in-flight. Channels are
//! not FIFO: an [`Adversary`] picks which in-flight envelope is delivered next
//! and may rewrite its payload, subject to a prefix-safe [`Budget`]. Envelopes
//! are never dropped, duplicated or injected.
//!
//! One protocol run starts with a single wake-up event at the initiator.

mod adversary;
mod explore;

pub use adversary::{
    Adversary, AdversarySpec, Budget, CorruptionRule, Delivery, DeliveryRule, SlotKey,
    SpecAdversary, Target,
};
pub use explore::{for_each_schedule, ExploreLimit};

use std::collections::VecDeque;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// Sender-side annotation of an envelope.
///
/// Tags are invisible to the receiving automaton; they exist so an all-seeing
/// adversary (and the accounting) can tell protocol stages and rounds apart.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag {
    pub stage: u32,
    pub round: u64,
}

/// One in-flight message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Vec<u8>,
    pub corrupted: bool,
    pub tag: Tag,
}

/// Counters accumulated over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub messages_sent: u64,
    /// Payload bits only.
    pub bits_sent: u64,
    pub corruptions_used: u64,
    pub deliveries: u64,
    pub steps: u64,
}

/// Handler context: identity, logical time and the outgoing batch.
pub struct Ctx<'a> {
    me: NodeId,
    now: u64,
    out: &'a mut Vec<(NodeId, Vec<u8>, Tag)>,
}

impl Ctx<'_> {
    pub fn me(&self) -> NodeId {
        self.me
    }

    /// Index of the simulation step currently being executed.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn send(&mut self, dst: NodeId, payload: Vec<u8>) {
        self.out.push((dst, payload, Tag::default()));
    }

    pub fn send_tagged(&mut self, dst: NodeId, payload: Vec<u8>, tag: Tag) {
        self.out.push((dst, payload, tag));
    }
}

/// Node-local protocol behavior.
///
/// Handlers are atomic: they run to completion and their sends are released
/// together. Implementations must not depend on anything outside `self` and
/// the arguments.
pub trait Automaton {
    /// Called once on the initiator at the start of a run.
    fn on_wake(&mut self, ctx: &mut Ctx<'_>);

    fn on_message(&mut self, ctx: &mut Ctx<'_>, from: NodeId, payload: &[u8]);
}

/// A corruption applied by the adversary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorruptionEvent {
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub tag: Tag,
}

/// What happened during one [`Simulation::step`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub step: u64,
    /// `None` for the initial wake-up.
    pub seq: Option<u64>,
    pub src: Option<NodeId>,
    pub dst: NodeId,
    pub corrupted: bool,
    pub emitted: usize,
}

/// Global delivery log of a run.
///
/// The digest covers every delivery (including payload bytes as delivered) and
/// is always maintained; the full record list is kept only when requested.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub digest: [u8; 32],
    pub records: Vec<DeliveryRecord>,
}

/// Network state without the adversary: nodes, channels and counters.
///
/// Cloneable whenever the automata are, which is what schedule enumeration
/// relies on.
#[derive(Clone)]
pub struct Network<A> {
    graph: Arc<Graph>,
    nodes: Vec<A>,
    in_flight: VecDeque<Envelope>,
    pending_wake: Option<NodeId>,
    next_seq: u64,
    metrics: Metrics,
    hasher: Sha256,
    records: Option<Vec<DeliveryRecord>>,
    corruptions: Vec<CorruptionEvent>,
}

impl<A: Automaton> Network<A> {
    pub fn new(graph: Graph, nodes: Vec<A>, initiator: NodeId) -> Result<Self> {
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        if initiator >= graph.n() {
            return Err(Error::NodeOutOfRange {
                node: initiator,
                n: graph.n(),
            });
        }
        if nodes.len() != graph.n() {
            return Err(Error::InvalidGraph(format!(
                "{} automata for {} nodes",
                nodes.len(),
                graph.n()
            )));
        }
        Ok(Network {
            graph: Arc::new(graph),
            nodes,
            in_flight: VecDeque::new(),
            pending_wake: Some(initiator),
            next_seq: 0,
            metrics: Metrics::default(),
            hasher: Sha256::new(),
            records: None,
            corruptions: Vec::new(),
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn nodes(&self) -> &[A] {
        &self.nodes
    }

    pub fn in_flight(&self) -> &VecDeque<Envelope> {
        &self.in_flight
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn corruptions(&self) -> &[CorruptionEvent] {
        &self.corruptions
    }

    /// Pending wake-ups plus in-flight envelopes.
    pub fn pending_events(&self) -> usize {
        self.in_flight.len() + usize::from(self.pending_wake.is_some())
    }

    pub fn is_quiescent(&self) -> bool {
        self.pending_events() == 0
    }

    pub fn record_transcript(&mut self, on: bool) {
        self.records = on.then(Vec::new);
    }

    fn view(&self) -> View<'_, A> {
        View {
            graph: &self.graph,
            nodes: &self.nodes,
            in_flight: &self.in_flight,
            metrics: &self.metrics,
        }
    }

    /// Delivers in-flight envelope `index` (or the pending wake-up, which
    /// always goes first), optionally replacing its payload.
    pub fn deliver(&mut self, index: usize, replacement: Option<Vec<u8>>) -> Result<DeliveryRecord> {
        let step = self.metrics.steps;
        let mut out = Vec::new();
        let record = if let Some(initiator) = self.pending_wake.take() {
            let mut ctx = Ctx {
                me: initiator,
                now: step,
                out: &mut out,
            };
            self.nodes[initiator].on_wake(&mut ctx);
            DeliveryRecord {
                step,
                seq: None,
                src: None,
                dst: initiator,
                corrupted: false,
                emitted: out.len(),
            }
        } else {
            let mut env = self.in_flight.remove(index).ok_or(Error::Finished)?;
            if let Some(payload) = replacement {
                env.payload = payload;
                env.corrupted = true;
                self.metrics.corruptions_used += 1;
                self.corruptions.push(CorruptionEvent {
                    seq: env.seq,
                    src: env.src,
                    dst: env.dst,
                    tag: env.tag,
                });
            }
            let mut ctx = Ctx {
                me: env.dst,
                now: step,
                out: &mut out,
            };
            self.nodes[env.dst].on_message(&mut ctx, env.src, &env.payload);
            self.metrics.deliveries += 1;
            self.hasher.update(env.seq.to_le_bytes());
            self.hasher.update([u8::from(env.corrupted)]);
            self.hasher.update((env.payload.len() as u64).to_le_bytes());
            self.hasher.update(&env.payload);
            DeliveryRecord {
                step,
                seq: Some(env.seq),
                src: Some(env.src),
                dst: env.dst,
                corrupted: env.corrupted,
                emitted: out.len(),
            }
        };
        self.hasher.update(step.to_le_bytes());
        self.hasher.update((record.dst as u64).to_le_bytes());
        self.hasher.update((out.len() as u64).to_le_bytes());

        let src = record.dst;
        for (dst, payload, tag) in out {
            assert!(
                self.graph.has_edge(src, dst),
                "node {src} sent to non-neighbor {dst}"
            );
            self.metrics.messages_sent += 1;
            self.metrics.bits_sent += 8 * payload.len() as u64;
            self.in_flight.push_back(Envelope {
                seq: self.next_seq,
                src,
                dst,
                payload,
                corrupted: false,
                tag,
            });
            self.next_seq += 1;
        }
        self.metrics.steps += 1;
        if let Some(records) = &mut self.records {
            records.push(record.clone());
        }
        Ok(record)
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            digest: self.hasher.clone().finalize().into(),
            records: self.records.clone().unwrap_or_default(),
        }
    }

    pub fn into_nodes(self) -> Vec<A> {
        self.nodes
    }
}

/// Everything the adversary may look at before it acts.
pub struct View<'a, A> {
    pub graph: &'a Graph,
    pub nodes: &'a [A],
    pub in_flight: &'a VecDeque<Envelope>,
    pub metrics: &'a Metrics,
}

/// Final state of a run.
pub struct RunOutcome<A> {
    pub nodes: Vec<A>,
    pub metrics: Metrics,
    pub transcript: Transcript,
    pub corruptions: Vec<CorruptionEvent>,
}

/// Default step cap is `10 * n * m * DEFAULT_BOUND_FACTOR`; protocols with a
/// larger message bound set their own via [`Simulation::with_step_cap`].
pub const DEFAULT_BOUND_FACTOR: u64 = 4;

/// A network driven by an adversary.
pub struct Simulation<A> {
    net: Network<A>,
    adversary: Box<dyn Adversary<A>>,
    budget: Budget,
    step_cap: u64,
}

impl<A: Automaton + 'static> Simulation<A> {
    /// Builds a simulation with one pending wake-up for `initiator`.
    pub fn new(
        graph: Graph,
        automata: Vec<A>,
        initiator: NodeId,
        adversary: &AdversarySpec,
        seed: u64,
    ) -> Result<Self> {
        let budget = adversary.budget;
        Self::with_adversary(graph, automata, initiator, Box::new(adversary.build(seed)), budget)
    }

    /// Builds a simulation driven by a custom adversary.
    pub fn with_adversary(
        graph: Graph,
        automata: Vec<A>,
        initiator: NodeId,
        adversary: Box<dyn Adversary<A>>,
        budget: Budget,
    ) -> Result<Self> {
        let n = graph.n() as u64;
        let m = graph.m().max(1) as u64;
        let net = Network::new(graph, automata, initiator)?;
        Ok(Simulation {
            net,
            adversary,
            budget,
            step_cap: 10 * n * m * DEFAULT_BOUND_FACTOR,
        })
    }
}

impl<A: Automaton> Simulation<A> {
    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = cap;
        self
    }

    pub fn recording(mut self) -> Self {
        self.net.record_transcript(true);
        self
    }

    pub fn network(&self) -> &Network<A> {
        &self.net
    }

    pub fn nodes(&self) -> &[A] {
        self.net.nodes()
    }

    pub fn metrics(&self) -> &Metrics {
        self.net.metrics()
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn pending_events(&self) -> usize {
        self.net.pending_events()
    }

    pub fn is_finished(&self) -> bool {
        self.net.is_quiescent()
    }

    /// Delivers one event chosen by the adversary.
    pub fn step(&mut self) -> Result<DeliveryRecord> {
        if self.net.is_quiescent() {
            return Err(Error::Finished);
        }
        if self.net.pending_wake.is_some() {
            return self.net.deliver(0, None);
        }
        let view = self.net.view();
        let index = self.adversary.pick(&view) % view.in_flight.len();
        let allowance = self.budget.allowance(view.metrics.messages_sent);
        let replacement = if view.metrics.corruptions_used < allowance {
            self.adversary.corrupt(&view, &view.in_flight[index])
        } else {
            None
        };
        let record = self.net.deliver(index, replacement)?;
        debug_assert!(self.net.metrics.corruptions_used <= self.budget.allowance(self.net.metrics.messages_sent));
        Ok(record)
    }

    /// Steps until no events remain.
    pub fn run(&mut self) -> Result<()> {
        while !self.net.is_quiescent() {
            if self.net.metrics.steps >= self.step_cap {
                return Err(Error::StepCapExceeded { cap: self.step_cap });
            }
            self.step()?;
        }
        Ok(())
    }

    pub fn run_to_quiescence(mut self) -> Result<RunOutcome<A>> {
        self.run()?;
        Ok(self.into_outcome())
    }

    pub fn into_outcome(mut self) -> RunOutcome<A> {
        let transcript = self.net.transcript();
        let metrics = self.net.metrics;
        let corruptions = std::mem::take(&mut self.net.corruptions);
        RunOutcome {
            nodes: self.net.into_nodes(),
            metrics,
            transcript,
            corruptions,
        }
    }
}
