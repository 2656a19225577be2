//! Fully-utilized synchronous (FUS) simulations of an input protocol.
//!
//! In a FUS protocol every node sends exactly one symbol on every incident
//! backbone edge in every round. [`TreeFusNode`] floods bit-records over a
//! spanning tree; [`SpannerFusNode`] runs priority windows over a t-spanner.
//! Both are driven through the [`FusNode`] trait, either by the asynchronous
//! synchronizer or by the in-process [`run_lockstep`] harness.

mod spanner;
mod tree;

pub use spanner::{audit_windows, Arrival, RelayPolicy, SpannerFusNode, WindowAudit, WindowEntry};
pub use tree::TreeFusNode;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::pi::{NodeTranscript, PiDescriptor, Releaser};

/// Payload of a non-empty symbol: one bit of a message or its end marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bit(bool),
    Eom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Record {
    pub src: NodeId,
    pub dest: NodeId,
    pub value: Value,
    /// Position in the `(src, dest)` stream modulo the index modulus; 0 when unindexed.
    pub idx: u32,
}

/// `None` is the empty symbol.
pub type Symbol = Option<Record>;

/// Fixed-width binary layout of symbols for an `n`-node network.
///
/// Fields, most significant first: 2-bit kind (0 empty, 1 bit, 2 end
/// marker), the value bit, `src`, `dest`, and the index when present; each id
/// field is `ceil(log2 n)` bits wide. The empty symbol has the same width, so
/// every symbol of a run has the same size. Anything that does not decode to
/// a well-formed symbol reads as empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymbolFormat {
    n: usize,
    id_bits: u32,
    /// Index modulus, or 0 for unindexed symbols.
    modulus: u32,
    idx_bits: u32,
}

fn bits_for(values: usize) -> u32 {
    (usize::BITS - (values.max(2) - 1).leading_zeros()).max(1)
}

impl SymbolFormat {
    pub fn unindexed(n: usize) -> Self {
        SymbolFormat {
            n,
            id_bits: bits_for(n),
            modulus: 0,
            idx_bits: 0,
        }
    }

    pub fn indexed(n: usize, modulus: u32) -> Self {
        assert!(modulus >= 2);
        SymbolFormat {
            n,
            id_bits: bits_for(n),
            modulus,
            idx_bits: bits_for(modulus as usize),
        }
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn width_bits(&self) -> u32 {
        3 + 2 * self.id_bits + self.idx_bits
    }

    pub fn width_bytes(&self) -> usize {
        self.width_bits().div_ceil(8) as usize
    }

    pub fn encode(&self, sym: &Symbol) -> Vec<u8> {
        let mut word: u64 = 0;
        let mut push = |v: u64, w: u32| word = word << w | v & ((1 << w) - 1);
        match sym {
            None => push(0, self.width_bits()),
            Some(r) => {
                let (kind, val) = match r.value {
                    Value::Bit(b) => (1, u64::from(b)),
                    Value::Eom => (2, 0),
                };
                push(kind, 2);
                push(val, 1);
                push(r.src as u64, self.id_bits);
                push(r.dest as u64, self.id_bits);
                push(u64::from(r.idx), self.idx_bits);
            }
        }
        let bytes = self.width_bytes();
        word <<= bytes as u32 * 8 - self.width_bits();
        word.to_be_bytes()[8 - bytes..].to_vec()
    }

    pub fn decode(&self, bytes: &[u8]) -> Symbol {
        if bytes.len() != self.width_bytes() {
            return None;
        }
        let word = bytes.iter().fold(0u64, |acc, &b| acc << 8 | u64::from(b));
        let mut rest = word >> (bytes.len() as u32 * 8 - self.width_bits());
        let mut pull = |w: u32| {
            let v = rest & ((1 << w) - 1);
            rest >>= w;
            v
        };
        let idx = pull(self.idx_bits) as u32;
        let dest = pull(self.id_bits) as usize;
        let src = pull(self.id_bits) as usize;
        let val = pull(1);
        let kind = pull(2);
        let value = match (kind, val) {
            (1, b) => Value::Bit(b == 1),
            (2, 0) => Value::Eom,
            _ => return None,
        };
        let idx_ok = if self.modulus == 0 { idx == 0 } else { idx < self.modulus };
        (src < self.n && dest < self.n && src != dest && idx_ok).then_some(Record {
            src,
            dest,
            value,
            idx,
        })
    }
}

/// Splits a message into bit records plus an end marker.
///
/// Indices continue from `counter` (the number of records already sent on
/// this stream) and are reduced modulo `modulus`; `modulus == 0` leaves them 0.
pub fn encapsulate_from(bits: &[bool], src: NodeId, dest: NodeId, counter: &mut u64, modulus: u32) -> Vec<Record> {
    let values = bits.iter().map(|&b| Value::Bit(b)).chain([Value::Eom]);
    values
        .map(|value| {
            *counter += 1;
            let idx = if modulus == 0 { 0 } else { (*counter % u64::from(modulus)) as u32 };
            Record { src, dest, value, idx }
        })
        .collect()
}

/// Records for a single message sent first on its stream.
pub fn encapsulate(bits: &[bool], src: NodeId, dest: NodeId, with_index: bool, n: usize) -> Vec<Record> {
    let modulus = if with_index { n.max(2) as u32 } else { 0 };
    encapsulate_from(bits, src, dest, &mut 0, modulus)
}

/// Reassembles messages from records, per source.
pub fn decode_records(records: &[Record]) -> BTreeMap<NodeId, Vec<Vec<bool>>> {
    let mut c = Collector::default();
    for r in records {
        c.push(r);
    }
    c.done
}

/// Per-source reassembly buffers for records addressed to one node.
#[derive(Clone, Debug, Default)]
pub struct Collector {
    partial: BTreeMap<NodeId, Vec<bool>>,
    done: BTreeMap<NodeId, Vec<Vec<bool>>>,
}

impl Collector {
    /// Returns the source and its completed-message count when `r` ends a message.
    pub fn push(&mut self, r: &Record) -> Option<(NodeId, usize)> {
        match r.value {
            Value::Bit(b) => {
                self.partial.entry(r.src).or_default().push(b);
                None
            }
            Value::Eom => {
                let msg = self.partial.remove(&r.src).unwrap_or_default();
                let list = self.done.entry(r.src).or_default();
                list.push(msg);
                Some((r.src, list.len()))
            }
        }
    }

    pub fn completed(&self, src: NodeId) -> &[Vec<bool>] {
        self.done.get(&src).map_or(&[], Vec::as_slice)
    }
}

/// Input-protocol endpoint shared by the FUS nodes: releases outgoing
/// messages and maps reassembled ones back to message indices.
#[derive(Clone, Debug)]
pub(crate) struct Endpoint {
    me: NodeId,
    pi: Arc<PiDescriptor>,
    releaser: Releaser,
    collector: Collector,
    transcript: NodeTranscript,
    /// Records sent so far on each outgoing stream.
    counters: BTreeMap<NodeId, u64>,
    /// Reassembled messages that match no expected message.
    extraneous: usize,
}

impl Endpoint {
    pub(crate) fn new(pi: Arc<PiDescriptor>, me: NodeId) -> Self {
        Endpoint {
            me,
            releaser: Releaser::new(&pi, me),
            pi,
            collector: Collector::default(),
            transcript: NodeTranscript::default(),
            counters: BTreeMap::new(),
            extraneous: 0,
        }
    }

    /// Records of every newly enabled message, in release order.
    pub(crate) fn release(&mut self, modulus: u32) -> Vec<Record> {
        let mut out = Vec::new();
        for i in self.releaser.release(&self.pi) {
            let msg = &self.pi.messages()[i];
            self.transcript.sent.push(i);
            let counter = self.counters.entry(msg.dst).or_default();
            out.extend(encapsulate_from(&msg.bits, self.me, msg.dst, counter, modulus));
        }
        out
    }

    pub(crate) fn collect(&mut self, r: &Record) {
        let Some((src, k)) = self.collector.push(r) else {
            return;
        };
        let stream = self.pi.stream(src, self.me);
        match stream.get(k - 1) {
            Some(&i) => {
                let bits = self.collector.completed(src)[k - 1].clone();
                self.transcript.received.insert(i, bits);
                self.releaser.mark_received(i);
            }
            None => self.extraneous += 1,
        }
    }

    pub(crate) fn transcript(&self) -> &NodeTranscript {
        &self.transcript
    }

    pub(crate) fn extraneous(&self) -> usize {
        self.extraneous
    }
}

/// One node of a FUS protocol.
///
/// Rounds are numbered from 1. `emit` must not depend on the same round's
/// inbox, which is what lets the synchronizer send before it has heard from
/// every neighbor.
pub trait FusNode: Clone {
    /// Backbone neighbors in ascending order; payload vectors follow this order.
    fn neighbors(&self) -> &[NodeId];

    fn emit(&mut self, round: u64) -> Vec<Vec<u8>>;

    fn absorb(&mut self, round: u64, inbox: &[Vec<u8>]);
}

/// A FUS protocol: one node per backbone vertex and a fixed round count.
#[derive(Clone, Debug)]
pub struct FusProtocol<N> {
    pub backbone: Graph,
    pub nodes: Vec<N>,
    pub rounds: u64,
}

/// Traffic seen by [`run_lockstep`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LockstepStats {
    pub symbols: u64,
    pub bits: u64,
}

/// Runs `rounds` synchronous rounds starting at `first_round`. `tamper` sees
/// every payload as `(round, src, dst, payload)` before delivery.
pub fn run_lockstep_from<N, F>(backbone: &Graph, nodes: &mut [N], first_round: u64, rounds: u64, mut tamper: F) -> LockstepStats
where
    N: FusNode,
    F: FnMut(u64, NodeId, NodeId, &mut Vec<u8>),
{
    let n = nodes.len();
    let mut stats = LockstepStats::default();
    for round in first_round..first_round + rounds {
        let mut inbox: Vec<Vec<Vec<u8>>> = (0..n).map(|v| vec![Vec::new(); backbone.degree(v)]).collect();
        for u in 0..n {
            let out = nodes[u].emit(round);
            debug_assert_eq!(out.len(), backbone.degree(u));
            for (&v, mut payload) in backbone.neighbors(u).iter().zip(out) {
                stats.symbols += 1;
                stats.bits += 8 * payload.len() as u64;
                tamper(round, u, v, &mut payload);
                let slot = backbone.neighbors(v).binary_search(&u).expect("symmetric adjacency");
                inbox[v][slot] = payload;
            }
        }
        for (node, msgs) in nodes.iter_mut().zip(&inbox) {
            node.absorb(round, msgs);
        }
    }
    stats
}

/// Runs a whole protocol noise-free in lockstep.
pub fn run_lockstep<N: FusNode>(protocol: &mut FusProtocol<N>) -> LockstepStats {
    run_lockstep_from(&protocol.backbone, &mut protocol.nodes, 1, protocol.rounds, |_, _, _, _| {})
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusVariant {
    Tree,
    Spanner { t: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusOptions {
    /// Index symbols modulo 3 instead of modulo `n` (spanner variant only).
    pub index_mod3: bool,
    pub relay: RelayPolicy,
}

impl Default for FusOptions {
    fn default() -> Self {
        FusOptions {
            index_mod3: false,
            relay: RelayPolicy::DestinationRelays,
        }
    }
}

/// Either FUS node flavor behind one type.
#[derive(Clone, Debug)]
pub enum FusNodeKind {
    Tree(TreeFusNode),
    Spanner(SpannerFusNode),
}

impl FusNodeKind {
    pub fn transcript(&self) -> &NodeTranscript {
        match self {
            FusNodeKind::Tree(x) => x.transcript(),
            FusNodeKind::Spanner(x) => x.transcript(),
        }
    }

    pub fn extraneous(&self) -> usize {
        match self {
            FusNodeKind::Tree(x) => x.extraneous(),
            FusNodeKind::Spanner(x) => x.extraneous(),
        }
    }
}

impl FusNode for FusNodeKind {
    fn neighbors(&self) -> &[NodeId] {
        match self {
            FusNodeKind::Tree(x) => x.neighbors(),
            FusNodeKind::Spanner(x) => x.neighbors(),
        }
    }

    fn emit(&mut self, round: u64) -> Vec<Vec<u8>> {
        match self {
            FusNodeKind::Tree(x) => x.emit(round),
            FusNodeKind::Spanner(x) => x.emit(round),
        }
    }

    fn absorb(&mut self, round: u64, inbox: &[Vec<u8>]) {
        match self {
            FusNodeKind::Tree(x) => x.absorb(round, inbox),
            FusNodeKind::Spanner(x) => x.absorb(round, inbox),
        }
    }
}

/// Records (bits plus end markers) the input protocol sends in total.
pub fn total_records(pi: &PiDescriptor) -> u64 {
    pi.messages().iter().map(|m| m.bits.len() as u64 + 1).sum()
}

/// Round horizon long enough for every message to arrive.
///
/// Tree: each record is popped at most once per node and some queue pops
/// every round until the last record lands. Spanner: every window finalizes
/// at least one record.
pub fn fus_horizon(pi: &PiDescriptor, backbone: &Graph, variant: FusVariant) -> u64 {
    let records = total_records(pi);
    match variant {
        FusVariant::Tree => backbone.n() as u64 * records,
        FusVariant::Spanner { t } => 2 * t as u64 * records,
    }
}

/// Compiles `pi` into a FUS protocol over `backbone`.
pub fn fus_wrap(pi: &PiDescriptor, backbone: &Graph, variant: FusVariant, options: FusOptions) -> Result<FusProtocol<FusNodeKind>> {
    if backbone.n() != pi.n() || !backbone.is_connected() {
        return Err(Error::InvalidGraph("backbone must span the protocol's nodes".into()));
    }
    let shared = Arc::new(pi.clone());
    let nodes = match variant {
        FusVariant::Tree => {
            if !backbone.is_tree() {
                return Err(Error::NotATree);
            }
            (0..pi.n())
                .map(|u| FusNodeKind::Tree(TreeFusNode::new(u, backbone, shared.clone())))
                .collect()
        }
        FusVariant::Spanner { t } => {
            if t == 0 {
                return Err(Error::InvalidDescriptor("stretch must be at least 1".into()));
            }
            for (i, m) in pi.messages().iter().enumerate() {
                if backbone.distance(m.src, m.dst).is_none_or(|d| d > t) {
                    return Err(Error::InvalidDescriptor(format!(
                        "message {i} spans more than {t} backbone hops"
                    )));
                }
            }
            let modulus = if options.index_mod3 { 3 } else { pi.n().max(2) as u32 };
            (0..pi.n())
                .map(|u| {
                    FusNodeKind::Spanner(SpannerFusNode::new(u, backbone, t, modulus, options.relay, shared.clone()))
                })
                .collect()
        }
    };
    Ok(FusProtocol {
        backbone: backbone.clone(),
        nodes,
        rounds: fus_horizon(pi, backbone, variant),
    })
}
