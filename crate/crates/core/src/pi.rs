//! Input protocols as message dependency DAGs.
//!
//! A message becomes enabled once its sender has received every message it
//! depends on. Each node releases its own messages strictly in index order.
//! Because dependencies point backwards, every message is eventually released
//! on reliable channels, and what each node receives does not depend on the
//! schedule.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiMessage {
    pub src: NodeId,
    pub dst: NodeId,
    pub bits: Vec<bool>,
    /// Indices of earlier messages addressed to `src` that must arrive first.
    pub deps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiDescriptor {
    n: usize,
    messages: Vec<PiMessage>,
}

impl PiDescriptor {
    pub fn new(n: usize, messages: Vec<PiMessage>) -> Result<Self> {
        for (i, msg) in messages.iter().enumerate() {
            let bad = |what: String| Err(Error::InvalidDescriptor(format!("message {i}: {what}")));
            if msg.src >= n || msg.dst >= n {
                return bad(format!("endpoint out of range for n = {n}"));
            }
            if msg.src == msg.dst {
                return bad("source equals destination".into());
            }
            if msg.bits.is_empty() {
                return bad("empty payload".into());
            }
            for &d in &msg.deps {
                if d >= i {
                    return bad(format!("dependency {d} is not an earlier message"));
                }
                if messages[d].dst != msg.src {
                    return bad(format!("dependency {d} is not addressed to the sender"));
                }
            }
        }
        Ok(PiDescriptor { n, messages })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn messages(&self) -> &[PiMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Communication complexity in bits.
    pub fn cc_bits(&self) -> u64 {
        self.messages.iter().map(|m| m.bits.len() as u64).sum()
    }

    /// Message indices of the `(src, dst)` stream, in order.
    pub fn stream(&self, src: NodeId, dst: NodeId) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.messages[i].src == src && self.messages[i].dst == dst)
            .collect()
    }

    /// Indices of the messages `u` sends, in release order.
    pub fn outgoing(&self, u: NodeId) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.messages[i].src == u).collect()
    }

    /// True iff every message travels along an edge of `g`.
    pub fn is_local_to(&self, g: &Graph) -> bool {
        self.n == g.n() && self.messages.iter().all(|m| g.has_edge(m.src, m.dst))
    }

    /// Parses `n k` followed by `k` lines `src dst len_bits payload_hex dep`.
    ///
    /// `dep` is `-1` for none, an index, or a comma-separated list of indices.
    /// Payload bits are read most significant first from the hex digits.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing `n k` header".into(),
        })?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let num = |line: usize, f: &str| -> Result<usize> {
            f.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("`{f}` is not a non-negative integer"),
            })
        };
        let [n, k] = match head[..] {
            [a, b] => [num(hl, a)?, num(hl, b)?],
            _ => {
                return Err(Error::Parse {
                    line: hl,
                    msg: "expected `n k`".into(),
                })
            }
        };
        let mut messages = Vec::with_capacity(k);
        for (line, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            let [src, dst, len, hex, dep] = f[..] else {
                return Err(Error::Parse {
                    line,
                    msg: "expected `src dst len_bits payload_hex dep`".into(),
                });
            };
            let len = num(line, len)?;
            let bits = hex_to_bits(hex, len).ok_or_else(|| Error::Parse {
                line,
                msg: format!("payload `{hex}` does not hold {len} bits"),
            })?;
            let deps = if dep == "-1" {
                Vec::new()
            } else {
                dep.split(',').map(|d| num(line, d)).collect::<Result<_>>()?
            };
            messages.push(PiMessage {
                src: num(line, src)?,
                dst: num(line, dst)?,
                bits,
                deps,
            });
        }
        if messages.len() != k {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                msg: format!("declared {k} messages, found {}", messages.len()),
            });
        }
        PiDescriptor::new(n, messages)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.len());
        for m in &self.messages {
            let dep = if m.deps.is_empty() {
                "-1".to_string()
            } else {
                m.deps.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            };
            let _ = writeln!(out, "{} {} {} {} {dep}", m.src, m.dst, m.bits.len(), bits_to_hex(&m.bits));
        }
        out
    }
}

fn hex_to_bits(hex: &str, len: usize) -> Option<Vec<bool>> {
    if hex.len() * 4 < len {
        return None;
    }
    let mut bits = Vec::with_capacity(hex.len() * 4);
    for c in hex.chars() {
        let d = c.to_digit(16)?;
        bits.extend((0..4).rev().map(|i| d >> i & 1 == 1));
    }
    bits.truncate(len);
    Some(bits)
}

fn bits_to_hex(bits: &[bool]) -> String {
    bits.chunks(4)
        .map(|c| {
            let d = c.iter().enumerate().fold(0u32, |acc, (i, &b)| acc | u32::from(b) << (3 - i));
            char::from_digit(d, 16).unwrap_or('0')
        })
        .collect()
}

/// What one node sent and received.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeTranscript {
    /// Sent message indices in release order.
    pub sent: Vec<usize>,
    /// Received payloads keyed by message index.
    pub received: BTreeMap<usize, Vec<bool>>,
}

pub type Transcript = Vec<NodeTranscript>;

/// Per-node release bookkeeping shared by every executor of a descriptor.
#[derive(Clone, Debug)]
pub struct Releaser {
    /// Remaining outgoing message indices of this node, in order.
    pending: VecDeque<usize>,
    received: Vec<bool>,
}

impl Releaser {
    pub fn new(pi: &PiDescriptor, u: NodeId) -> Self {
        Releaser {
            pending: pi.outgoing(u).into(),
            received: vec![false; pi.len()],
        }
    }

    pub fn mark_received(&mut self, index: usize) {
        if let Some(r) = self.received.get_mut(index) {
            *r = true;
        }
    }

    /// Pops every message that is now enabled, in index order.
    pub fn release(&mut self, pi: &PiDescriptor) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some(&i) = self.pending.front() {
            if pi.messages[i].deps.iter().all(|&d| self.received[d]) {
                out.push(i);
                self.pending.pop_front();
            } else {
                break;
            }
        }
        out
    }

    pub fn is_drained(&self) -> bool {
        self.pending.is_empty()
    }
}

/// Executes `pi` on reliable channels, delivering in global send order.
pub fn reference_transcript(pi: &PiDescriptor) -> Transcript {
    let mut nodes: Vec<Releaser> = (0..pi.n).map(|u| Releaser::new(pi, u)).collect();
    let mut out = vec![NodeTranscript::default(); pi.n];
    let mut channel = VecDeque::new();
    for u in 0..pi.n {
        for i in nodes[u].release(pi) {
            out[u].sent.push(i);
            channel.push_back(i);
        }
    }
    while let Some(i) = channel.pop_front() {
        let v = pi.messages[i].dst;
        out[v].received.insert(i, pi.messages[i].bits.clone());
        nodes[v].mark_received(i);
        for j in nodes[v].release(pi) {
            out[v].sent.push(j);
            channel.push_back(j);
        }
    }
    out
}

/// Families of input protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PiKind {
    /// The root sends to its smallest neighbor.
    Unicast,
    /// Every other node sends to the root.
    AllToOne,
    /// Both directions of every edge; the reply from the larger endpoint
    /// waits for the message from the smaller one.
    AllPairs,
}

/// Builds a protocol of `kind` with `bits`-bit seeded random payloads.
pub fn generate_pi(kind: PiKind, graph: &Graph, root: NodeId, bits: usize, seed: u64) -> Result<PiDescriptor> {
    if bits == 0 {
        return Err(Error::config("pi.bits", "must be at least 1"));
    }
    if root >= graph.n() {
        return Err(Error::NodeOutOfRange { node: root, n: graph.n() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut payload = || (0..bits).map(|_| rng.random_bool(0.5)).collect::<Vec<_>>();
    let mut messages = Vec::new();
    match kind {
        PiKind::Unicast => {
            let &dst = graph
                .neighbors(root)
                .first()
                .ok_or_else(|| Error::config("pi.kind", "unicast needs a root with a neighbor"))?;
            messages.push(PiMessage { src: root, dst, bits: payload(), deps: vec![] });
        }
        PiKind::AllToOne => {
            for u in (0..graph.n()).filter(|&u| u != root) {
                messages.push(PiMessage { src: u, dst: root, bits: payload(), deps: vec![] });
            }
        }
        PiKind::AllPairs => {
            for &(u, v) in graph.edges() {
                let i = messages.len();
                messages.push(PiMessage { src: u, dst: v, bits: payload(), deps: vec![] });
                messages.push(PiMessage { src: v, dst: u, bits: payload(), deps: vec![i] });
            }
        }
    }
    if messages.is_empty() {
        return Err(Error::config("pi.kind", "protocol would send nothing"));
    }
    PiDescriptor::new(graph.n(), messages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GraphKind};

    #[test]
    fn file_round_trip() {
        let text = "3 3\n0 1 8 a5 -1\n1 2 3 e 0\n2 0 5 f8 1\n";
        let pi = PiDescriptor::parse(text).unwrap();
        assert_eq!(pi.messages()[0].bits, vec![true, false, true, false, false, true, false, true]);
        assert_eq!(pi.messages()[1].bits, vec![true, true, true]);
        assert_eq!(pi.cc_bits(), 16);
        assert_eq!(PiDescriptor::parse(&pi.to_text()).unwrap(), pi);
    }

    #[test]
    fn multi_dependency() {
        let pi = PiDescriptor::parse("3 3\n1 0 1 8 -1\n2 0 1 8 -1\n0 1 1 0 0,1\n").unwrap();
        assert_eq!(pi.messages()[2].deps, vec![0, 1]);
    }

    #[test]
    fn rejects_invalid() {
        assert!(PiDescriptor::parse("2 1\n0 1 8 a5 0\n").is_err());
        assert!(PiDescriptor::parse("2 1\n0 0 8 a5 -1\n").is_err());
        assert!(PiDescriptor::parse("2 1\n0 1 9 a5 -1\n").is_err());
        assert!(PiDescriptor::parse("2 2\n0 1 8 a5 -1\n").is_err());
        // Dependency must be addressed to the sender.
        assert!(PiDescriptor::parse("3 2\n0 1 1 8 -1\n2 0 1 8 0\n").is_err());
    }

    #[test]
    fn reference_respects_dependencies() {
        let g = generate(GraphKind::Cycle, 4, 0).unwrap();
        let pi = generate_pi(PiKind::AllPairs, &g, 0, 4, 1).unwrap();
        let t = reference_transcript(&pi);
        for (u, node) in t.iter().enumerate() {
            assert_eq!(node.sent, pi.outgoing(u));
            assert_eq!(node.received.len(), g.degree(u));
        }
    }

    #[test]
    fn generators() {
        let g = generate(GraphKind::Path, 4, 0).unwrap();
        let uni = generate_pi(PiKind::Unicast, &g, 0, 8, 0).unwrap();
        assert_eq!(uni.len(), 1);
        assert!(uni.is_local_to(&g));
        let gather = generate_pi(PiKind::AllToOne, &g, 0, 8, 0).unwrap();
        assert_eq!(gather.cc_bits(), 24);
        assert!(!gather.is_local_to(&g));
        assert!(generate_pi(PiKind::Unicast, &g, 0, 0, 0).is_err());
    }
}
