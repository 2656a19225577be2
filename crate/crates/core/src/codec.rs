//! Resilient coding layer for FUS protocols.
//!
//! A codec turns an inner FUS protocol into an outer one over the same
//! backbone that reproduces the inner round inputs despite corrupted symbols,
//! up to a declared budget.
//!
//! * `Identity` passes symbols through and tolerates nothing.
//! * `Repetition { r }` sends each inner round `r` times and takes a per-slot
//!   majority, so any `floor(r/2)` corruptions per slot are harmless.
//! * `Rewind` appends a hash-chain tag to every symbol, floods an error flag
//!   after each block of rounds and rolls every node back to the block's
//!   checkpoint when any node saw a bad tag. Corrupting the flag-flooding
//!   rounds can split the rollback decision, so this one is best effort.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fus::{FusNode, FusProtocol};
use crate::graph::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CodecSpec {
    Identity,
    Repetition {
        r: u32,
    },
    Rewind {
        hash_bits: u32,
        window: u64,
        max_replays: u64,
    },
}

/// Corruptions a codec promises to absorb in one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeclaredBudget {
    /// Limit per inner symbol slot, if the guarantee is slot-wise.
    pub per_slot: Option<u64>,
    pub total: u64,
}

impl CodecSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CodecSpec::Identity => Ok(()),
            CodecSpec::Repetition { r } if r % 2 == 0 => {
                Err(Error::InvalidCodec(format!("repetition count {r} must be odd")))
            }
            CodecSpec::Repetition { r } if r < 3 => {
                Err(Error::InvalidCodec("repetition count must be at least 3".into()))
            }
            CodecSpec::Repetition { .. } => Ok(()),
            CodecSpec::Rewind { hash_bits, window, max_replays } => {
                if !(1..=256).contains(&hash_bits) {
                    return Err(Error::InvalidCodec(format!("hash width {hash_bits} not in 1..=256")));
                }
                if window == 0 || max_replays == 0 {
                    return Err(Error::InvalidCodec("window and replay count must be positive".into()));
                }
                Ok(())
            }
        }
    }

    /// Budget for an inner protocol of `inner_rounds` rounds over a backbone
    /// with `edges` edges.
    pub fn declared_budget(&self, inner_rounds: u64, edges: u64) -> DeclaredBudget {
        match *self {
            CodecSpec::Identity => DeclaredBudget { per_slot: Some(0), total: 0 },
            CodecSpec::Repetition { r } => {
                let f = u64::from(r / 2);
                DeclaredBudget {
                    per_slot: Some(f),
                    total: f * inner_rounds * 2 * edges,
                }
            }
            CodecSpec::Rewind { max_replays, .. } => DeclaredBudget {
                per_slot: None,
                total: max_replays,
            },
        }
    }

    /// Outer rounds used for an inner protocol of `inner_rounds` rounds on `n` nodes.
    pub fn outer_rounds(&self, inner_rounds: u64, n: usize) -> u64 {
        match *self {
            CodecSpec::Identity => inner_rounds,
            CodecSpec::Repetition { r } => u64::from(r) * inner_rounds,
            CodecSpec::Rewind { window, max_replays, .. } => {
                let blocks = inner_rounds.div_ceil(window);
                if blocks == 0 {
                    0
                } else {
                    (blocks + max_replays) * (window + check_rounds(n))
                }
            }
        }
    }

    /// Inner round carried by outer round `outer` (both 1-based), when the
    /// mapping is static.
    pub fn inner_round_of(&self, outer: u64) -> Option<u64> {
        match *self {
            CodecSpec::Identity => Some(outer),
            CodecSpec::Repetition { r } => Some((outer - 1) / u64::from(r) + 1),
            CodecSpec::Rewind { .. } => None,
        }
    }
}

/// Flag-flooding rounds per rewind block: enough to cross any backbone.
fn check_rounds(n: usize) -> u64 {
    n.saturating_sub(1) as u64
}

#[derive(Clone, Debug)]
enum State<N> {
    Identity,
    Repetition {
        r: u64,
        cache: Vec<Vec<u8>>,
        votes: Vec<Vec<Vec<u8>>>,
    },
    Rewind(Box<Rewind<N>>),
}

#[derive(Clone, Debug)]
struct Rewind<N> {
    tag_bits: u32,
    window: u64,
    check: u64,
    max_replays: u64,
    replays: u64,
    inner_rounds: u64,
    committed: u64,
    checkpoint: Option<N>,
    send_chain: Vec<[u8; 32]>,
    recv_chain: Vec<[u8; 32]>,
    saved_chains: (Vec<[u8; 32]>, Vec<[u8; 32]>),
    error: bool,
    flag: bool,
}

/// Inner node wrapped by a codec.
#[derive(Clone, Debug)]
pub struct CodecNode<N> {
    inner: N,
    state: State<N>,
}

fn chain_next(chain: &[u8; 32], data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(chain);
    h.update(data);
    h.finalize().into()
}

impl<N> Rewind<N> {
    fn tag_len(&self) -> usize {
        self.tag_bits.div_ceil(8) as usize
    }

    fn tag(&self, chain: &[u8; 32], data: &[u8]) -> Vec<u8> {
        let mut tag = chain_next(chain, data)[..self.tag_len()].to_vec();
        let spare = self.tag_len() as u32 * 8 - self.tag_bits;
        if let Some(last) = tag.last_mut() {
            *last &= 0xffu8 << spare;
        }
        tag
    }

    fn period(&self) -> u64 {
        self.window + self.check
    }
}

impl<N: FusNode> CodecNode<N> {
    pub fn new(inner: N, codec: CodecSpec, inner_rounds: u64, n: usize) -> Self {
        let degree = inner.neighbors().len();
        let state = match codec {
            CodecSpec::Identity => State::Identity,
            CodecSpec::Repetition { r } => State::Repetition {
                r: u64::from(r),
                cache: Vec::new(),
                votes: vec![Vec::new(); degree],
            },
            CodecSpec::Rewind { hash_bits, window, max_replays } => State::Rewind(Box::new(Rewind {
                tag_bits: hash_bits,
                window,
                check: check_rounds(n),
                max_replays,
                replays: 0,
                inner_rounds,
                committed: 0,
                checkpoint: None,
                send_chain: vec![[0; 32]; degree],
                recv_chain: vec![[0; 32]; degree],
                saved_chains: (Vec::new(), Vec::new()),
                error: false,
                flag: false,
            })),
        };
        CodecNode { inner, state }
    }

    pub fn inner(&self) -> &N {
        &self.inner
    }

    pub fn into_inner(self) -> N {
        self.inner
    }

    /// Rollbacks performed (rewind only).
    pub fn replays(&self) -> u64 {
        match &self.state {
            State::Rewind(rw) => rw.replays,
            _ => 0,
        }
    }
}

/// Most frequent value, earliest on ties.
fn majority(values: &[Vec<u8>]) -> Vec<u8> {
    let mut best: Option<(&Vec<u8>, usize)> = None;
    for v in values {
        let count = values.iter().filter(|w| *w == v).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((v, count));
        }
    }
    best.map(|(v, _)| v.clone()).unwrap_or_default()
}

impl<N: FusNode> FusNode for CodecNode<N> {
    fn neighbors(&self) -> &[NodeId] {
        self.inner.neighbors()
    }

    fn emit(&mut self, round: u64) -> Vec<Vec<u8>> {
        let degree = self.inner.neighbors().len();
        match &mut self.state {
            State::Identity => self.inner.emit(round),
            State::Repetition { r, cache, .. } => {
                if (round - 1) % *r == 0 {
                    *cache = self.inner.emit((round - 1) / *r + 1);
                }
                cache.clone()
            }
            State::Rewind(rw) => {
                let pos = (round - 1) % rw.period();
                if rw.committed >= rw.inner_rounds {
                    return vec![vec![0; 1 + rw.tag_len()]; degree];
                }
                if pos == 0 {
                    rw.checkpoint = Some(self.inner.clone());
                    rw.saved_chains = (rw.send_chain.clone(), rw.recv_chain.clone());
                    rw.error = false;
                }
                if pos < rw.window {
                    let inner_round = rw.committed + pos + 1;
                    if inner_round > rw.inner_rounds {
                        return vec![vec![0; 1 + rw.tag_len()]; degree];
                    }
                    let symbols = self.inner.emit(inner_round);
                    symbols
                        .into_iter()
                        .enumerate()
                        .map(|(i, mut sym)| {
                            let tag = rw.tag(&rw.send_chain[i], &sym);
                            rw.send_chain[i] = chain_next(&rw.send_chain[i], &sym);
                            sym.extend(tag);
                            sym
                        })
                        .collect()
                } else {
                    if pos == rw.window {
                        rw.flag = rw.error;
                    }
                    let body = [u8::from(rw.flag)];
                    (0..degree)
                        .map(|i| {
                            let salt = [&body[..], &round.to_be_bytes()].concat();
                            let mut msg = body.to_vec();
                            msg.extend(rw.tag(&rw.send_chain[i], &salt));
                            msg
                        })
                        .collect()
                }
            }
        }
    }

    fn absorb(&mut self, round: u64, inbox: &[Vec<u8>]) {
        match &mut self.state {
            State::Identity => self.inner.absorb(round, inbox),
            State::Repetition { r, votes, .. } => {
                for (v, msg) in votes.iter_mut().zip(inbox) {
                    v.push(msg.clone());
                }
                if round % *r == 0 {
                    let decided: Vec<Vec<u8>> = votes.iter().map(|v| majority(v)).collect();
                    for v in votes.iter_mut() {
                        v.clear();
                    }
                    self.inner.absorb(round / *r, &decided);
                }
            }
            State::Rewind(rw) => {
                if rw.committed >= rw.inner_rounds {
                    return;
                }
                let pos = (round - 1) % rw.period();
                let tl = rw.tag_len();
                if pos < rw.window {
                    let inner_round = rw.committed + pos + 1;
                    if inner_round > rw.inner_rounds {
                        // Filler inside the last block.
                    } else {
                        let mut symbols = Vec::with_capacity(inbox.len());
                        for (i, msg) in inbox.iter().enumerate() {
                            if msg.len() < tl {
                                rw.error = true;
                                symbols.push(Vec::new());
                                continue;
                            }
                            let (sym, tag) = msg.split_at(msg.len() - tl);
                            if rw.tag(&rw.recv_chain[i], sym) != tag {
                                rw.error = true;
                            }
                            rw.recv_chain[i] = chain_next(&rw.recv_chain[i], sym);
                            symbols.push(sym.to_vec());
                        }
                        self.inner.absorb(inner_round, &symbols);
                    }
                } else {
                    for (i, msg) in inbox.iter().enumerate() {
                        let valid = msg.len() == 1 + tl && msg[0] <= 1 && {
                            let salt = [&msg[..1], &round.to_be_bytes()].concat();
                            rw.tag(&rw.recv_chain[i], &salt) == msg[1..]
                        };
                        rw.flag |= !valid || msg[0] == 1;
                    }
                }
                if pos + 1 == rw.period() {
                    if rw.flag && rw.replays < rw.max_replays {
                        rw.replays += 1;
                        if let Some(cp) = rw.checkpoint.take() {
                            self.inner = cp;
                        }
                        let (s, r) = std::mem::take(&mut rw.saved_chains);
                        rw.send_chain = s;
                        rw.recv_chain = r;
                    } else {
                        rw.committed = (rw.committed + rw.window).min(rw.inner_rounds);
                    }
                    rw.flag = false;
                }
            }
        }
    }
}

/// Wraps every node of `protocol` with `codec`.
pub fn codec_wrap<N: FusNode>(codec: CodecSpec, protocol: FusProtocol<N>) -> Result<FusProtocol<CodecNode<N>>> {
    codec.validate()?;
    let n = protocol.backbone.n();
    let inner_rounds = protocol.rounds;
    Ok(FusProtocol {
        rounds: codec.outer_rounds(inner_rounds, n),
        nodes: protocol
            .nodes
            .into_iter()
            .map(|x| CodecNode::new(x, codec, inner_rounds, n))
            .collect(),
        backbone: protocol.backbone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fus::{fus_wrap, run_lockstep, run_lockstep_from, FusNodeKind, FusOptions, FusVariant};
    use crate::graph::{generate, Graph, GraphKind};
    use crate::pi::{generate_pi, reference_transcript, PiKind};

    fn tree_protocol(g: &Graph, bits: usize) -> (FusProtocol<FusNodeKind>, crate::pi::Transcript) {
        let pi = generate_pi(PiKind::AllToOne, g, 0, bits, 5).unwrap();
        let p = fus_wrap(&pi, g, FusVariant::Tree, FusOptions::default()).unwrap();
        (p, reference_transcript(&pi))
    }

    fn transcripts(nodes: &[CodecNode<FusNodeKind>]) -> Vec<crate::pi::NodeTranscript> {
        nodes.iter().map(|c| c.inner().transcript().clone()).collect()
    }

    #[test]
    fn validation() {
        assert!(CodecSpec::Repetition { r: 2 }.validate().is_err());
        assert!(CodecSpec::Repetition { r: 1 }.validate().is_err());
        assert!(CodecSpec::Repetition { r: 3 }.validate().is_ok());
        assert!(CodecSpec::Rewind { hash_bits: 0, window: 2, max_replays: 1 }.validate().is_err());
        let b = CodecSpec::Repetition { r: 5 }.declared_budget(4, 3);
        assert_eq!(b, DeclaredBudget { per_slot: Some(2), total: 48 });
        assert_eq!(CodecSpec::Identity.declared_budget(9, 9).total, 0);
    }

    #[test]
    fn identity_is_transparent() {
        let g = generate(GraphKind::Path, 4, 0).unwrap();
        let (plain, reference) = tree_protocol(&g, 4);
        let mut bare = plain.clone();
        let bare_stats = run_lockstep(&mut bare);
        let mut wrapped = codec_wrap(CodecSpec::Identity, plain).unwrap();
        let stats = run_lockstep(&mut wrapped);
        assert_eq!(stats, bare_stats);
        assert_eq!(transcripts(&wrapped.nodes), reference);
    }

    #[test]
    fn repetition_survives_one_per_slot() {
        let g = generate(GraphKind::Path, 3, 0).unwrap();
        let (plain, reference) = tree_protocol(&g, 3);
        let mut wrapped = codec_wrap(CodecSpec::Repetition { r: 3 }, plain).unwrap();
        // Corrupt repeat (round % 3) of every slot, rotating which repeat is hit.
        let rounds = wrapped.rounds;
        run_lockstep_from(&g.clone(), &mut wrapped.nodes, 1, rounds, |round, src, dst, p| {
            if (round + src as u64 + dst as u64) % 3 == 0 {
                for b in p.iter_mut() {
                    *b = !*b;
                }
            }
        });
        assert_eq!(transcripts(&wrapped.nodes), reference);
    }

    #[test]
    fn repetition_fails_two_in_a_slot() {
        let g = generate(GraphKind::Path, 2, 0).unwrap();
        let (plain, reference) = tree_protocol(&g, 1);
        let mut wrapped = codec_wrap(CodecSpec::Repetition { r: 3 }, plain).unwrap();
        let rounds = wrapped.rounds;
        run_lockstep_from(&g.clone(), &mut wrapped.nodes, 1, rounds, |round, src, _, p| {
            if src == 1 && round <= 2 {
                for b in p.iter_mut() {
                    *b = !*b;
                }
            }
        });
        assert_ne!(transcripts(&wrapped.nodes), reference);
    }

    #[test]
    fn rewind_recovers_from_data_corruption() {
        let g = generate(GraphKind::Star, 4, 0).unwrap();
        let (plain, reference) = tree_protocol(&g, 2);
        let codec = CodecSpec::Rewind { hash_bits: 16, window: 3, max_replays: 4 };
        let mut wrapped = codec_wrap(codec, plain).unwrap();
        let rounds = wrapped.rounds;
        let period = 3 + 3;
        let mut hits = 0;
        run_lockstep_from(&g.clone(), &mut wrapped.nodes, 1, rounds, |round, src, _, p| {
            // Two data-round hits, in different blocks.
            if src == 2 && (round == 2 || round == 2 + 2 * period) && !p.is_empty() {
                p[0] ^= 0x40;
                hits += 1;
            }
        });
        assert_eq!(hits, 2);
        assert_eq!(wrapped.nodes[0].replays(), 2);
        assert!(wrapped.nodes.iter().all(|c| c.replays() == 2));
        assert_eq!(transcripts(&wrapped.nodes), reference);
    }

    #[test]
    fn rewind_noise_free_matches_reference() {
        let g = generate(GraphKind::Path, 5, 0).unwrap();
        let (plain, reference) = tree_protocol(&g, 3);
        let codec = CodecSpec::Rewind { hash_bits: 8, window: 4, max_replays: 2 };
        let mut wrapped = codec_wrap(codec, plain).unwrap();
        run_lockstep(&mut wrapped);
        assert_eq!(transcripts(&wrapped.nodes), reference);
        assert!(wrapped.nodes.iter().all(|c| c.replays() == 0));
    }

    #[test]
    fn majority_picks_most_frequent() {
        assert_eq!(majority(&[vec![1], vec![2], vec![1]]), vec![1]);
        assert_eq!(majority(&[vec![1], vec![2], vec![3]]), vec![1]);
        assert_eq!(majority(&[]), Vec::<u8>::new());
    }
}
