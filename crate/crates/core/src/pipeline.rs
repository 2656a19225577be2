//! End-to-end coding pipelines inside a single simulated network.
//!
//! Every node runs the same automaton through a fixed sequence of segments:
//!
//! 1. content-oblivious BFS from the root;
//! 2. (spanner pipeline) the spanner construction protocol, FUS-compiled over
//!    the BFS tree, coded and synchronized; then padding rounds and root
//!    ping-pongs so that this phase sends exactly as many messages as the
//!    main phase;
//! 3. the input protocol, FUS-compiled over the tree or the learned spanner,
//!    coded and synchronized; then padding if the construction phase was the
//!    larger one.
//!
//! The root drives every segment and opens the next one only after finishing
//! the current one, which (by the synchronizer's first-contact trees) means
//! every node has finished it too. A node therefore tells segments apart by
//! counting, never by reading payloads.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bfs::{bfs_message_bound, BfsNode, BfsState, BfsTree, Reaction};
use crate::codec::{CodecNode, CodecSpec};
use crate::error::{Error, Result};
use crate::fus::{fus_horizon, FusNode, FusNodeKind, FusOptions, FusVariant, SpannerFusNode, TreeFusNode};
use crate::graph::{Graph, NodeId};
use crate::netsim::{Adversary, AdversarySpec, Automaton, Budget, Ctx, Simulation, Tag};
use crate::pi::{reference_transcript, NodeTranscript, PiDescriptor};
use crate::spanner::{assemble_spanner, distributed_spanner_protocol, greedy_spanner, learned_view, SpannerView};
use crate::sync::{Outgoing, SyncNode};

pub const STAGE_BFS: u32 = 0;
pub const STAGE_SPANNER: u32 = 1;
pub const STAGE_SPANNER_PAD: u32 = 2;
pub const STAGE_MAIN: u32 = 3;
pub const STAGE_MAIN_PAD: u32 = 4;
const STAGES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PipelineKind {
    Tree,
    Spanner { k: usize },
}

/// One pipeline run, flattened for CSV and JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: usize,
    pub m: usize,
    /// Edges of the main-phase backbone.
    pub s: usize,
    /// Stretch of the main-phase backbone; 0 for the tree pipeline.
    pub t: usize,
    pub cc_pi_bits: u64,
    pub cc_sim_bits: u64,
    pub overhead: f64,
    pub messages_bfs: u64,
    pub messages_spanner_phase: u64,
    pub messages_main_phase: u64,
    pub corruptions_injected: u64,
    pub success: bool,
    pub seed: u64,
    /// Corruptions that hit coded rounds.
    #[serde(skip)]
    pub codec_corruptions: u64,
    /// Largest number of corruptions on one inner symbol slot.
    #[serde(skip)]
    pub max_slot_corruptions: u64,
    /// Main-phase messages, padding excluded.
    #[serde(skip)]
    pub main_phase_symbols: u64,
    /// `(inner rounds, backbone edges)` of each coded phase.
    #[serde(skip)]
    pub coded_phases: Vec<(u64, u64)>,
}

/// A report plus what the nodes ended up with.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub transcripts: Vec<NodeTranscript>,
    pub tree: BfsTree,
    /// Spanner assembled from the nodes' views, if they agree.
    pub learned_spanner: Option<Graph>,
    /// Messages that arrived where no segment expected them.
    pub stray: u64,
    pub step_cap_hit: bool,
}

/// True iff staying within the codec's declared budget implies success.
pub fn resilience_audit(report: &PipelineReport, codec: CodecSpec) -> bool {
    let mut total = 0;
    let mut per_slot = None;
    for &(rounds, edges) in &report.coded_phases {
        let b = codec.declared_budget(rounds, edges);
        total += b.total;
        per_slot = b.per_slot;
    }
    let within = report.codec_corruptions <= total && per_slot.is_none_or(|p| report.max_slot_corruptions <= p);
    !within || report.success
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Bfs,
    PhaseA,
    PadA,
    PingA,
    Main,
    PadB,
    PingB,
    End,
}

impl Step {
    fn next(self, spanner: bool) -> Step {
        match (self, spanner) {
            (Step::Bfs, false) => Step::Main,
            (Step::Main, false) => Step::End,
            (Step::Bfs, true) => Step::PhaseA,
            (Step::PhaseA, _) => Step::PadA,
            (Step::PadA, _) => Step::PingA,
            (Step::PingA, _) => Step::Main,
            (Step::Main, true) => Step::PadB,
            (Step::PadB, _) => Step::PingB,
            (Step::PingB, _) | (Step::End, _) => Step::End,
        }
    }
}

/// Immutable parameters every node knows.
struct Plan {
    graph: Graph,
    root: NodeId,
    kind: PipelineKind,
    codec: CodecSpec,
    options: FusOptions,
    pi: Arc<PiDescriptor>,
    pi_spanner: Option<Arc<PiDescriptor>>,
    /// Inner and outer round counts of the construction phase.
    rounds_a: (u64, u64),
    /// Inner and outer round counts of the main phase.
    rounds_b: (u64, u64),
}

impl Plan {
    fn t(&self) -> usize {
        match self.kind {
            PipelineKind::Tree => 0,
            PipelineKind::Spanner { k } => 2 * k - 1,
        }
    }
}

/// Round that sends a zero byte to every neighbor and ignores its inbox.
#[derive(Clone, Debug)]
pub struct Filler {
    neighbors: Vec<NodeId>,
}

impl FusNode for Filler {
    fn neighbors(&self) -> &[NodeId] {
        &self.neighbors
    }

    fn emit(&mut self, _round: u64) -> Vec<Vec<u8>> {
        vec![vec![0]; self.neighbors.len()]
    }

    fn absorb(&mut self, _round: u64, _inbox: &[Vec<u8>]) {}
}

type Coded = SyncNode<CodecNode<FusNodeKind>>;

enum Segment {
    Bfs,
    Coded(Box<Coded>),
    Filler(SyncNode<Filler>),
    Ping { remaining: u64, stage: u32 },
    End,
}

#[derive(Clone, Copy, Debug, Default)]
struct Pads {
    a_rounds: u64,
    a_pings: u64,
    b_rounds: u64,
    b_pings: u64,
}

/// The per-node automaton.
pub struct PipelineNode {
    me: NodeId,
    plan: Arc<Plan>,
    neighbors: Vec<NodeId>,
    bfs: BfsNode,
    step: Step,
    segment: Segment,
    tree: Vec<NodeId>,
    view: Option<SpannerView>,
    pads: Pads,
    main: Option<FusNodeKind>,
    sent: [u64; STAGES],
    stray: u64,
}

fn local_graph(n: usize, me: NodeId, neighbors: &[NodeId]) -> Graph {
    Graph::new(n, neighbors.iter().map(|&v| (me, v))).expect("neighbors are valid node ids")
}

impl PipelineNode {
    fn new(me: NodeId, plan: Arc<Plan>) -> Self {
        let neighbors = plan.graph.neighbors(me).to_vec();
        PipelineNode {
            me,
            bfs: BfsNode::new(plan.graph.n(), neighbors.clone(), me == plan.root),
            neighbors,
            plan,
            step: Step::Bfs,
            segment: Segment::Bfs,
            tree: Vec::new(),
            view: None,
            pads: Pads::default(),
            main: None,
            sent: [0; STAGES],
            stray: 0,
        }
    }

    fn is_root(&self) -> bool {
        self.me == self.plan.root
    }

    pub fn bfs(&self) -> &BfsNode {
        &self.bfs
    }

    pub fn spanner_view(&self) -> Option<&SpannerView> {
        self.view.as_ref()
    }

    /// Transcript of the input protocol, once the main phase has finished here.
    pub fn transcript(&self) -> Option<&NodeTranscript> {
        self.main.as_ref().map(FusNodeKind::transcript)
    }

    fn partner(&self) -> Option<NodeId> {
        self.neighbors.first().copied()
    }

    fn coded(&self, fus: FusNodeKind, rounds: (u64, u64), stage: u32) -> Segment {
        let n = self.plan.graph.n();
        let node = CodecNode::new(fus, self.plan.codec, rounds.0, n);
        Segment::Coded(Box::new(SyncNode::new(node, self.is_root(), rounds.1, stage)))
    }

    fn filler(&self, neighbors: Vec<NodeId>, rounds: u64, stage: u32) -> Option<Segment> {
        (rounds > 0).then(|| Segment::Filler(SyncNode::new(Filler { neighbors }, self.is_root(), rounds, stage)))
    }

    fn ping(&self, pings: u64, stage: u32) -> Option<Segment> {
        let involved = self.is_root() || self.view.as_ref().is_some_and(|v| v.pad_partner);
        (pings > 0 && involved).then_some(Segment::Ping { remaining: pings, stage })
    }

    fn spanner_neighbors(&self) -> Vec<NodeId> {
        self.view.as_ref().map(|v| v.incident.iter().copied().collect()).unwrap_or_default()
    }

    /// Segment for `step`, or `None` if this node has nothing to do in it.
    fn build(&self, step: Step) -> Option<Segment> {
        let plan = &self.plan;
        let n = plan.graph.n();
        match step {
            Step::Bfs => Some(Segment::Bfs),
            Step::PhaseA => {
                let pi = plan.pi_spanner.clone().expect("spanner pipeline");
                let fus = FusNodeKind::Tree(TreeFusNode::new(self.me, &local_graph(n, self.me, &self.tree), pi));
                Some(self.coded(fus, plan.rounds_a, STAGE_SPANNER))
            }
            Step::PadA => self.filler(self.tree.clone(), self.pads.a_rounds, STAGE_SPANNER_PAD),
            Step::PingA => self.ping(self.pads.a_pings, STAGE_SPANNER_PAD),
            Step::Main => {
                let fus = match plan.kind {
                    PipelineKind::Tree => {
                        FusNodeKind::Tree(TreeFusNode::new(self.me, &local_graph(n, self.me, &self.tree), plan.pi.clone()))
                    }
                    PipelineKind::Spanner { .. } => {
                        let local = local_graph(n, self.me, &self.spanner_neighbors());
                        let modulus = if plan.options.index_mod3 { 3 } else { n.max(2) as u32 };
                        FusNodeKind::Spanner(SpannerFusNode::new(
                            self.me,
                            &local,
                            plan.t(),
                            modulus,
                            plan.options.relay,
                            plan.pi.clone(),
                        ))
                    }
                };
                Some(self.coded(fus, plan.rounds_b, STAGE_MAIN))
            }
            Step::PadB => self.filler(self.spanner_neighbors(), self.pads.b_rounds, STAGE_MAIN_PAD),
            Step::PingB => self.ping(self.pads.b_pings, STAGE_MAIN_PAD),
            Step::End => Some(Segment::End),
        }
    }

    /// Called when leaving a finished coded segment.
    fn harvest(&mut self, step: Step, fus: FusNodeKind) {
        match step {
            Step::PhaseA => {
                let plan = &self.plan;
                let PipelineKind::Spanner { k } = plan.kind else {
                    unreachable!("construction phase only runs in the spanner pipeline")
                };
                let pi = plan.pi_spanner.as_ref().expect("spanner pipeline");
                let view = learned_view(&plan.graph, k, plan.root, self.me, pi, fus.transcript());
                self.pads = balance(plan.graph.n(), plan.rounds_a.1, plan.rounds_b.1, view.s as u64);
                self.view = Some(view);
            }
            Step::Main => self.main = Some(fus),
            _ => {}
        }
    }

    /// Moves on to the next segment this node takes part in; the root also
    /// starts it.
    fn advance(&mut self, now: u64, out: &mut Vec<Outgoing>) {
        let spanner = matches!(self.plan.kind, PipelineKind::Spanner { .. });
        loop {
            if let Segment::Coded(sync) = std::mem::replace(&mut self.segment, Segment::End) {
                self.harvest(self.step, sync.into_inner().into_inner());
            }
            self.step = self.step.next(spanner);
            let Some(segment) = self.build(self.step) else {
                continue;
            };
            self.segment = segment;
            if !self.is_root() {
                return;
            }
            let finished = match &mut self.segment {
                Segment::Coded(sync) => {
                    sync.start(now, out);
                    sync.is_complete()
                }
                Segment::Filler(sync) => {
                    sync.start(now, out);
                    sync.is_complete()
                }
                Segment::Ping { stage, .. } => {
                    let partner = self.neighbors[0];
                    out.push((partner, vec![0], Tag { stage: *stage, round: 0 }));
                    false
                }
                Segment::Bfs | Segment::End => true,
            };
            if !finished || self.step == Step::End {
                return;
            }
        }
    }

    fn dispatch(&mut self, from: NodeId, payload: &[u8], now: u64, out: &mut Vec<Outgoing>) {
        let root = self.is_root();
        let expected_ping = if root { self.partner() } else { Some(from) };
        let finished = match &mut self.segment {
            Segment::Bfs => unreachable!("BFS traffic is handled before dispatch"),
            Segment::Coded(sync) => {
                sync.receive(from, payload, now, out);
                sync.is_complete()
            }
            Segment::Filler(sync) => {
                sync.receive(from, payload, now, out);
                sync.is_complete()
            }
            Segment::Ping { remaining, stage } => {
                if Some(from) != expected_ping {
                    self.stray += 1;
                    return;
                }
                *remaining -= 1;
                let tag = Tag { stage: *stage, round: 0 };
                if !root || *remaining > 0 {
                    out.push((from, vec![0], tag));
                }
                *remaining == 0
            }
            Segment::End => {
                self.stray += 1;
                false
            }
        };
        if finished {
            self.advance(now, out);
        }
    }

    fn handle(&mut self, from: Option<NodeId>, payload: &[u8], now: u64, out: &mut Vec<Outgoing>) {
        let bfs_tag = Tag { stage: STAGE_BFS, round: 0 };
        let Some(from) = from else {
            if let Reaction::Send(v) = self.bfs.wake(now) {
                out.push((v, Vec::new(), bfs_tag));
            }
            if self.bfs.state() == BfsState::Done {
                self.enter_main_stages(now, out);
            }
            return;
        };
        if !matches!(self.segment, Segment::Bfs) {
            self.dispatch(from, payload, now, out);
            return;
        }
        match self.bfs.receive(from, now) {
            Reaction::Send(v) => out.push((v, Vec::new(), bfs_tag)),
            Reaction::Quiet => {}
            Reaction::Handoff => {
                self.enter_main_stages(now, out);
                self.dispatch(from, payload, now, out);
                return;
            }
        }
        if self.is_root() && self.bfs.state() == BfsState::Done {
            self.enter_main_stages(now, out);
        }
    }

    fn enter_main_stages(&mut self, now: u64, out: &mut Vec<Outgoing>) {
        self.tree = self.bfs.parent().into_iter().chain(self.bfs.children().iter().copied()).collect();
        self.tree.sort_unstable();
        self.advance(now, out);
    }
}

impl Automaton for PipelineNode {
    fn on_wake(&mut self, ctx: &mut Ctx<'_>) {
        let mut out = Vec::new();
        self.handle(None, &[], ctx.now(), &mut out);
        for (v, p, tag) in out {
            self.sent[tag.stage as usize] += 1;
            ctx.send_tagged(v, p, tag);
        }
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_>, from: NodeId, payload: &[u8]) {
        let mut out = Vec::new();
        self.handle(Some(from), payload, ctx.now(), &mut out);
        for (v, p, tag) in out {
            self.sent[tag.stage as usize] += 1;
            ctx.send_tagged(v, p, tag);
        }
    }
}

/// Padding that equalizes the two phases: whole filler rounds on the smaller
/// phase's backbone, the remainder as root ping-pongs.
fn balance(n: usize, outer_a: u64, outer_b: u64, s: u64) -> Pads {
    let tree_edges = n as u64 - 1;
    let a = outer_a * 2 * tree_edges;
    let b = outer_b * 2 * s;
    let split = |d: u64, edges: u64| {
        if edges == 0 {
            (0, d / 2)
        } else {
            (d / (2 * edges), d % (2 * edges) / 2)
        }
    };
    let mut pads = Pads::default();
    if b >= a {
        (pads.a_rounds, pads.a_pings) = split(b - a, tree_edges);
    } else {
        (pads.b_rounds, pads.b_pings) = split(a - b, s);
    }
    pads
}

/// Runs the tree pipeline.
pub fn pipeline_tree(
    pi: &PiDescriptor,
    graph: &Graph,
    root: NodeId,
    codec: CodecSpec,
    adversary: &AdversarySpec,
    seed: u64,
) -> Result<PipelineReport> {
    run_pipeline(pi, graph, root, PipelineKind::Tree, codec, adversary, seed).map(|r| r.report)
}

/// Runs the spanner pipeline with stretch `2k - 1`.
pub fn pipeline_spanner(
    pi: &PiDescriptor,
    graph: &Graph,
    root: NodeId,
    k: usize,
    codec: CodecSpec,
    adversary: &AdversarySpec,
    seed: u64,
) -> Result<PipelineReport> {
    run_pipeline(pi, graph, root, PipelineKind::Spanner { k }, codec, adversary, seed).map(|r| r.report)
}

/// Runs either pipeline under an adversary built from `adversary`.
pub fn run_pipeline(
    pi: &PiDescriptor,
    graph: &Graph,
    root: NodeId,
    kind: PipelineKind,
    codec: CodecSpec,
    adversary: &AdversarySpec,
    seed: u64,
) -> Result<PipelineRun> {
    run_pipeline_with(pi, graph, root, kind, codec, Box::new(adversary.build(seed)), adversary.budget, seed)
}

/// Runs either pipeline under a custom adversary.
#[allow(clippy::too_many_arguments)]
pub fn run_pipeline_with(
    pi: &PiDescriptor,
    graph: &Graph,
    root: NodeId,
    kind: PipelineKind,
    codec: CodecSpec,
    adversary: Box<dyn Adversary<PipelineNode>>,
    budget: Budget,
    seed: u64,
) -> Result<PipelineRun> {
    let n = graph.n();
    if pi.n() != n {
        return Err(Error::InvalidDescriptor(format!("protocol has {} nodes, graph has {n}", pi.n())));
    }
    if pi.is_empty() {
        return Err(Error::InvalidDescriptor("protocol sends nothing".into()));
    }
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    if root >= n {
        return Err(Error::NodeOutOfRange { node: root, n });
    }
    codec.validate()?;
    let options = FusOptions::default();
    // A path has n nodes and the FUS horizons depend only on n and record counts.
    let any_tree = Graph::new(n, (1..n).map(|v| (v - 1, v)))?;
    let (pi_spanner, oracle, rounds_a, rounds_b) = match kind {
        PipelineKind::Tree => {
            let inner = fus_horizon(pi, &any_tree, FusVariant::Tree);
            (None, None, (0, 0), (inner, codec.outer_rounds(inner, n)))
        }
        PipelineKind::Spanner { k } => {
            if k == 0 {
                return Err(Error::config("pipeline.k", "must be at least 1"));
            }
            if !pi.is_local_to(graph) {
                return Err(Error::InvalidDescriptor(
                    "spanner pipeline needs every message between graph neighbors".into(),
                ));
            }
            let ps = distributed_spanner_protocol(graph, k, root)?;
            let inner_a = fus_horizon(&ps, &any_tree, FusVariant::Tree);
            let inner_b = fus_horizon(pi, graph, FusVariant::Spanner { t: 2 * k - 1 });
            (
                Some(Arc::new(ps)),
                Some(greedy_spanner(graph, k)?),
                (inner_a, codec.outer_rounds(inner_a, n)),
                (inner_b, codec.outer_rounds(inner_b, n)),
            )
        }
    };
    let plan = Arc::new(Plan {
        graph: graph.clone(),
        root,
        kind,
        codec,
        options,
        pi: Arc::new(pi.clone()),
        pi_spanner,
        rounds_a,
        rounds_b,
    });
    let m = graph.m() as u64;
    let n64 = n as u64;
    let cap = 10 * (bfs_message_bound(n, graph.m()) + 4 * n64 * n64 * (rounds_a.1 + rounds_b.1 + 1) + 4 * m);
    let nodes: Vec<PipelineNode> = (0..n).map(|u| PipelineNode::new(u, plan.clone())).collect();
    let mut sim = Simulation::with_adversary(graph.clone(), nodes, root, adversary, budget)?.with_step_cap(cap);
    let step_cap_hit = match sim.run() {
        Ok(()) => false,
        Err(Error::StepCapExceeded { .. }) => true,
        Err(e) => return Err(e),
    };
    let outcome = sim.into_outcome();

    let reference = reference_transcript(pi);
    let transcripts: Vec<NodeTranscript> = outcome
        .nodes
        .iter()
        .map(|x| x.transcript().cloned().unwrap_or_default())
        .collect();
    let success = !step_cap_hit && transcripts == reference;

    let mut sent = [0u64; STAGES];
    for node in &outcome.nodes {
        for (acc, x) in sent.iter_mut().zip(node.sent) {
            *acc += x;
        }
    }

    let outer_of = |stage: u32| match stage {
        STAGE_SPANNER => Some(rounds_a.1),
        STAGE_MAIN => Some(rounds_b.1),
        _ => None,
    };
    let mut slots: BTreeMap<(u32, u64, NodeId, NodeId), u64> = BTreeMap::new();
    let mut codec_corruptions = 0;
    for ev in &outcome.corruptions {
        let Some(outer) = outer_of(ev.tag.stage) else {
            continue;
        };
        if ev.tag.round == 0 || ev.tag.round > outer {
            continue;
        }
        codec_corruptions += 1;
        let inner = codec.inner_round_of(ev.tag.round).unwrap_or(ev.tag.round);
        *slots.entry((ev.tag.stage, inner, ev.src, ev.dst)).or_default() += 1;
    }

    let tree = BfsTree::from_nodes(root, &outcome.nodes.iter().map(|x| x.bfs.clone()).collect::<Vec<_>>());
    let (s, t, coded_phases, learned_spanner) = match &oracle {
        None => (n - 1, 0, vec![(rounds_b.0, n64 - 1)], None),
        Some(o) => {
            let views: Vec<_> = outcome
                .nodes
                .iter()
                .map(|x| x.view.as_ref().map(|v| v.incident.clone()).unwrap_or_default())
                .collect();
            (
                o.s,
                o.t,
                vec![(rounds_a.0, n64 - 1), (rounds_b.0, o.s as u64)],
                assemble_spanner(n, &views),
            )
        }
    };
    let messages_bfs = sent[STAGE_BFS as usize];
    let cc_pi_bits = pi.cc_bits();
    let cc_sim_bits = outcome.metrics.bits_sent + messages_bfs;
    let report = PipelineReport {
        n,
        m: graph.m(),
        s,
        t,
        cc_pi_bits,
        cc_sim_bits,
        overhead: cc_sim_bits as f64 / cc_pi_bits as f64,
        messages_bfs,
        messages_spanner_phase: sent[STAGE_SPANNER as usize] + sent[STAGE_SPANNER_PAD as usize],
        messages_main_phase: sent[STAGE_MAIN as usize] + sent[STAGE_MAIN_PAD as usize],
        corruptions_injected: outcome.metrics.corruptions_used,
        success,
        seed,
        codec_corruptions,
        max_slot_corruptions: slots.values().copied().max().unwrap_or(0),
        main_phase_symbols: sent[STAGE_MAIN as usize],
        coded_phases,
    };
    Ok(PipelineRun {
        report,
        transcripts,
        tree,
        learned_spanner,
        stray: outcome.nodes.iter().map(|x| x.stray).sum(),
        step_cap_hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfs::verify_bfs;
    use crate::graph::{generate, GraphKind};
    use crate::netsim::{CorruptionRule, Delivery, Target};
    use crate::pi::{generate_pi, PiKind, PiMessage};

    fn one_bit() -> PiDescriptor {
        PiDescriptor::new(2, vec![PiMessage { src: 0, dst: 1, bits: vec![false], deps: vec![] }]).unwrap()
    }

    #[test]
    fn p2_single_bit_tree() {
        let g = generate(GraphKind::Path, 2, 0).unwrap();
        let r = pipeline_tree(&one_bit(), &g, 0, CodecSpec::Identity, &AdversarySpec::none(), 0).unwrap();
        assert!(r.success);
        assert!(r.messages_bfs > 0);
        assert!(r.overhead.is_finite());
        assert_eq!(r.messages_spanner_phase, 0);
        // Two inner rounds per record, two records, one edge.
        assert_eq!(r.messages_main_phase, 2 * 2 * 2);
        assert!(resilience_audit(&r, CodecSpec::Identity));
    }

    #[test]
    fn bfs_noise_is_harmless() {
        let g = generate(GraphKind::Path, 2, 0).unwrap();
        let adv = AdversarySpec {
            delivery: Delivery::Random,
            budget: Budget::ALL,
            corruption: CorruptionRule::RandomBytes,
            target: Target::Stage(STAGE_BFS),
        };
        let codec = CodecSpec::Repetition { r: 3 };
        let r = pipeline_tree(&one_bit(), &g, 0, codec, &adv, 4).unwrap();
        assert!(r.success);
        assert_eq!(r.corruptions_injected, r.messages_bfs);
        assert_eq!(r.codec_corruptions, 0);
    }

    #[test]
    fn tree_pipeline_on_corpus_shapes() {
        for kind in [GraphKind::Cycle, GraphKind::Star, GraphKind::Complete, GraphKind::Grid] {
            let g = generate(kind, 6, 1).unwrap();
            let pi = generate_pi(PiKind::AllPairs, &g, 0, 3, 2).unwrap();
            let run = run_pipeline(&pi, &g, 0, PipelineKind::Tree, CodecSpec::Identity, &AdversarySpec::random(), 9)
                .unwrap();
            assert!(run.report.success, "{kind:?}");
            assert!(verify_bfs(&g, 0, &run.tree).all());
            assert_eq!(run.stray, 0);
        }
    }

    #[test]
    fn spanner_pipeline_balances_and_succeeds() {
        for (kind, bits) in [(GraphKind::Complete, 2), (GraphKind::Cycle, 40), (GraphKind::Grid, 1)] {
            let g = generate(kind, 6, 0).unwrap();
            let pi = generate_pi(PiKind::AllPairs, &g, 2, bits, 3).unwrap();
            let run = run_pipeline(
                &pi,
                &g,
                2,
                PipelineKind::Spanner { k: 2 },
                CodecSpec::Identity,
                &AdversarySpec::random(),
                5,
            )
            .unwrap();
            let r = &run.report;
            assert!(r.success, "{kind:?}");
            assert_eq!(r.messages_spanner_phase, r.messages_main_phase, "{kind:?}");
            assert_eq!(run.learned_spanner, Some(greedy_spanner(&g, 2).unwrap().subgraph));
            assert_eq!(run.stray, 0);
        }
    }

    #[test]
    fn tree_input_graph_keeps_tree_backbone() {
        let g = generate(GraphKind::Star, 5, 0).unwrap();
        let pi = generate_pi(PiKind::Unicast, &g, 0, 4, 0).unwrap();
        let run = run_pipeline(&pi, &g, 0, PipelineKind::Spanner { k: 2 }, CodecSpec::Identity, &AdversarySpec::none(), 0)
            .unwrap();
        assert!(run.report.success);
        assert_eq!(run.learned_spanner, Some(g));
    }

    #[test]
    fn spanner_pipeline_rejects_non_local_pi() {
        let g = generate(GraphKind::Path, 4, 0).unwrap();
        let pi = generate_pi(PiKind::AllToOne, &g, 0, 2, 0).unwrap();
        let err = pipeline_spanner(&pi, &g, 0, 2, CodecSpec::Identity, &AdversarySpec::none(), 0);
        assert!(matches!(err, Err(Error::InvalidDescriptor(_))));
    }

    #[test]
    fn total_noise_fails_without_panicking() {
        for kind in [PipelineKind::Tree, PipelineKind::Spanner { k: 2 }] {
            let g = generate(GraphKind::Complete, 5, 0).unwrap();
            let pi = generate_pi(PiKind::AllPairs, &g, 0, 2, 0).unwrap();
            let run = run_pipeline(&pi, &g, 0, kind, CodecSpec::Identity, &AdversarySpec::total_noise(), 1).unwrap();
            assert!(!run.report.success);
            assert!(resilience_audit(&run.report, CodecSpec::Identity));
        }
    }

    #[test]
    fn audit_semantics() {
        let base = PipelineReport {
            coded_phases: vec![(4, 1)],
            ..PipelineReport::default()
        };
        let rep = CodecSpec::Repetition { r: 3 };
        let ok_one = PipelineReport { codec_corruptions: 1, max_slot_corruptions: 1, success: true, ..base.clone() };
        assert!(resilience_audit(&ok_one, rep));
        let over = PipelineReport { codec_corruptions: 2, max_slot_corruptions: 2, success: false, ..base.clone() };
        assert!(resilience_audit(&over, rep));
        let broken = PipelineReport { codec_corruptions: 1, max_slot_corruptions: 1, success: false, ..base };
        assert!(!resilience_audit(&broken, rep));
    }

    #[test]
    fn balance_is_exact() {
        for n in 2..8 {
            for s in 1..12 {
                for (a, b) in [(3, 50), (50, 3), (7, 7)] {
                    let p = balance(n, a, b, s);
                    let e = n as u64 - 1;
                    let left = a * 2 * e + p.a_rounds * 2 * e + 2 * p.a_pings;
                    let right = b * 2 * s + p.b_rounds * 2 * s + 2 * p.b_pings;
                    assert_eq!(left, right);
                }
            }
        }
    }
}
