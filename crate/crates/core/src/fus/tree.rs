use std::collections::VecDeque;
use std::sync::Arc;

use super::{Endpoint, FusNode, Record, SymbolFormat};
use crate::graph::{Graph, NodeId};
use crate::pi::{NodeTranscript, PiDescriptor};

/// Flooding over a spanning tree: one FIFO queue of records per node, one pop
/// per round, each popped record sent to every tree neighbor except the one it
/// came from.
#[derive(Clone, Debug)]
pub struct TreeFusNode {
    me: NodeId,
    neighbors: Vec<NodeId>,
    format: SymbolFormat,
    queue: VecDeque<(Record, Option<NodeId>)>,
    endpoint: Endpoint,
}

impl TreeFusNode {
    pub fn new(me: NodeId, tree: &Graph, pi: Arc<PiDescriptor>) -> Self {
        TreeFusNode {
            me,
            neighbors: tree.neighbors(me).to_vec(),
            format: SymbolFormat::unindexed(tree.n()),
            queue: VecDeque::new(),
            endpoint: Endpoint::new(pi, me),
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn transcript(&self) -> &NodeTranscript {
        self.endpoint.transcript()
    }

    pub fn extraneous(&self) -> usize {
        self.endpoint.extraneous()
    }

    pub fn format(&self) -> SymbolFormat {
        self.format
    }
}

impl FusNode for TreeFusNode {
    fn neighbors(&self) -> &[NodeId] {
        &self.neighbors
    }

    fn emit(&mut self, _round: u64) -> Vec<Vec<u8>> {
        for r in self.endpoint.release(0) {
            self.queue.push_back((r, None));
        }
        let popped = self.queue.pop_front();
        self.neighbors
            .iter()
            .map(|&v| match popped {
                Some((r, from)) if from != Some(v) => self.format.encode(&Some(r)),
                _ => self.format.encode(&None),
            })
            .collect()
    }

    fn absorb(&mut self, _round: u64, inbox: &[Vec<u8>]) {
        for (&w, payload) in self.neighbors.iter().zip(inbox) {
            let Some(r) = self.format.decode(payload) else {
                continue;
            };
            if r.dest == self.me {
                self.endpoint.collect(&r);
            } else {
                self.queue.push_back((r, Some(w)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fus::{fus_wrap, run_lockstep, run_lockstep_from, FusOptions, FusVariant};
    use crate::graph::{generate, GraphKind};
    use crate::pi::{reference_transcript, PiMessage};

    #[test]
    fn idle_tree_sends_only_empty_symbols() {
        let g = generate(GraphKind::Path, 3, 0).unwrap();
        let pi = PiDescriptor::new(3, vec![PiMessage { src: 0, dst: 1, bits: vec![true], deps: vec![] }]).unwrap();
        let mut nodes: Vec<_> = (0..3).map(|u| TreeFusNode::new(u, &g, Arc::new(pi.clone()))).collect();
        // Node 2 has nothing to send and nothing to relay.
        let out = nodes[2].emit(1);
        assert!(out.iter().all(|p| nodes[2].format.decode(p).is_none()));
    }

    #[test]
    fn p3_hand_trace() {
        let g = generate(GraphKind::Path, 3, 0).unwrap();
        let pi = PiDescriptor::new(3, vec![PiMessage { src: 0, dst: 2, bits: vec![true], deps: vec![] }]).unwrap();
        let mut nodes: Vec<_> = (0..3).map(|u| TreeFusNode::new(u, &g, Arc::new(pi.clone()))).collect();
        run_lockstep_from(&g, &mut nodes, 1, 1, |_, _, _, _| {});
        // Node 0 popped the bit; node 1 queued it.
        assert_eq!(nodes[0].queue_len(), 1);
        assert_eq!(nodes[1].queue_len(), 1);
        run_lockstep_from(&g, &mut nodes, 2, 1, |_, _, _, _| {});
        assert_eq!(nodes[1].queue_len(), 1);
        run_lockstep_from(&g, &mut nodes, 3, 1, |_, _, _, _| {});
        assert_eq!(nodes[2].transcript().received[&0], vec![true]);
    }

    #[test]
    fn full_utilization_and_delivery() {
        let g = generate(GraphKind::Star, 5, 0).unwrap();
        let pi = crate::pi::generate_pi(crate::pi::PiKind::AllPairs, &g, 0, 3, 9).unwrap();
        let mut p = fus_wrap(&pi, &g, FusVariant::Tree, FusOptions::default()).unwrap();
        let stats = run_lockstep(&mut p);
        assert_eq!(stats.symbols, p.rounds * 2 * g.m() as u64);
        let reference = reference_transcript(&pi);
        for (u, node) in p.nodes.iter().enumerate() {
            assert_eq!(node.transcript(), &reference[u]);
        }
    }

    #[test]
    fn rejects_cyclic_backbone() {
        let g = generate(GraphKind::Cycle, 4, 0).unwrap();
        let pi = crate::pi::generate_pi(crate::pi::PiKind::Unicast, &g, 0, 1, 0).unwrap();
        assert!(fus_wrap(&pi, &g, FusVariant::Tree, FusOptions::default()).is_err());
    }
}
