#![allow(dead_code)]

use std::collections::VecDeque;

use asyncode::netsim::{Adversary, Budget, Envelope, SpecAdversary, View};
use asyncode::{generate, Graph, GraphKind, NodeId};

/// Named test graphs: the deterministic families at a few sizes plus 20
/// seeded random connected graphs, all with at most 16 nodes.
pub fn corpus() -> Vec<(String, Graph)> {
    let mut out = Vec::new();
    for n in [2, 3, 5, 8, 12, 16] {
        out.push((format!("path{n}"), generate(GraphKind::Path, n, 0).unwrap()));
        out.push((format!("star{n}"), generate(GraphKind::Star, n, 0).unwrap()));
        out.push((format!("complete{n}"), generate(GraphKind::Complete, n, 0).unwrap()));
        out.push((format!("grid{n}"), generate(GraphKind::Grid, n, 0).unwrap()));
        if n >= 3 {
            out.push((format!("cycle{n}"), generate(GraphKind::Cycle, n, 0).unwrap()));
        }
    }
    for i in 0..20u64 {
        let n = 4 + (i as usize * 7) % 13;
        let p = [0.2, 0.35, 0.5][i as usize % 3];
        out.push((format!("random{i}_n{n}"), generate(GraphKind::Random(p), n, 1000 + i).unwrap()));
    }
    out
}

/// Smaller slice of the corpus for the expensive end-to-end checks.
pub fn small_corpus() -> Vec<(String, Graph)> {
    corpus().into_iter().filter(|(_, g)| g.n() <= 8).collect()
}

/// Hop distances by a plain queue-based search, independent of the library.
pub fn oracle_distances(g: &Graph, root: NodeId) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.n()];
    dist[root] = 0;
    let mut q = VecDeque::from([root]);
    while let Some(u) = q.pop_front() {
        for &(a, b) in g.edges() {
            let v = if a == u { b } else if b == u { a } else { continue };
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

/// Wraps a spec adversary and checks the corruption budget before every step.
pub struct BudgetWatch {
    pub inner: SpecAdversary,
    pub budget: Budget,
    pub checks: std::rc::Rc<std::cell::Cell<u64>>,
}

impl<A> Adversary<A> for BudgetWatch {
    fn pick(&mut self, view: &View<'_, A>) -> usize {
        let m = view.metrics;
        assert!(m.corruptions_used <= self.budget.allowance(m.messages_sent), "budget exceeded: {m:?}");
        self.checks.set(self.checks.get() + 1);
        Adversary::<A>::pick(&mut self.inner, view)
    }

    fn corrupt(&mut self, view: &View<'_, A>, env: &Envelope) -> Option<Vec<u8>> {
        Adversary::<A>::corrupt(&mut self.inner, view, env)
    }
}
