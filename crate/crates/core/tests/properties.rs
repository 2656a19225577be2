mod common;

use std::cell::Cell;
use std::rc::Rc;

use asyncode::netsim::{CorruptionRule, Delivery, Target};
use asyncode::pipeline::{run_pipeline, run_pipeline_with, PipelineKind};
use asyncode::{
    generate, generate_pi, run_bfs, verify_bfs, AdversarySpec, Budget, CodecSpec, GraphKind, PiKind,
};
use common::{corpus, oracle_distances, BudgetWatch};
use proptest::prelude::*;

fn graph_strategy() -> impl Strategy<Value = asyncode::Graph> {
    (3usize..10, 0.25f64..0.8, any::<u64>()).prop_map(|(n, p, seed)| generate(GraphKind::Random(p), n, seed).unwrap())
}

fn delivery() -> impl Strategy<Value = Delivery> {
    prop_oneof![Just(Delivery::Fifo), Just(Delivery::Lifo), Just(Delivery::Random)]
}

fn corruption() -> impl Strategy<Value = CorruptionRule> {
    prop_oneof![
        Just(CorruptionRule::FlipAllBits),
        Just(CorruptionRule::RandomBytes),
        Just(CorruptionRule::Zero),
        Just(CorruptionRule::Truncate),
    ]
}

#[test]
fn bfs_depths_match_oracle_on_every_root() {
    for (name, g) in corpus() {
        for root in 0..g.n() {
            let run = run_bfs(&g, root, &AdversarySpec::total_noise(), root as u64).unwrap();
            let dist = oracle_distances(&g, root);
            for u in 0..g.n() {
                let depth = std::iter::successors(Some(u), |&x| run.tree.parent[x]).count() - 1;
                assert_eq!(depth, dist[u], "{name} root {root} node {u}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bfs_is_schedule_and_noise_oblivious(g in graph_strategy(), d in delivery(), c in corruption(), seed: u64) {
        let root = (seed % g.n() as u64) as usize;
        let spec = AdversarySpec { delivery: d, budget: Budget::ALL, corruption: c, target: Target::All };
        let noisy = run_bfs(&g, root, &spec, seed).unwrap();
        let clean = run_bfs(&g, root, &AdversarySpec::none(), 0).unwrap();
        prop_assert!(verify_bfs(&g, root, &noisy.tree).all());
        prop_assert_eq!(noisy.tree, clean.tree);
    }

    #[test]
    fn same_seed_same_report(g in graph_strategy(), seed: u64, spanner: bool) {
        let pi = generate_pi(PiKind::AllPairs, &g, 0, 1, seed).unwrap();
        let kind = if spanner { PipelineKind::Spanner { k: 2 } } else { PipelineKind::Tree };
        let spec = AdversarySpec {
            delivery: Delivery::Random,
            budget: Budget::new(1, 30).unwrap(),
            corruption: CorruptionRule::RandomBytes,
            target: Target::All,
        };
        let codec = CodecSpec::Repetition { r: 3 };
        let a = run_pipeline(&pi, &g, 0, kind, codec, &spec, seed).unwrap();
        let b = run_pipeline(&pi, &g, 0, kind, codec, &spec, seed).unwrap();
        prop_assert_eq!(a.report, b.report);
        prop_assert_eq!(a.transcripts, b.transcripts);
    }

    #[test]
    fn corruptions_never_exceed_the_prefix_budget(
        g in graph_strategy(),
        num in 1u64..4,
        den in 4u64..60,
        c in corruption(),
        seed: u64,
    ) {
        let budget = Budget::new(num, den).unwrap();
        let spec = AdversarySpec { delivery: Delivery::Random, budget, corruption: c, target: Target::All };
        let checks = Rc::new(Cell::new(0));
        let watch = BudgetWatch { inner: spec.build(seed), budget, checks: checks.clone() };
        let pi = generate_pi(PiKind::Unicast, &g, 0, 4, seed).unwrap();
        let run = run_pipeline_with(&pi, &g, 0, PipelineKind::Tree, CodecSpec::Identity, Box::new(watch), budget, seed)
            .unwrap();
        prop_assert!(checks.get() > 0);
        let r = run.report;
        let sent = r.messages_bfs + r.messages_spanner_phase + r.messages_main_phase;
        prop_assert!(r.corruptions_injected <= budget.allowance(sent));
    }
}
