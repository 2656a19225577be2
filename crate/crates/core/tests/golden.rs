//! Frozen outputs for one seeded random graph. Set `UPDATE_GOLDEN=1` to rewrite.

use std::fs;
use std::path::PathBuf;

use asyncode::experiment::write_report;
use asyncode::{
    generate, generate_pi, greedy_spanner, run_bfs, AdversarySpec, CodecSpec, GraphKind, OutputFormat, PiKind,
};
use asyncode::pipeline::{run_pipeline, PipelineKind};

fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted");
}

#[test]
fn random_n10_seed42() {
    let g = generate(GraphKind::Random(0.5), 10, 42).unwrap();
    check("graph.txt", &g.to_edge_list(&[]));

    let bfs = run_bfs(&g, 0, &AdversarySpec::total_noise(), 42).unwrap();
    check("bfs_tree.txt", &bfs.tree.to_text());

    check("spanner_k2.txt", &greedy_spanner(&g, 2).unwrap().to_text());

    let pi = generate_pi(PiKind::AllPairs, &g, 0, 2, 42).unwrap();
    let mut reports = Vec::new();
    for kind in [PipelineKind::Tree, PipelineKind::Spanner { k: 2 }] {
        for codec in [CodecSpec::Identity, CodecSpec::Repetition { r: 3 }] {
            reports.push(run_pipeline(&pi, &g, 0, kind, codec, &AdversarySpec::random(), 42).unwrap().report);
        }
    }
    let mut csv = Vec::new();
    write_report(&reports, OutputFormat::Csv, &mut csv).unwrap();
    check("report.csv", &String::from_utf8(csv).unwrap());
}
