//! Noise-resilient simulation of asynchronous distributed protocols.
//!
//! The crate builds a content-oblivious BFS tree, compiles an input protocol
//! into a fully-utilized synchronous one over a tree or a spanner, codes it
//! against message corruption and runs it through a root-triggered
//! synchronizer, all inside a deterministic simulated network whose adversary
//! picks the delivery order and corrupts payloads within a budget.

pub mod bfs;
pub mod codec;
pub mod error;
pub mod experiment;
pub mod fus;
pub mod graph;
pub mod netsim;
pub mod pi;
pub mod pipeline;
pub mod spanner;
pub mod sync;

pub use bfs::{bfs_automata, run_bfs, verify_bfs, BfsNode, BfsTree};
pub use codec::{codec_wrap, CodecSpec, DeclaredBudget};
pub use error::{Error, Result};
pub use experiment::{emit_report, generate_graph, run_experiment, ExperimentConfig, OutputFormat};
pub use fus::{fus_wrap, FusNode, FusProtocol, FusVariant};
pub use graph::{generate, Graph, GraphKind, NodeId};
pub use netsim::{AdversarySpec, Budget, Metrics, Simulation};
pub use pi::{generate_pi, reference_transcript, PiDescriptor, PiKind};
pub use pipeline::{pipeline_spanner, pipeline_tree, resilience_audit, PipelineKind, PipelineReport};
pub use spanner::{greedy_spanner, verify_spanner, SpannerResult};
pub use sync::{run_synchronized, sync_round};
