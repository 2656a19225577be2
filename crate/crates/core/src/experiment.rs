//! Config-driven experiments and report emission.
//!
//! A config is a TOML file:
//!
//! ```toml
//! root = 0
//! seeds = [1, 2, 3]
//! format = "csv"             # or "json"
//!
//! [graph]                    # or: file = "graph.txt"
//! kind = "random"            # path | cycle | star | complete | grid | random
//! n = 10
//! p = 0.5                    # random only
//! seed = 42
//!
//! [pipeline]
//! kind = "spanner"           # tree | spanner
//! k = 2
//!
//! [codec]
//! kind = "repetition"        # identity | repetition | rewind
//! r = 3
//!
//! [adversary]
//! delivery = "random"        # fifo | lifo | random | { targeted = "highest-source-first" }
//! budget = "1/20"
//! corruption = "flip-all-bits"
//! target = "all"
//!
//! [pi]                       # or: file = "pi.txt"
//! kind = "all-pairs"         # unicast | all-to-one | all-pairs
//! bits = 8
//! seed = 0
//!
//! [sweep]                    # optional: one run per n and seed
//! n = [4, 6, 8]
//! ```
//!
//! Relative file paths are resolved against the config file's directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::CodecSpec;
use crate::error::{Error, Result};
use crate::graph::{generate, Graph, GraphKind, NodeId};
use crate::netsim::AdversarySpec;
use crate::pi::{generate_pi, PiDescriptor, PiKind};
use crate::pipeline::{run_pipeline, PipelineKind, PipelineReport};

/// Largest generated graph.
pub const MAX_NODES: usize = 64;
/// Largest generated per-message payload.
pub const MAX_PI_BITS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Path,
    Cycle,
    Star,
    Complete,
    Grid,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    File {
        file: PathBuf,
    },
    Generator {
        kind: GeneratorKind,
        n: usize,
        #[serde(default)]
        p: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PiSource {
    File {
        file: PathBuf,
    },
    Generator {
        kind: PiKind,
        bits: usize,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    #[serde(default)]
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    #[serde(default)]
    pub root: NodeId,
    pub pipeline: PipelineKind,
    #[serde(default = "identity")]
    pub codec: CodecSpec,
    #[serde(default = "AdversarySpec::none")]
    pub adversary: AdversarySpec,
    pub pi: PiSource,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub sweep: Sweep,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn identity() -> CodecSpec {
    CodecSpec::Identity
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// [`generate`] with range checks on `n` and `p`.
pub fn generate_graph(kind: GeneratorKind, n: usize, p: Option<f64>, seed: u64) -> Result<Graph> {
    if !(1..=MAX_NODES).contains(&n) {
        return Err(Error::config("graph.n", format!("{n} not in 1..={MAX_NODES}")));
    }
    let kind = match kind {
        GeneratorKind::Path => GraphKind::Path,
        GeneratorKind::Cycle => GraphKind::Cycle,
        GeneratorKind::Star => GraphKind::Star,
        GeneratorKind::Complete => GraphKind::Complete,
        GeneratorKind::Grid => GraphKind::Grid,
        GeneratorKind::Random => {
            let p = p.ok_or_else(|| Error::config("graph.p", "required for random graphs"))?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config("graph.p", format!("{p} not in (0, 1]")));
            }
            GraphKind::Random(p)
        }
    };
    generate(kind, n, seed)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks everything that does not need a built graph.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if let PipelineKind::Spanner { k: 0 } = self.pipeline {
            return Err(Error::config("pipeline.k", "must be at least 1"));
        }
        self.codec
            .validate()
            .map_err(|e| Error::config("codec", e.to_string()))?;
        if let PiSource::Generator { bits, .. } = self.pi {
            if !(1..=MAX_PI_BITS).contains(&bits) {
                return Err(Error::config("pi.bits", format!("{bits} not in 1..={MAX_PI_BITS}")));
            }
        }
        match &self.graph {
            GraphSource::File { file } => {
                if !self.resolve(file).is_file() {
                    return Err(Error::config("graph.file", format!("{} does not exist", file.display())));
                }
                if !self.sweep.n.is_empty() {
                    return Err(Error::config("sweep.n", "cannot sweep n over a graph file"));
                }
            }
            GraphSource::Generator { n, .. } => {
                let field = if self.sweep.n.is_empty() { "graph.n" } else { "sweep.n" };
                let sizes = if self.sweep.n.is_empty() { std::slice::from_ref(n) } else { &self.sweep.n[..] };
                if let Some(x) = sizes.iter().find(|x| !(1..=MAX_NODES).contains(*x)) {
                    return Err(Error::config(field, format!("{x} not in 1..={MAX_NODES}")));
                }
            }
        }
        if let PiSource::File { file } = &self.pi {
            if !self.resolve(file).is_file() {
                return Err(Error::config("pi.file", format!("{} does not exist", file.display())));
            }
        }
        Ok(())
    }

    /// The graph for node count `n` (ignored for graph files).
    pub fn graph_for(&self, n: Option<usize>) -> Result<Graph> {
        match &self.graph {
            GraphSource::File { file } => Graph::parse(&std::fs::read_to_string(self.resolve(file))?),
            GraphSource::Generator { kind, n: base, p, seed } => generate_graph(*kind, n.unwrap_or(*base), *p, *seed),
        }
    }

    pub fn pi_for(&self, graph: &Graph) -> Result<PiDescriptor> {
        let pi = match &self.pi {
            PiSource::File { file } => PiDescriptor::parse(&std::fs::read_to_string(self.resolve(file))?)?,
            PiSource::Generator { kind, bits, seed } => generate_pi(*kind, graph, self.root, *bits, *seed)?,
        };
        if pi.n() != graph.n() {
            return Err(Error::config(
                "pi",
                format!("protocol has {} nodes but the graph has {}", pi.n(), graph.n()),
            ));
        }
        Ok(pi)
    }

    /// Node counts to run: the sweep list, or just the configured graph.
    pub fn sizes(&self) -> Vec<Option<usize>> {
        if self.sweep.n.is_empty() {
            vec![None]
        } else {
            self.sweep.n.iter().copied().map(Some).collect()
        }
    }
}

/// One report per (size, seed), in config order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PipelineReport>> {
    config.validate()?;
    let mut reports = Vec::new();
    for n in config.sizes() {
        let graph = config.graph_for(n)?;
        if config.root >= graph.n() {
            return Err(Error::config("root", format!("{} out of range for {} nodes", config.root, graph.n())));
        }
        let pi = config.pi_for(&graph)?;
        for &seed in &config.seeds {
            let run = run_pipeline(&pi, &graph, config.root, config.pipeline, config.codec, &config.adversary, seed)?;
            reports.push(run.report);
        }
    }
    Ok(reports)
}

/// Serializes `reports` to `out`.
pub fn write_report(reports: &[PipelineReport], format: OutputFormat, out: impl Write) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::EmptyReport);
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in reports {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, reports)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Writes `reports` to the file `destination`.
pub fn emit_report(reports: &[PipelineReport], format: OutputFormat, destination: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::EmptyReport);
    }
    let file = std::fs::File::create(destination)?;
    write_report(reports, format, std::io::BufWriter::new(file))
}

/// Parses reports written by [`write_report`].
pub fn read_report(text: &str, format: OutputFormat) -> Result<Vec<PipelineReport>> {
    match format {
        OutputFormat::Csv => csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .map(|r| r.map_err(Error::from))
            .collect(),
        OutputFormat::Json => Ok(serde_json::from_str(text)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
        root = 0
        seeds = [1, 2]

        [graph]
        kind = "path"
        n = 4

        [pipeline]
        kind = "tree"

        [pi]
        kind = "unicast"
        bits = 4
    "#;

    #[test]
    fn parses_and_runs() {
        let config = ExperimentConfig::from_toml(BASIC, ".").unwrap();
        assert_eq!(config.codec, CodecSpec::Identity);
        assert_eq!(config.adversary, AdversarySpec::none());
        let reports = run_experiment(&config).unwrap();
        assert_eq!(reports.len(), 2);
        assert!(reports.iter().all(|r| r.success));
        assert_eq!(reports[1].seed, 2);
    }

    #[test]
    fn full_schema() {
        let text = r#"
            root = 1
            format = "json"
            [graph]
            kind = "random"
            n = 8
            p = 0.5
            seed = 3
            [pipeline]
            kind = "spanner"
            k = 2
            [codec]
            kind = "rewind"
            hash_bits = 8
            window = 4
            max_replays = 2
            [adversary]
            delivery = { targeted = "highest-source-first" }
            budget = "1/50"
            corruption = "random-bytes"
            target = { not-stage = 0 }
            [pi]
            kind = "all-pairs"
            bits = 2
            [sweep]
            n = [5, 6]
        "#;
        let config = ExperimentConfig::from_toml(text, ".").unwrap();
        assert_eq!(config.format, OutputFormat::Json);
        assert_eq!(config.sizes(), vec![Some(5), Some(6)]);
        assert_eq!(config.pipeline, PipelineKind::Spanner { k: 2 });
    }

    #[test]
    fn field_level_errors() {
        let bad_bits = BASIC.replace("bits = 4", "bits = 0");
        let err = ExperimentConfig::from_toml(&bad_bits, ".").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "pi.bits"), "{err}");
        let even = format!("{BASIC}\n[codec]\nkind = \"repetition\"\nr = 4\n");
        let err = ExperimentConfig::from_toml(&even, ".").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "codec"), "{err}");
        let missing = BASIC.replace("kind = \"path\"\n        n = 4", "file = \"no/such/graph.txt\"");
        let err = ExperimentConfig::from_toml(&missing, ".").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "graph.file"), "{err}");
        let unknown = format!("bogus = 1\n{BASIC}");
        assert!(ExperimentConfig::from_toml(&unknown, ".").is_err());
    }

    #[test]
    fn report_formats() {
        let config = ExperimentConfig::from_toml(BASIC, ".").unwrap();
        let reports = run_experiment(&config).unwrap();
        let mut csv_out = Vec::new();
        write_report(&reports[..1], OutputFormat::Csv, &mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(
            "n,m,s,t,cc_pi_bits,cc_sim_bits,overhead,messages_bfs,messages_spanner_phase,\
             messages_main_phase,corruptions_injected,success,seed\n"
        ));
        assert!(matches!(write_report(&[], OutputFormat::Csv, Vec::new()), Err(Error::EmptyReport)));
    }

    #[test]
    fn generator_ranges() {
        assert!(generate_graph(GeneratorKind::Random, 5, None, 0).is_err());
        assert!(generate_graph(GeneratorKind::Random, 5, Some(0.0), 0).is_err());
        assert!(generate_graph(GeneratorKind::Path, 0, None, 0).is_err());
        assert!(generate_graph(GeneratorKind::Path, MAX_NODES + 1, None, 0).is_err());
        let g = generate_graph(GeneratorKind::Path, 3, None, 9).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }
}
