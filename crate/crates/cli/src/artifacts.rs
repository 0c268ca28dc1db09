//! On-disk layout of an experiment and the manifests written next to every
//! artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nile::corpus::{read_jsonl_records, Dataset, Split};
use nile::generator::{ExplanationTriple, TripleRecord};
use nile::seed::sha256_hex;
use nile::textmodel::{write_file, Vocabulary};
use nile::{Label, NileError, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Where the triples a processor consumes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TripleSource {
    /// Decoded by the trained label-specific generators.
    Generated,
    /// Produced by the synthetic world's templates.
    Oracle,
}

impl TripleSource {
    pub fn name(self) -> &'static str {
        match self {
            TripleSource::Generated => "generated",
            TripleSource::Oracle => "oracle",
        }
    }
}

pub fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
        Split::Ood => "ood",
    }
}

/// Paths of every artifact, rooted at the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
    corpus: PathBuf,
    checkpoints: PathBuf,
    reports: PathBuf,
}

impl Layout {
    pub fn new(root: PathBuf, config: &ExperimentConfig) -> Self {
        Layout {
            corpus: root.join(&config.paths.corpus_dir),
            checkpoints: root.join(&config.paths.checkpoint_dir),
            reports: root.join(&config.paths.report_dir),
            root,
        }
    }

    pub fn dataset(&self, s: Split) -> PathBuf {
        self.corpus.join(format!("{}.jsonl", split_name(s)))
    }

    pub fn vocab(&self) -> PathBuf {
        self.corpus.join("vocab.json")
    }

    pub fn triples(&self, source: TripleSource, s: Split) -> PathBuf {
        self.corpus
            .join(format!("triples-{}-{}.jsonl", source.name(), split_name(s)))
    }

    pub fn generator(&self, l: Label) -> PathBuf {
        self.checkpoints
            .join(format!("generator-{}.json", l.name()))
    }

    pub fn processor(&self, model: &str) -> PathBuf {
        self.checkpoints.join(format!("processor-{model}.json"))
    }

    pub fn posthoc(&self) -> PathBuf {
        self.checkpoints.join("posthoc.json")
    }

    pub fn etpa(&self) -> (PathBuf, PathBuf) {
        (
            self.checkpoints.join("etpa-generator.json"),
            self.checkpoints.join("etpa-classifier.json"),
        )
    }

    pub fn predictions(&self, model: &str, tag: &str) -> PathBuf {
        self.reports
            .join(format!("predictions-{model}-{tag}.jsonl"))
    }

    pub fn eval_report(&self, model: &str) -> PathBuf {
        self.reports.join(format!("eval-{model}.json"))
    }

    pub fn probe_report(&self, model: &str, condition: &str) -> PathBuf {
        self.reports
            .join(format!("probe-{model}-{condition}.jsonl"))
    }

    pub fn transfer_report(&self, model: &str) -> PathBuf {
        self.reports.join(format!("transfer-{model}.json"))
    }

    pub fn summary(&self) -> PathBuf {
        self.reports.join("summary.txt")
    }

    pub fn reports_dir(&self) -> &Path {
        &self.reports
    }

    /// Path relative to the root, with `/` separators, for manifests.
    pub fn relative(&self, p: &Path) -> String {
        let rel = p.strip_prefix(&self.root).unwrap_or(p);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

/// Provenance of one artifact: the command and resolved config that made
/// it and hashes of everything it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub sha256: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
}

fn file_sha(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| NileError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Tracks the inputs a command reads and stamps each output it writes.
pub struct Run<'a> {
    pub layout: &'a Layout,
    pub config: &'a ExperimentConfig,
    command: &'static str,
    config_hash: String,
    inputs: BTreeMap<String, String>,
    pub written: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    pub fn new(layout: &'a Layout, config: &'a ExperimentConfig, command: &'static str) -> Self {
        Run {
            layout,
            config,
            command,
            config_hash: config.hash(),
            inputs: BTreeMap::new(),
            written: Vec::new(),
        }
    }

    /// Records `path` as an input; fails with the path if it is missing.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha = file_sha(path)?;
        self.inputs.insert(self.layout.relative(path), sha);
        Ok(())
    }

    /// Stamps an artifact that has already been written.
    pub fn output(&mut self, path: &Path) -> Result<()> {
        let m = Manifest {
            artifact: self.layout.relative(path),
            sha256: file_sha(path)?,
            command: self.command.to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            inputs: self.inputs.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&m).expect("manifest serializes");
        bytes.push(b'\n');
        write_file(&manifest_path(path), &bytes)?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_file(path, bytes)?;
        self.output(path)
    }

    pub fn read_dataset(&mut self, s: Split) -> Result<Dataset> {
        let path = self.layout.dataset(s);
        self.input(&path)?;
        Dataset::read_jsonl(&path, s)
    }

    pub fn read_vocab(&mut self) -> Result<Vocabulary> {
        let path = self.layout.vocab();
        self.input(&path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| NileError::io(&path, e))?;
        let tokens: Vec<String> = serde_json::from_str(&text).map_err(|e| NileError::Parse {
            path: path.display().to_string(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        Vocabulary::from_tokens(tokens).ok_or_else(|| {
            NileError::Data(format!(
                "{}: vocabulary lacks the special tokens",
                path.display()
            ))
        })
    }

    /// Triples for `dataset`, checked to line up with it id by id.
    pub fn read_triples(
        &mut self,
        source: TripleSource,
        dataset: &Dataset,
    ) -> Result<Vec<ExplanationTriple>> {
        let path = self.layout.triples(source, dataset.split);
        self.input(&path)?;
        let recs: Vec<TripleRecord> = read_jsonl_records(&path)?;
        if recs.len() != dataset.len() {
            return Err(NileError::Data(format!(
                "{}: {} triples for {} instances",
                path.display(),
                recs.len(),
                dataset.len()
            )));
        }
        recs.iter()
            .zip(dataset.iter())
            .map(|(r, inst)| {
                if r.id != inst.id {
                    return Err(NileError::Data(format!(
                        "{}: triple for {} where {} was expected",
                        path.display(),
                        r.id,
                        inst.id
                    )));
                }
                Ok(r.triple())
            })
            .collect()
    }
}

pub fn jsonl_bytes<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn triple_bytes(dataset: &Dataset, triples: &[ExplanationTriple]) -> Vec<u8> {
    let recs: Vec<TripleRecord> = dataset
        .iter()
        .zip(triples)
        .map(|(i, t)| TripleRecord::new(&i.id, t))
        .collect();
    jsonl_bytes(&recs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_artifact() {
        assert_eq!(
            manifest_path(Path::new("out/checkpoints/posthoc.json")),
            PathBuf::from("out/checkpoints/posthoc.json.manifest.json")
        );
    }

    #[test]
    fn relative_paths_ignore_the_root() {
        let c = ExperimentConfig::default();
        let a = Layout::new(PathBuf::from("/tmp/a"), &c);
        let b = Layout::new(PathBuf::from("/var/b"), &c);
        assert_eq!(
            a.relative(&a.processor("independent-nile-generated")),
            b.relative(&b.processor("independent-nile-generated"))
        );
        assert_eq!(a.relative(&a.vocab()), "corpus/vocab.json");
    }
}
