//! NLI instances and datasets: the synthetic world generator, the e-SNLI
//! reader, and the non-informative-explanation filter.
//!
//! Corpus files are JSON Lines, one instance per line, with fields in the
//! order `id, premise, hypothesis, label, explanation` (`explanation` is
//! `null` when absent).

mod esnli;
mod filter;
mod world;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use esnli::{load_esnli, load_esnli_with_delimiter, write_esnli};
pub use filter::{filter_noninformative, filter_split, is_noninformative};
pub use world::{
    generate_synthetic_corpus, Facts, Lexicon, SyntheticCorpus, World, WorldConfig,
    MAX_TEMPLATES_PER_LABEL,
};

use crate::error::{NileError, Result};
use crate::textmodel::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[serde(rename = "entailment")]
    Entail,
    #[serde(rename = "contradiction")]
    Contradict,
    #[serde(rename = "neutral")]
    Neutral,
}

impl Label {
    /// Fixed order; also the tie-break order.
    pub const ALL: [Label; 3] = [Label::Entail, Label::Contradict, Label::Neutral];

    pub fn index(self) -> usize {
        match self {
            Label::Entail => 0,
            Label::Contradict => 1,
            Label::Neutral => 2,
        }
    }

    pub fn from_index(i: usize) -> Label {
        Label::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Entail => "entailment",
            Label::Contradict => "contradiction",
            Label::Neutral => "neutral",
        }
    }

    /// Short form used in file names and model tags.
    pub fn short(self) -> &'static str {
        match self {
            Label::Entail => "entail",
            Label::Contradict => "contradict",
            Label::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = NileError;

    fn from_str(s: &str) -> Result<Label> {
        match s.trim().to_lowercase().as_str() {
            "entailment" | "entail" => Ok(Label::Entail),
            "contradiction" | "contradict" => Ok(Label::Contradict),
            "neutral" => Ok(Label::Neutral),
            other => Err(NileError::Data(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Ood,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Dev, Split::Test, Split::Ood];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Ood => "ood",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = NileError;

    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "ood" | "ood-dev" | "ooddev" => Ok(Split::Ood),
            other => Err(NileError::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
    #[serde(rename = "explanation")]
    pub gold_explanation: Option<String>,
}

impl Instance {
    fn validate(&self) -> Result<()> {
        if tokenize(&self.premise).is_empty() || tokenize(&self.hypothesis).is_empty() {
            return Err(NileError::Data(format!(
                "instance {} has an empty premise or hypothesis",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub split: Split,
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Checks the id-uniqueness and non-empty-text invariants.
    pub fn new(split: Split, instances: Vec<Instance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for inst in &instances {
            inst.validate()?;
            if !seen.insert(inst.id.as_str()) {
                return Err(NileError::Data(format!(
                    "duplicate instance id {}",
                    inst.id
                )));
            }
        }
        Ok(Dataset { split, instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instance> {
        self.instances.iter()
    }

    pub fn label_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for i in &self.instances {
            c[i.label.index()] += 1;
        }
        c
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for inst in &self.instances {
            serde_json::to_writer(&mut out, inst).expect("instance serializes");
            out.push(b'\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        crate::textmodel::write_file(path, &self.to_jsonl())
    }

    pub fn read_jsonl(path: &Path, split: Split) -> Result<Self> {
        let instances = read_jsonl_records(path)?;
        Dataset::new(split, instances)
    }
}

/// Reads one JSON record per non-blank line, reporting the line number of the
/// first record that fails to parse.
pub fn read_jsonl_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| NileError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| NileError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| NileError::Parse {
            path: path.display().to_string(),
            line: i as u64 + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    crate::textmodel::write_file(path, &out)
}
