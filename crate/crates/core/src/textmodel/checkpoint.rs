use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Params, ScorerParams, Vocabulary};
use crate::error::{NileError, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk model: one JSON document holding the vocabulary, dimensions and
/// every parameter array by name. Numbers are written as shortest
/// round-trip decimal text, so the encoding is independent of byte order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Model family, e.g. "generator" or "processor".
    pub kind: String,
    /// Family-specific metadata (label tag, embedded config, ...).
    pub tag: serde_json::Value,
    pub vocab: Vocabulary,
    pub dims: BTreeMap<String, usize>,
    pub arrays: Vec<NamedArray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Checkpoint {
    pub fn new<P: Params>(
        kind: &str,
        tag: serde_json::Value,
        vocab: &Vocabulary,
        dims: BTreeMap<String, usize>,
        params: &P,
    ) -> Self {
        let arrays = params
            .arrays()
            .into_iter()
            .map(|(name, shape, data)| NamedArray {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: kind.to_string(),
            tag,
            vocab: vocab.clone(),
            dims,
            arrays,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = serde_json::to_vec(self).expect("checkpoint serializes");
        s.push(b'\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| NileError::io(path, e))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| NileError::Parse {
            path: path.display().to_string(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(NileError::Data(format!(
                "{}: unsupported checkpoint format version {}",
                path.display(),
                ck.format_version
            )));
        }
        if Vocabulary::from_tokens(ck.vocab.tokens().to_vec()).is_none() {
            return Err(NileError::Data(format!(
                "{}: vocabulary does not start with the reserved tokens",
                path.display()
            )));
        }
        Ok(ck)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(NileError::Data(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )))
        }
    }

    pub fn dim(&self, name: &str) -> Result<usize> {
        self.dims
            .get(name)
            .copied()
            .ok_or_else(|| NileError::Data(format!("checkpoint lacks dimension {name}")))
    }

    /// Copies the stored arrays into `params`, checking names and shapes.
    pub fn restore_into<P: Params>(&self, params: &mut P) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> = params
            .arrays()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != self.arrays.len() {
            return Err(NileError::Data(format!(
                "checkpoint has {} arrays, model expects {}",
                self.arrays.len(),
                expected.len()
            )));
        }
        for ((name, shape), stored) in expected.iter().zip(&self.arrays) {
            if *name != stored.name || *shape != stored.shape {
                return Err(NileError::Data(format!(
                    "array mismatch: expected {name}{shape:?}, found {}{:?}",
                    stored.name, stored.shape
                )));
            }
            if stored.data.len() != shape.iter().product::<usize>() {
                return Err(NileError::Data(format!("array {name} has wrong length")));
            }
        }
        for (dst, stored) in params.arrays_mut().into_iter().zip(&self.arrays) {
            dst.copy_from_slice(&stored.data);
        }
        Ok(())
    }

    /// Rebuilds a [`ScorerParams`] whose heads are those stored under
    /// `head.<name>`.
    pub fn scorer_params(&self) -> Result<ScorerParams> {
        let d = self.dim("d")?;
        let vocab_size = self.vocab.len();
        let heads: Vec<&str> = self
            .arrays
            .iter()
            .filter_map(|a| a.name.strip_prefix("head."))
            .collect();
        let mut p = ScorerParams {
            vocab_size,
            d,
            emb: vec![0.0; vocab_size * d],
            proj: vec![0.0; d * d],
            heads: heads
                .iter()
                .map(|h| (h.to_string(), vec![0.0; d]))
                .collect(),
        };
        self.restore_into(&mut p)?;
        Ok(p)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| NileError::io(dir, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| NileError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use crate::textmodel::InitConfig;

    #[test]
    fn round_trip_is_bit_exact() {
        let vocab = Vocabulary::build(["a b c"]);
        let p = ScorerParams::new(
            vocab.len(),
            5,
            &["ind"],
            &InitConfig::default(),
            &mut rng(9),
        );
        let dims = BTreeMap::from([("d".to_string(), 5)]);
        let ck = Checkpoint::new("processor", serde_json::json!({"x": 1}), &vocab, dims, &p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.scorer_params().unwrap(), p);
        assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = Checkpoint::load(Path::new("/nonexistent/ck.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/ck.json"));
    }
}
