//! Reader for e-SNLI style delimited files (columns `gold_label`,
//! `Sentence1`, `Sentence2`, `Explanation_1`; an optional `pairID` column
//! supplies ids). Quoting, embedded delimiters and embedded newlines are
//! handled by the `csv` crate.

use std::path::Path;

use super::{Dataset, Instance, Label, Split};
use crate::error::{NileError, Result};

const REQUIRED: [&str; 4] = ["gold_label", "Sentence1", "Sentence2", "Explanation_1"];

/// Loads a comma-delimited file. Returns the dataset and the number of rows
/// skipped because their gold label is not one of the three classes.
pub fn load_esnli(path: &Path, split: Split) -> Result<(Dataset, usize)> {
    load_esnli_with_delimiter(path, split, b',')
}

pub fn load_esnli_with_delimiter(
    path: &Path,
    split: Split,
    delimiter: u8,
) -> Result<(Dataset, usize)> {
    let shown = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| csv_error(&shown, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(&shown, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name)
            .ok_or_else(|| NileError::Config(format!("{shown}: missing required column {name}")))?;
    }
    let id_col = col("pairID");

    let mut instances = Vec::new();
    let mut skipped = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(&shown, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let label: Label = match field(idx[0]).parse() {
            Ok(l) => l,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let explanation = field(idx[3]);
        let id = match id_col {
            Some(c) if !field(c).is_empty() => field(c).to_string(),
            _ => format!("{split}-{row:06}"),
        };
        let inst = Instance {
            id,
            premise: field(idx[1]).to_string(),
            hypothesis: field(idx[2]).to_string(),
            label,
            gold_explanation: (!explanation.is_empty()).then(|| explanation.to_string()),
        };
        inst.validate().map_err(|e| NileError::Parse {
            path: shown.clone(),
            line,
            msg: e.to_string(),
        })?;
        instances.push(inst);
    }
    Ok((Dataset::new(split, instances)?, skipped))
}

/// Writes a dataset in the same column layout (`pairID` first).
pub fn write_esnli(d: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "pairID",
        "gold_label",
        "Sentence1",
        "Sentence2",
        "Explanation_1",
    ];
    w.write_record(header)
        .map_err(|e| csv_error("<buffer>", e))?;
    for inst in d.iter() {
        w.write_record([
            inst.id.as_str(),
            inst.label.name(),
            &inst.premise,
            &inst.hypothesis,
            inst.gold_explanation.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_error("<buffer>", e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| NileError::Data(format!("csv flush failed: {e}")))?;
    crate::textmodel::write_file(path, &bytes)
}

fn csv_error(path: &str, e: csv::Error) -> NileError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => NileError::io(path, io),
        kind => NileError::Parse {
            path: path.to_string(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("esnli.csv");
        std::fs::write(&p, content).unwrap();
        (dir, p)
    }

    #[test]
    fn reads_well_formed_rows() {
        let (_d, p) = write(
            "gold_label,Sentence1,Sentence2,Explanation_1\n\
             entailment,a dog runs,an animal runs,a dog is an animal\n\
             contradiction,a man sleeps,a man runs,cannot sleep and run\n\
             neutral,a girl sits,a girl sits outside,sitting does not imply outside\n\
             entailment,two kids play,kids play,two kids are kids\n",
        );
        let (d, skipped) = load_esnli(&p, Split::Train).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(skipped, 0);
        assert_eq!(d.instances[1].label, Label::Contradict);
        assert_eq!(d.instances[0].id, "train-000000");
    }

    #[test]
    fn unlabeled_rows_are_skipped_and_counted() {
        let (_d, p) = write(
            "gold_label,Sentence1,Sentence2,Explanation_1\n\
             entailment,a,b,c\n-,a,b,c\nneutral,a,b,c\ncontradiction,a,b,c\n",
        );
        let (d, skipped) = load_esnli(&p, Split::Dev).unwrap();
        assert_eq!((d.len(), skipped), (3, 1));
    }

    #[test]
    fn quoted_fields_keep_commas_and_newlines() {
        let (_d, p) = write(
            "gold_label,Sentence1,Sentence2,Explanation_1\n\
             entailment,\"a dog, wet,\nruns\",\"an animal \"\"runs\"\"\",x\n",
        );
        let (d, _) = load_esnli(&p, Split::Train).unwrap();
        assert_eq!(d.instances[0].premise, "a dog, wet,\nruns");
        assert_eq!(d.instances[0].hypothesis, "an animal \"runs\"");
    }

    #[test]
    fn missing_column_is_a_config_error() {
        let (_d, p) = write("gold_label,Sentence1,Explanation_1\nentailment,a,b\n");
        assert!(matches!(
            load_esnli(&p, Split::Train),
            Err(NileError::Config(m)) if m.contains("Sentence2")
        ));
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let (_d, p) = write(
            "gold_label,Sentence1,Sentence2,Explanation_1\n\
             entailment,a,b,c\nneutral,a,b\n",
        );
        match load_esnli(&p, Split::Train) {
            Err(NileError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn other_delimiters() {
        let (_d, p) =
            write("gold_label\tSentence1\tSentence2\tExplanation_1\nneutral\ta, b\tc\td\n");
        let (d, _) = load_esnli_with_delimiter(&p, Split::Train, b'\t').unwrap();
        assert_eq!(d.instances[0].premise, "a, b");
    }
}
