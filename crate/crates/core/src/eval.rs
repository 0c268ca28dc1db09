//! Label accuracy, explanation-correctness bookkeeping from binary
//! annotations, and out-of-domain transfer evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl_records, write_jsonl_records, Dataset, Label};
use crate::error::{NileError, Result};
use crate::generator::{generate_triple, ExplanationTriple, GeneratorModel};
use crate::processor::{PredictionRecord, ProcessorModel};
use crate::textmodel::Params;

/// Predicted labels keyed by instance id; duplicate ids are an error.
fn index_predictions(predictions: &[PredictionRecord]) -> Result<HashMap<&str, Label>> {
    let mut by_id = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.id.as_str(), p.label).is_some() {
            return Err(NileError::Data(format!(
                "duplicate prediction for {}",
                p.id
            )));
        }
    }
    Ok(by_id)
}

fn predicted(by_id: &HashMap<&str, Label>, id: &str) -> Result<Label> {
    by_id
        .get(id)
        .copied()
        .ok_or_else(|| NileError::Data(format!("no prediction for instance {id}")))
}

/// Fraction of instances whose predicted label equals the gold label.
pub fn label_accuracy(predictions: &[PredictionRecord], dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(NileError::Data("label accuracy of an empty dataset".into()));
    }
    let by_id = index_predictions(predictions)?;
    let mut hits = 0usize;
    for inst in dataset.iter() {
        hits += (predicted(&by_id, &inst.id)? == inst.label) as usize;
    }
    Ok(hits as f64 / dataset.len() as f64)
}

/// One binary judgement of one annotator on one instance's explanation.
/// Serialized with `correct` as 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub instance_id: String,
    pub annotator_id: String,
    #[serde(with = "bool_as_int")]
    pub correct: bool,
}

mod bool_as_int {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*b as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            x => Err(D::Error::custom(format!("expected 0 or 1, got {x}"))),
        }
    }
}

fn check_unique(annotations: &[AnnotationRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for a in annotations {
        if !seen.insert((a.instance_id.as_str(), a.annotator_id.as_str())) {
            return Err(NileError::Data(format!(
                "annotator {} judged instance {} twice",
                a.annotator_id, a.instance_id
            )));
        }
    }
    Ok(())
}

/// Reads an annotation file, rejecting repeated (instance, annotator) pairs.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let recs: Vec<AnnotationRecord> = read_jsonl_records(path)?;
    check_unique(&recs)?;
    Ok(recs)
}

pub fn write_annotations(annotations: &[AnnotationRecord], path: &Path) -> Result<()> {
    check_unique(annotations)?;
    write_jsonl_records(path, annotations)
}

/// Explanation-correctness counts over the first `n_eval` instances.
/// `a` counts correct labels; `b` is the mean over annotators of how many of
/// those correctly-labelled instances they judged to have a correct
/// explanation; `c` counts the ones every annotator judged correct. Ratios
/// are percentages of `a` and are `None` when `a` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMetrics {
    pub n_eval: usize,
    pub annotators: usize,
    pub a: usize,
    pub b: f64,
    pub c: usize,
    pub b_over_a: Option<f64>,
    pub c_over_a: Option<f64>,
}

/// `100 · num / a`, undefined when `a` is zero.
pub fn percent_of(num: f64, a: usize) -> Option<f64> {
    (a > 0).then(|| 100.0 * num / a as f64)
}

impl ExplanationMetrics {
    /// Assembles the metrics from already-aggregated counts.
    pub fn from_counts(n_eval: usize, annotators: usize, a: usize, b: f64, c: usize) -> Self {
        ExplanationMetrics {
            n_eval,
            annotators,
            a,
            b,
            c,
            b_over_a: percent_of(b, a),
            c_over_a: percent_of(c as f64, a),
        }
    }
}

/// Aggregates binary annotations over the first `n_eval` instances of
/// `dataset`. Every annotator that appears must have judged every one of
/// those instances; judgements on other instances are ignored.
pub fn explanation_metrics(
    predictions: &[PredictionRecord],
    dataset: &Dataset,
    annotations: &[AnnotationRecord],
    n_eval: usize,
) -> Result<ExplanationMetrics> {
    if n_eval > dataset.len() {
        return Err(NileError::Config(format!(
            "n_eval {n_eval} exceeds the {} evaluated instances",
            dataset.len()
        )));
    }
    check_unique(annotations)?;
    let by_id = index_predictions(predictions)?;
    let window = &dataset.instances[..n_eval];
    let in_window: BTreeSet<&str> = window.iter().map(|i| i.id.as_str()).collect();

    let mut judged: BTreeMap<&str, HashMap<&str, bool>> = BTreeMap::new();
    for r in annotations
        .iter()
        .filter(|r| in_window.contains(r.instance_id.as_str()))
    {
        judged
            .entry(r.annotator_id.as_str())
            .or_default()
            .insert(r.instance_id.as_str(), r.correct);
    }
    if n_eval > 0 && judged.is_empty() {
        return Err(NileError::Data(
            "no annotations cover the evaluated instances".into(),
        ));
    }
    for (annotator, marks) in &judged {
        if let Some(missing) = window.iter().find(|i| !marks.contains_key(i.id.as_str())) {
            return Err(NileError::Data(format!(
                "annotator {annotator} has no judgement for instance {}",
                missing.id
            )));
        }
    }

    let mut a = 0usize;
    let mut c = 0usize;
    let mut per_annotator = vec![0usize; judged.len()];
    for inst in window {
        if predicted(&by_id, &inst.id)? != inst.label {
            continue;
        }
        a += 1;
        let mut all = true;
        for (k, marks) in judged.values().enumerate() {
            let ok = marks[inst.id.as_str()];
            per_annotator[k] += ok as usize;
            all &= ok;
        }
        c += all as usize;
    }
    let b = if judged.is_empty() {
        0.0
    } else {
        per_annotator.iter().sum::<usize>() as f64 / judged.len() as f64
    };
    Ok(ExplanationMetrics::from_counts(
        n_eval,
        judged.len(),
        a,
        b,
        c,
    ))
}

/// One row of the results table: label accuracies and, when annotations
/// exist, explanation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub explanations: Option<ExplanationMetrics>,
}

/// Table with columns model, Dev, Test, A, B, B/A, C, C/A. Accuracies and
/// ratios are percentages with two decimals; missing values print `-`, an
/// undefined ratio prints `undef`.
pub fn format_eval_table(rows: &[EvalRow]) -> String {
    let mut s = format!(
        "{:<30} {:>7} {:>7} {:>5} {:>7} {:>7} {:>5} {:>7}\n",
        "model", "Dev", "Test", "A", "B", "B/A", "C", "C/A"
    );
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
    let ratio = |x: Option<f64>| x.map_or("undef".to_string(), |v| format!("{v:.2}"));
    for r in rows {
        let (a, b, ba, c, ca) = match &r.explanations {
            Some(m) => (
                m.a.to_string(),
                format!("{:.1}", m.b),
                ratio(m.b_over_a),
                m.c.to_string(),
                ratio(m.c_over_a),
            ),
            None => Default::default(),
        };
        let dash = |x: String| if x.is_empty() { "-".to_string() } else { x };
        let _ = writeln!(
            s,
            "{:<30} {:>7} {:>7} {:>5} {:>7} {:>7} {:>5} {:>7}",
            r.model,
            pct(r.dev_accuracy),
            pct(r.test_accuracy),
            dash(a),
            dash(b),
            dash(ba),
            dash(c),
            dash(ca)
        );
    }
    s
}

/// Scores every instance with its triple and records the prediction and the
/// explanation for the predicted label.
pub fn predict_dataset(
    model: &ProcessorModel,
    dataset: &Dataset,
    triples: &[ExplanationTriple],
) -> Result<Vec<PredictionRecord>> {
    if dataset.len() != triples.len() {
        return Err(NileError::Data(format!(
            "{} triples for {} instances",
            triples.len(),
            dataset.len()
        )));
    }
    dataset
        .iter()
        .zip(triples)
        .map(|(inst, t)| {
            let (label, scores) = model.predict(inst, t)?;
            Ok(PredictionRecord::new(
                &inst.id,
                label,
                &scores,
                t.get(label),
            ))
        })
        .collect()
}

/// Outcome of running the frozen pipeline on a shifted split.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub accuracy: f64,
    pub triples: Vec<ExplanationTriple>,
    pub predictions: Vec<PredictionRecord>,
    /// Parameter checksums of the processor and the three generators,
    /// before and after the run.
    pub checksums_before: [String; 4],
    pub checksums_after: [String; 4],
}

fn checksums(model: &ProcessorModel, generators: [&GeneratorModel; 3]) -> [String; 4] {
    [
        model.params.checksum(),
        generators[0].params.checksum(),
        generators[1].params.checksum(),
        generators[2].params.checksum(),
    ]
}

/// Generates a triple for every instance, scores it and predicts, with no
/// parameter updates anywhere.
pub fn transfer_eval(
    model: &ProcessorModel,
    generators: [&GeneratorModel; 3],
    ood: &Dataset,
) -> Result<TransferResult> {
    let checksums_before = checksums(model, generators);
    let triples: Vec<ExplanationTriple> = ood
        .iter()
        .map(|i| generate_triple(generators, &i.premise, &i.hypothesis))
        .collect();
    let predictions = predict_dataset(model, ood, &triples)?;
    let accuracy = label_accuracy(&predictions, ood)?;
    let checksums_after = checksums(model, generators);
    if checksums_before != checksums_after {
        return Err(NileError::Numeric(
            "parameters changed during transfer".into(),
        ));
    }
    Ok(TransferResult {
        accuracy,
        triples,
        predictions,
        checksums_before,
        checksums_after,
    })
}
