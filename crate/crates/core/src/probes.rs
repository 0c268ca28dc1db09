//! Faithfulness probes. Erasure removes either the explanations or the
//! instance from the processor input; the shuffle probe swaps in the triple
//! of a different instance with the same gold label, so the explanation
//! forms still match the label while their content no longer matches the
//! instance.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::PosthocModel;
use crate::corpus::{read_jsonl_records, Dataset, Label};
use crate::error::{NileError, Result};
use crate::generator::ExplanationTriple;
use crate::processor::{build_concat_ph, LabelScores, ProcessorModel, Variant};
use crate::seed::{derive_seed, rng};
use crate::textmodel::write_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Full,
    /// Explanations erased, instance kept.
    InstanceOnly,
    /// Instance erased, explanations kept.
    ExplanationOnly,
    Shuffled,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Full => "full",
            Condition::InstanceOnly => "instance-only",
            Condition::ExplanationOnly => "explanation-only",
            Condition::Shuffled => "shuffled",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = NileError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Condition::Full),
            "instance-only" => Ok(Condition::InstanceOnly),
            "explanation-only" => Ok(Condition::ExplanationOnly),
            "shuffled" => Ok(Condition::Shuffled),
            _ => Err(NileError::Config(format!("unknown probe condition {s:?}"))),
        }
    }
}

/// How the shuffle probe picks donors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleMode {
    /// The whole triple comes from one donor instance.
    #[default]
    WholeTriple,
    /// Each slot comes from an independently drawn donor.
    PerSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub model: String,
    pub condition: Condition,
    pub accuracy: f64,
    /// Accuracy within each gold class (entail, contradict, neutral); `None`
    /// for a class with no instances.
    pub per_label_accuracy: [Option<f64>; 3],
    pub n: usize,
    pub seed: u64,
}

impl ProbeReport {
    pub fn from_predictions(
        model: &str,
        condition: Condition,
        seed: u64,
        dataset: &Dataset,
        predicted: &[Label],
    ) -> Result<Self> {
        if dataset.is_empty() || predicted.len() != dataset.len() {
            return Err(NileError::Data(format!(
                "{} predictions for {} instances",
                predicted.len(),
                dataset.len()
            )));
        }
        let mut hit = [0usize; 3];
        let mut tot = [0usize; 3];
        for (inst, p) in dataset.iter().zip(predicted) {
            tot[inst.label.index()] += 1;
            hit[inst.label.index()] += (inst.label == *p) as usize;
        }
        let per = [0, 1, 2].map(|i| (tot[i] > 0).then(|| hit[i] as f64 / tot[i] as f64));
        Ok(ProbeReport {
            model: model.to_string(),
            condition,
            accuracy: hit.iter().sum::<usize>() as f64 / dataset.len() as f64,
            per_label_accuracy: per,
            n: dataset.len(),
            seed,
        })
    }
}

/// The models a probe can run against.
#[derive(Debug, Clone, Copy)]
pub enum Probed<'a> {
    Processor(&'a ProcessorModel),
    Posthoc(&'a PosthocModel),
}

impl Probed<'_> {
    pub fn describe(&self) -> String {
        match self {
            Probed::Processor(m) => m.config.describe(),
            Probed::Posthoc(_) => "posthoc".into(),
        }
    }

    fn check(&self, condition: Condition) -> Result<()> {
        let reject = |why: &str| {
            Err(NileError::Config(format!(
                "{} cannot be probed under {}: {why}",
                self.describe(),
                condition.name()
            )))
        };
        match (self, condition) {
            (_, Condition::Full | Condition::Shuffled) => Ok(()),
            (Probed::Posthoc(_), _) => reject("its prediction never reads the explanations"),
            (Probed::Processor(m), Condition::InstanceOnly) if m.config.variant == Variant::Ph => {
                reject("it never sees the instance")
            }
            _ => Ok(()),
        }
    }

    fn predict(
        &self,
        inst: &crate::corpus::Instance,
        t: &ExplanationTriple,
        erase_instance: bool,
    ) -> Result<(Label, LabelScores)> {
        match self {
            Probed::Processor(m) => {
                let ctx = if erase_instance {
                    build_concat_ph("", "")
                } else {
                    build_concat_ph(&inst.premise, &inst.hypothesis)
                };
                let ctx = m.config.variant.uses_instance().then_some(ctx.as_str());
                let s = m.score(ctx, t)?;
                Ok((s.argmax()?, s))
            }
            Probed::Posthoc(m) => m.predict(inst),
        }
    }
}

/// Per-instance predictions under an erasure condition (or `Full`).
pub fn erasure_predictions(
    model: Probed<'_>,
    dataset: &Dataset,
    triples: &[ExplanationTriple],
    condition: Condition,
) -> Result<Vec<(Label, LabelScores)>> {
    model.check(condition)?;
    if condition == Condition::Shuffled {
        return Err(NileError::Config(
            "use shuffle_probe for the shuffled condition".into(),
        ));
    }
    check_aligned(dataset, triples)?;
    let erased = ExplanationTriple::uniform("");
    dataset
        .iter()
        .zip(triples)
        .map(|(inst, t)| match condition {
            Condition::InstanceOnly => model.predict(inst, &erased, false),
            Condition::ExplanationOnly => model.predict(inst, t, true),
            _ => model.predict(inst, t, false),
        })
        .collect()
}

pub fn erasure_probe(
    model: Probed<'_>,
    dataset: &Dataset,
    triples: &[ExplanationTriple],
    condition: Condition,
) -> Result<ProbeReport> {
    let preds = erasure_predictions(model, dataset, triples, condition)?;
    let labels: Vec<Label> = preds.iter().map(|p| p.0).collect();
    ProbeReport::from_predictions(&model.describe(), condition, 0, dataset, &labels)
}

/// The triple each instance receives under the shuffle probe. Donors are
/// drawn uniformly among the other instances with the same gold label, from
/// a stream derived from `seed` and the instance id.
pub fn shuffled_triples(
    dataset: &Dataset,
    triples: &[ExplanationTriple],
    seed: u64,
    mode: ShuffleMode,
) -> Result<Vec<ExplanationTriple>> {
    check_aligned(dataset, triples)?;
    let mut by_label: [Vec<usize>; 3] = Default::default();
    for (i, inst) in dataset.iter().enumerate() {
        by_label[inst.label.index()].push(i);
    }
    dataset
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let donors: Vec<usize> = by_label[inst.label.index()]
                .iter()
                .copied()
                .filter(|&j| j != i)
                .collect();
            if donors.is_empty() {
                return Err(NileError::Data(format!(
                    "no other {} instance to borrow explanations from for {}",
                    inst.label, inst.id
                )));
            }
            let mut r = rng(derive_seed(seed, &format!("shuffle/{}", inst.id)));
            let mut draw = || donors[r.gen_range(0..donors.len())];
            Ok(match mode {
                ShuffleMode::WholeTriple => triples[draw()].clone(),
                ShuffleMode::PerSlot => {
                    let [e, c, n] = Label::ALL.map(|l| triples[draw()].get(l).to_string());
                    ExplanationTriple::new(e, c, n)
                }
            })
        })
        .collect()
}

pub fn shuffle_probe(
    model: Probed<'_>,
    dataset: &Dataset,
    triples_pool: &[ExplanationTriple],
    seed: u64,
    mode: ShuffleMode,
) -> Result<ProbeReport> {
    let shuffled = shuffled_triples(dataset, triples_pool, seed, mode)?;
    let labels = dataset
        .iter()
        .zip(&shuffled)
        .map(|(inst, t)| model.predict(inst, t, false).map(|p| p.0))
        .collect::<Result<Vec<_>>>()?;
    ProbeReport::from_predictions(
        &model.describe(),
        Condition::Shuffled,
        seed,
        dataset,
        &labels,
    )
}

fn check_aligned(dataset: &Dataset, triples: &[ExplanationTriple]) -> Result<()> {
    if dataset.len() != triples.len() {
        return Err(NileError::Data(format!(
            "{} triples for {} instances",
            triples.len(),
            dataset.len()
        )));
    }
    Ok(())
}

fn table_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("txt")
}

/// Human-readable table, accuracies to four decimals.
pub fn format_table(reports: &[ProbeReport]) -> String {
    let mut s = format!(
        "{:<30} {:<17} {:>8} {:>8} {:>10} {:>8} {:>6} {:>20}\n",
        "model", "condition", "accuracy", "entail", "contradict", "neutral", "n", "seed"
    );
    let cell = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in reports {
        let [e, c, n] = r.per_label_accuracy.map(cell);
        let _ = writeln!(
            s,
            "{:<30} {:<17} {:>8.4} {:>8} {:>10} {:>8} {:>6} {:>20}",
            r.model,
            r.condition.name(),
            r.accuracy,
            e,
            c,
            n,
            r.n,
            r.seed
        );
    }
    s
}

/// Writes one JSON record per report to `path` and the table next to it
/// (same name, `.txt` extension).
pub fn write_report(reports: &[ProbeReport], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in reports {
        serde_json::to_writer(&mut out, r).expect("report serializes");
        out.push(b'\n');
    }
    write_file(path, &out)?;
    write_file(&table_path(path), format_table(reports).as_bytes())
}

pub fn read_report(path: &Path) -> Result<Vec<ProbeReport>> {
    read_jsonl_records(path)
}
