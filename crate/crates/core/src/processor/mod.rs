//! The explanation processor: maps the three label-specific explanations
//! (optionally with the premise/hypothesis pair as context) to label scores.
//!
//! - Independent: `l_x = w_ind · F(ctx, t_x)`, one head shared by all labels.
//! - Aggregate: `V_i(t) = w_agg_i · F(ctx, t)`;
//!   `l_e = LSE(V_1(t_e), V_2(t_c))`, `l_c = LSE(V_1(t_c), V_2(t_e))`,
//!   `l_n = V_1(t_n)`.
//! - Append: `l_x = w_apn_x · F(ctx, "entailment: t_e contradiction: t_c neutral: t_n")`.

mod train;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use train::{
    example_loss, sample_negative_explanations, sample_negatives_with, train_processor,
    TrainExample, TrainingLog,
};

use crate::corpus::{Instance, Label};
use crate::error::{NileError, Result};
use crate::generator::ExplanationTriple;
use crate::textmodel::{
    f_backward, f_encode, logsumexp, logsumexp_grad, Checkpoint, Encoded, InitConfig, ScorerParams,
    SgdConfig, TokenSeq, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Independent,
    Aggregate,
    Append,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Explanations only.
    Ph,
    /// Explanations plus instance, no negative sampling.
    Ns,
    /// Explanations plus instance, with the negative-sampling objective.
    Nile,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Independent => "independent",
            Architecture::Aggregate => "aggregate",
            Architecture::Append => "append",
        }
    }

    pub fn heads(self) -> &'static [&'static str] {
        match self {
            Architecture::Independent => &["ind"],
            Architecture::Aggregate => &["agg1", "agg2"],
            Architecture::Append => &["apn_entail", "apn_contradict", "apn_neutral"],
        }
    }
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ph => "ph",
            Variant::Ns => "ns",
            Variant::Nile => "nile",
        }
    }

    pub fn uses_instance(self) -> bool {
        self != Variant::Ph
    }
}

impl std::str::FromStr for Architecture {
    type Err = NileError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" | "ind" => Ok(Architecture::Independent),
            "aggregate" | "agg" => Ok(Architecture::Aggregate),
            "append" | "apn" => Ok(Architecture::Append),
            _ => Err(NileError::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = NileError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ph" => Ok(Variant::Ph),
            "ns" => Ok(Variant::Ns),
            "nile" => Ok(Variant::Nile),
            _ => Err(NileError::Config(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessorConfig {
    pub architecture: Architecture,
    pub variant: Variant,
    /// Negatives per instance; `None` means 2 for NILE and 0 otherwise.
    pub negatives_per_instance: Option<usize>,
    /// Weight of the negative-sampling loss.
    pub aux_weight: f64,
    pub seed: u64,
    pub d: usize,
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub init: InitConfig,
}

impl Default for ProcessorConfig {
    fn default() -> Self {
        ProcessorConfig {
            architecture: Architecture::Independent,
            variant: Variant::Nile,
            negatives_per_instance: None,
            aux_weight: 1.0,
            seed: 0,
            d: 8,
            epochs: 400,
            sgd: SgdConfig::default(),
            init: InitConfig::default(),
        }
    }
}

impl ProcessorConfig {
    pub fn new(architecture: Architecture, variant: Variant) -> Self {
        ProcessorConfig {
            architecture,
            variant,
            ..Self::default()
        }
    }

    pub fn negatives(&self) -> usize {
        match (self.variant, self.negatives_per_instance) {
            (_, Some(k)) => k,
            (Variant::Nile, None) => 2,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NileError::Config(m.to_string()));
        match (self.variant, self.architecture) {
            (Variant::Nile, Architecture::Append) => {
                return bad(
                    "the negative-sampling variant is defined for independent and aggregate only",
                )
            }
            (Variant::Nile, _) if self.negatives() == 0 => {
                return bad("the negative-sampling variant needs at least one negative")
            }
            (Variant::Ns | Variant::Ph, _) if self.negatives() > 0 => {
                return bad("negatives are only used by the negative-sampling variant")
            }
            _ => {}
        }
        if self.d == 0 {
            return bad("d must be positive");
        }
        if !(self.aux_weight.is_finite() && self.aux_weight >= 0.0) {
            return bad("aux_weight must be a finite non-negative number");
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!("{}-{}", self.architecture.name(), self.variant.name())
    }
}

/// Scores before the softmax, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub l_entail: f64,
    pub l_contradict: f64,
    pub l_neutral: f64,
}

impl LabelScores {
    pub fn from_array(a: [f64; 3]) -> Self {
        LabelScores {
            l_entail: a[0],
            l_contradict: a[1],
            l_neutral: a[2],
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.l_entail, self.l_contradict, self.l_neutral]
    }

    pub fn get(&self, l: Label) -> f64 {
        self.as_array()[l.index()]
    }

    pub fn all_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }

    /// Argmax; exact ties go to the earlier label in entail → contradict →
    /// neutral order.
    pub fn argmax(&self) -> Result<Label> {
        if !self.all_finite() {
            return Err(NileError::Numeric(format!(
                "non-finite label scores {self:?}"
            )));
        }
        let a = self.as_array();
        let mut best = 0;
        for i in 1..3 {
            if a[i] > a[best] {
                best = i;
            }
        }
        Ok(Label::from_index(best))
    }
}

pub fn build_concat_ph(p: &str, h: &str) -> String {
    format!("premise: {p} hypothesis: {h}")
}

pub fn build_concat_ecn(t: &ExplanationTriple) -> String {
    format!(
        "entailment: {} contradiction: {} neutral: {}",
        t.t_entail, t.t_contradict, t.t_neutral
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessorModel {
    pub config: ProcessorConfig,
    pub vocab: Vocabulary,
    pub params: ScorerParams,
}

/// Forward state needed for backpropagation through one scoring call.
#[derive(Debug, Clone)]
pub struct Forward {
    encs: Vec<Encoded>,
    /// Per-slot head outputs (Aggregate: V_1 and V_2).
    v1: [f64; 3],
    v2: [f64; 3],
    pub scores: [f64; 3],
}

impl ProcessorModel {
    pub fn new(config: ProcessorConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut r = crate::seed::rng(crate::seed::derive_seed(config.seed, "processor/init"));
        let params = ScorerParams::new(
            vocab.len(),
            config.d,
            config.architecture.heads(),
            &config.init,
            &mut r,
        );
        Ok(ProcessorModel {
            config,
            vocab,
            params,
        })
    }

    /// Token ids of the context a variant sees for an instance.
    pub fn context_ids(&self, inst: &Instance) -> Option<TokenSeq> {
        self.config.variant.uses_instance().then(|| {
            self.vocab
                .encode(&build_concat_ph(&inst.premise, &inst.hypothesis))
        })
    }

    pub fn slot_ids(&self, t: &ExplanationTriple) -> [TokenSeq; 3] {
        t.as_array().map(|s| self.vocab.encode(s))
    }

    fn check_context(&self, ctx: Option<&str>) -> Result<()> {
        match (self.config.variant.uses_instance(), ctx.is_some()) {
            (true, false) => Err(NileError::Config(format!(
                "{} scoring needs the instance as context",
                self.config.describe()
            ))),
            (false, true) => Err(NileError::Config(
                "explanation-only scoring must not see the instance".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Scores a triple given the context text (`None` for the PH variant).
    /// Empty slots are allowed (they arise under erasure); with a context the
    /// encoder still sees `ctx [SEP]`.
    pub fn score(&self, ctx: Option<&str>, t: &ExplanationTriple) -> Result<LabelScores> {
        self.check_context(ctx)?;
        let ctx_ids = ctx.map(|c| self.vocab.encode(c));
        let slots = self.slot_ids(t);
        let f = self.forward(ctx_ids.as_deref(), [&slots[0], &slots[1], &slots[2]])?;
        Ok(LabelScores::from_array(f.scores))
    }

    fn encode(&self, ctx: Option<&[usize]>, t: &[usize]) -> Result<Encoded> {
        match ctx {
            Some(c) => f_encode(&self.params, &[c, t]),
            None => f_encode(&self.params, &[t]),
        }
    }

    pub fn forward(&self, ctx: Option<&[usize]>, slots: [&[usize]; 3]) -> Result<Forward> {
        let p = &self.params;
        let mut v1 = [0.0; 3];
        let mut v2 = [0.0; 3];
        let (encs, scores) = match self.config.architecture {
            Architecture::Independent => {
                let encs = slots
                    .iter()
                    .map(|t| self.encode(ctx, t))
                    .collect::<Result<Vec<_>>>()?;
                let mut s = [0.0; 3];
                for x in 0..3 {
                    s[x] = p.score("ind", &encs[x]);
                }
                (encs, s)
            }
            Architecture::Aggregate => {
                let encs = slots
                    .iter()
                    .map(|t| self.encode(ctx, t))
                    .collect::<Result<Vec<_>>>()?;
                for x in 0..3 {
                    v1[x] = p.score("agg1", &encs[x]);
                    v2[x] = p.score("agg2", &encs[x]);
                }
                let s = [logsumexp(v1[0], v2[1]), logsumexp(v1[1], v2[0]), v1[2]];
                (encs, s)
            }
            Architecture::Append => {
                let mut ecn = vec![crate::textmodel::ENTAILMENT];
                ecn.extend_from_slice(slots[0]);
                ecn.push(crate::textmodel::CONTRADICTION);
                ecn.extend_from_slice(slots[1]);
                ecn.push(crate::textmodel::NEUTRAL);
                ecn.extend_from_slice(slots[2]);
                let enc = self.encode(ctx, &ecn)?;
                let heads = Architecture::Append.heads();
                let s = [0, 1, 2].map(|x| p.score(heads[x], &enc));
                (vec![enc], s)
            }
        };
        Ok(Forward {
            encs,
            v1,
            v2,
            scores,
        })
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the three scores is `dscores`.
    pub fn backward(&self, f: &Forward, dscores: [f64; 3], grads: &mut ScorerParams) {
        let p = &self.params;
        match self.config.architecture {
            Architecture::Independent => {
                for (enc, &g) in f.encs.iter().zip(&dscores) {
                    p.score_backward("ind", enc, g, grads);
                }
            }
            Architecture::Aggregate => {
                let mut d1 = [0.0; 3];
                let mut d2 = [0.0; 3];
                let (a, b) = logsumexp_grad(f.v1[0], f.v2[1]);
                d1[0] += dscores[0] * a;
                d2[1] += dscores[0] * b;
                let (a, b) = logsumexp_grad(f.v1[1], f.v2[0]);
                d1[1] += dscores[1] * a;
                d2[0] += dscores[1] * b;
                d1[2] += dscores[2];
                for x in 0..3 {
                    let enc = &f.encs[x];
                    if d1[x] == 0.0 && d2[x] == 0.0 {
                        continue;
                    }
                    for (head, g) in [("agg1", d1[x]), ("agg2", d2[x])] {
                        for (gw, h) in grads.head_mut(head).iter_mut().zip(&enc.h) {
                            *gw += g * h;
                        }
                    }
                    let dh: Vec<f64> = p
                        .head("agg1")
                        .iter()
                        .zip(p.head("agg2"))
                        .map(|(w1, w2)| d1[x] * w1 + d2[x] * w2)
                        .collect();
                    f_backward(p, enc, &dh, grads);
                }
            }
            Architecture::Append => {
                let enc = &f.encs[0];
                let heads = Architecture::Append.heads();
                let mut dh = vec![0.0; p.d];
                for x in 0..3 {
                    for (gw, h) in grads.head_mut(heads[x]).iter_mut().zip(&enc.h) {
                        *gw += dscores[x] * h;
                    }
                    for (g, w) in dh.iter_mut().zip(p.head(heads[x])) {
                        *g += dscores[x] * w;
                    }
                }
                f_backward(p, enc, &dh, grads);
            }
        }
    }

    /// Label and scores for an instance, with the context the variant
    /// requires taken from the instance.
    pub fn predict(&self, inst: &Instance, t: &ExplanationTriple) -> Result<(Label, LabelScores)> {
        let ctx = build_concat_ph(&inst.premise, &inst.hypothesis);
        let ctx = self.config.variant.uses_instance().then_some(ctx.as_str());
        let s = self.score(ctx, t)?;
        Ok((s.argmax()?, s))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let dims = BTreeMap::from([("d".to_string(), self.params.d)]);
        let tag = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::new("processor", tag, &self.vocab, dims, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("processor")?;
        let config: ProcessorConfig = serde_json::from_value(ck.tag.clone())
            .map_err(|e| NileError::Data(format!("processor checkpoint config: {e}")))?;
        config.validate()?;
        let params = ck.scorer_params()?;
        let want: Vec<&str> = config.architecture.heads().to_vec();
        let have: Vec<&str> = params.heads.keys().map(String::as_str).collect();
        let mut want_sorted = want.clone();
        want_sorted.sort_unstable();
        if want_sorted != have {
            return Err(NileError::Data(format!(
                "processor checkpoint heads {have:?} do not match {}",
                config.describe()
            )));
        }
        Ok(ProcessorModel {
            config,
            vocab: ck.vocab.clone(),
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Line record of a prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: Label,
    pub l_entail: f64,
    pub l_contradict: f64,
    pub l_neutral: f64,
    pub explanation: String,
}

impl PredictionRecord {
    pub fn new(id: &str, label: Label, s: &LabelScores, explanation: &str) -> Self {
        PredictionRecord {
            id: id.to_string(),
            label,
            l_entail: s.l_entail,
            l_contradict: s.l_contradict,
            l_neutral: s.l_neutral,
            explanation: explanation.to_string(),
        }
    }
}
