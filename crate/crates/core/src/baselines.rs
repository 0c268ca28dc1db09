//! The two comparison systems.
//!
//! Post-hoc: predict from the instance alone (`l_x = w_x · F(concat_ph)`),
//! then hand back whichever generated explanation matches the predicted
//! label. Explain-then-predict: one generator trained on every label writes
//! a single explanation from the instance, and a classifier that sees only
//! that explanation picks the label.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Instance, Label};
use crate::error::{NileError, Result};
use crate::generator::{
    train_generator, ExplanationTriple, GeneratorConfig, GeneratorModel, GeneratorScope,
};
use crate::processor::{build_concat_ph, LabelScores};
use crate::seed::{derive_seed, rng};
use crate::textmodel::{
    f_backward, f_encode, optimizer_step, softmax_cross_entropy, Checkpoint, InitConfig,
    ScorerParams, SgdConfig, TokenSeq, Vocabulary,
};

pub const POSTHOC_HEADS: [&str; 3] = ["posthoc_entail", "posthoc_contradict", "posthoc_neutral"];
pub const ETPA_HEADS: [&str; 3] = ["etpa_entail", "etpa_contradict", "etpa_neutral"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub d: usize,
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub init: InitConfig,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            d: 32,
            epochs: 30,
            sgd: SgdConfig::default(),
            init: InitConfig::default(),
            seed: 0,
        }
    }
}

/// Scores of the three heads over `F(seq)`. An empty sequence encodes to the
/// zero vector, so every score is zero.
fn three_head_scores(p: &ScorerParams, heads: &[&str; 3], seq: &[usize]) -> Result<LabelScores> {
    if seq.is_empty() {
        return Ok(LabelScores::from_array([0.0; 3]));
    }
    let enc = f_encode(p, &[seq])?;
    Ok(LabelScores::from_array(heads.map(|h| p.score(h, &enc))))
}

/// Cross-entropy loss and gradient of the three-head classifier on one
/// sequence.
pub fn classifier_loss(
    p: &ScorerParams,
    heads: &[&str; 3],
    seq: &[usize],
    gold: Label,
) -> Result<(f64, ScorerParams)> {
    let enc = f_encode(p, &[seq])?;
    let scores = heads.map(|h| p.score(h, &enc));
    let (loss, g) = softmax_cross_entropy(&scores, gold.index());
    let mut grads = p.zeros_like();
    let mut dh = vec![0.0; p.d];
    for (x, head) in heads.iter().enumerate() {
        for (gw, h) in grads.head_mut(head).iter_mut().zip(&enc.h) {
            *gw += g[x] * h;
        }
        for (d, w) in dh.iter_mut().zip(p.head(head)) {
            *d += g[x] * w;
        }
    }
    f_backward(p, &enc, &dh, &mut grads);
    Ok((loss, grads))
}

fn train_classifier(
    vocab: &Vocabulary,
    heads: &[&str; 3],
    data: &[(TokenSeq, Label)],
    cfg: &ClassifierConfig,
    stream: &str,
) -> Result<ScorerParams> {
    let mut params = ScorerParams::new(
        vocab.len(),
        cfg.d,
        heads,
        &cfg.init,
        &mut rng(derive_seed(cfg.seed, &format!("{stream}/init"))),
    );
    let mut r = rng(derive_seed(cfg.seed, &format!("{stream}/train")));
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        for &i in &order {
            let (seq, gold) = &data[i];
            if seq.is_empty() {
                continue;
            }
            let (loss, grads) = classifier_loss(&params, heads, seq, *gold)?;
            if !loss.is_finite() {
                return Err(NileError::Numeric(
                    "classifier loss became non-finite".into(),
                ));
            }
            optimizer_step(&mut params, &grads, &cfg.sgd)?;
        }
    }
    Ok(params)
}

fn classifier_checkpoint(
    kind: &str,
    vocab: &Vocabulary,
    params: &ScorerParams,
    cfg: &ClassifierConfig,
) -> Checkpoint {
    let dims = BTreeMap::from([("d".to_string(), params.d)]);
    let tag = serde_json::to_value(cfg).expect("config serializes");
    Checkpoint::new(kind, tag, vocab, dims, params)
}

fn classifier_from_checkpoint(
    ck: &Checkpoint,
    kind: &str,
) -> Result<(ClassifierConfig, ScorerParams)> {
    ck.expect_kind(kind)?;
    let cfg: ClassifierConfig = serde_json::from_value(ck.tag.clone())
        .map_err(|e| NileError::Data(format!("{kind} checkpoint config: {e}")))?;
    Ok((cfg, ck.scorer_params()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosthocModel {
    pub config: ClassifierConfig,
    pub vocab: Vocabulary,
    pub params: ScorerParams,
}

pub fn train_posthoc(
    train: &Dataset,
    vocab: &Vocabulary,
    cfg: &ClassifierConfig,
) -> Result<PosthocModel> {
    let data: Vec<(TokenSeq, Label)> = train
        .iter()
        .map(|i| {
            (
                vocab.encode(&build_concat_ph(&i.premise, &i.hypothesis)),
                i.label,
            )
        })
        .collect();
    let params = train_classifier(vocab, &POSTHOC_HEADS, &data, cfg, "posthoc")?;
    Ok(PosthocModel {
        config: cfg.clone(),
        vocab: vocab.clone(),
        params,
    })
}

impl PosthocModel {
    /// The label depends on the premise and hypothesis only.
    pub fn predict(&self, inst: &Instance) -> Result<(Label, LabelScores)> {
        let seq = self
            .vocab
            .encode(&build_concat_ph(&inst.premise, &inst.hypothesis));
        let s = three_head_scores(&self.params, &POSTHOC_HEADS, &seq)?;
        Ok((s.argmax()?, s))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        classifier_checkpoint("posthoc", &self.vocab, &self.params, &self.config)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let (config, params) = classifier_from_checkpoint(ck, "posthoc")?;
        Ok(PosthocModel {
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

/// A prediction with the explanation handed back alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Explained {
    pub label: Label,
    pub scores: LabelScores,
    pub explanation: String,
    /// Set when the explanation is empty.
    pub warning: bool,
}

/// Predicts from the instance, then returns the triple's slot for the
/// predicted label.
pub fn posthoc_pipeline(
    model: &PosthocModel,
    inst: &Instance,
    t: &ExplanationTriple,
) -> Result<Explained> {
    let (label, scores) = model.predict(inst)?;
    let explanation = t.get(label).to_string();
    Ok(Explained {
        label,
        scores,
        warning: explanation.is_empty(),
        explanation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtpaModel {
    pub generator: GeneratorModel,
    pub config: ClassifierConfig,
    pub vocab: Vocabulary,
    pub clf: ScorerParams,
}

/// Which explanations the second-stage classifier learns from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtpaClassifierInput {
    #[default]
    Gold,
    Generated,
}

pub fn train_etpa(
    train: &Dataset,
    vocab: &Vocabulary,
    gen_cfg: &GeneratorConfig,
    clf_cfg: &ClassifierConfig,
    input: EtpaClassifierInput,
) -> Result<EtpaModel> {
    let (generator, _) = train_generator(GeneratorScope::All, train, vocab, gen_cfg)?;
    let data = train
        .iter()
        .map(|inst| {
            let t = match input {
                EtpaClassifierInput::Gold => inst.gold_explanation.clone().ok_or_else(|| {
                    NileError::Data(format!("instance {} has no gold explanation", inst.id))
                })?,
                EtpaClassifierInput::Generated => {
                    generator.generate(&inst.premise, &inst.hypothesis).text
                }
            };
            Ok((vocab.encode(&t), inst.label))
        })
        .collect::<Result<Vec<_>>>()?;
    let clf = train_classifier(vocab, &ETPA_HEADS, &data, clf_cfg, "etpa")?;
    Ok(EtpaModel {
        generator,
        config: clf_cfg.clone(),
        vocab: vocab.clone(),
        clf,
    })
}

impl EtpaModel {
    /// The classifier's view: the explanation text and nothing else.
    pub fn classify(&self, explanation: &str) -> Result<(Label, LabelScores)> {
        let s = three_head_scores(&self.clf, &ETPA_HEADS, &self.vocab.encode(explanation))?;
        Ok((s.argmax()?, s))
    }

    fn finish(&self, explanation: String) -> Result<Explained> {
        let (label, scores) = self.classify(&explanation)?;
        Ok(Explained {
            label,
            scores,
            warning: explanation.is_empty(),
            explanation,
        })
    }

    /// Test hook: the pipeline with the generation step replaced by an
    /// injected explanation. `p` and `h` are accepted, as in the pipeline,
    /// but only the explanation reaches the classifier.
    pub fn pipeline_with_explanation(
        &self,
        _p: &str,
        _h: &str,
        explanation: &str,
    ) -> Result<Explained> {
        self.finish(explanation.to_string())
    }

    pub fn save(&self, generator_path: &Path, classifier_path: &Path) -> Result<()> {
        self.generator.save(generator_path)?;
        classifier_checkpoint("etpa-classifier", &self.vocab, &self.clf, &self.config)
            .save(classifier_path)
    }

    pub fn load(generator_path: &Path, classifier_path: &Path) -> Result<Self> {
        let generator = GeneratorModel::load(generator_path)?;
        let ck = Checkpoint::load(classifier_path)?;
        let (config, clf) = classifier_from_checkpoint(&ck, "etpa-classifier")?;
        Ok(EtpaModel {
            generator,
            config,
            vocab: ck.vocab.clone(),
            clf,
        })
    }
}

/// Generate one explanation from the instance, then classify it.
pub fn etpa_pipeline(model: &EtpaModel, p: &str, h: &str) -> Result<Explained> {
    model.finish(model.generator.generate(p, h).text)
}
