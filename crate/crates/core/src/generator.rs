//! Label-specific explanation generators.
//!
//! Each generator is a fixed-window next-token model: the embeddings of the
//! previous `window` tokens are concatenated and mapped linearly to
//! vocabulary logits. It is trained on `premise: p hypothesis: h [EXP] t [EOS]`
//! with the loss restricted to the explanation and `[EOS]` positions, and
//! decodes greedily. A template oracle over the synthetic world stands in for
//! a perfectly trained generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Instance, Label, World};
use crate::error::{NileError, Result};
use crate::seed::rng;
use crate::textmodel::{
    optimizer_step, softmax_cross_entropy, Checkpoint, Params, SgdConfig, TokenSeq, Vocabulary,
    EOS, EXP, HYPOTHESIS, PAD, PREMISE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorScope {
    /// Trained only on instances with this gold label.
    Label(Label),
    /// Trained on every instance (the explain-then-predict baseline).
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub d: usize,
    pub window: usize,
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub embedding_scale: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            d: 32,
            window: 8,
            epochs: 20,
            sgd: SgdConfig::default(),
            embedding_scale: 0.5,
            max_new_tokens: 32,
            seed: 0,
        }
    }
}

/// Embeddings `[V × d]`, output weights `[V × window·d]` and output bias `[V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmParams {
    pub vocab_size: usize,
    pub d: usize,
    pub window: usize,
    pub emb: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl Params for LmParams {
    fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        vec![
            (
                "embeddings".into(),
                vec![self.vocab_size, self.d],
                &self.emb,
            ),
            (
                "w_out".into(),
                vec![self.vocab_size, self.window * self.d],
                &self.w_out,
            ),
            ("b_out".into(), vec![self.vocab_size], &self.b_out),
        ]
    }

    fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.emb, &mut self.w_out, &mut self.b_out]
    }
}

impl LmParams {
    pub fn new(
        vocab_size: usize,
        d: usize,
        window: usize,
        embedding_scale: f64,
        seed: u64,
    ) -> Self {
        let mut r = rng(seed);
        let mut emb: Vec<f64> = match Normal::new(0.0, embedding_scale) {
            Ok(n) if embedding_scale > 0.0 => {
                (0..vocab_size * d).map(|_| n.sample(&mut r)).collect()
            }
            _ => vec![0.0; vocab_size * d],
        };
        emb[PAD * d..(PAD + 1) * d].fill(0.0);
        LmParams {
            vocab_size,
            d,
            window,
            emb,
            w_out: vec![0.0; vocab_size * window * d],
            b_out: vec![0.0; vocab_size],
        }
    }

    fn zeros_like(&self) -> Self {
        LmParams {
            emb: vec![0.0; self.emb.len()],
            w_out: vec![0.0; self.w_out.len()],
            b_out: vec![0.0; self.b_out.len()],
            ..*self
        }
    }

    /// The `window` tokens preceding position `i`, left-padded.
    fn context(&self, tokens: &[usize], i: usize) -> Vec<usize> {
        (0..self.window)
            .map(|j| {
                let back = self.window - j;
                if i >= back {
                    tokens[i - back]
                } else {
                    PAD
                }
            })
            .collect()
    }

    fn input(&self, ctx: &[usize]) -> Vec<f64> {
        let d = self.d;
        ctx.iter()
            .flat_map(|&t| self.emb[t * d..(t + 1) * d].iter().copied())
            .collect()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let k = self.window * self.d;
        (0..self.vocab_size)
            .map(|v| {
                self.b_out[v]
                    + self.w_out[v * k..(v + 1) * k]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Mean next-token cross-entropy over the positions where `mask` is set.
    /// Contexts are read from `tokens`, targets from `targets`.
    pub fn loss_with_targets(
        &self,
        tokens: &[usize],
        targets: &[usize],
        mask: &[bool],
    ) -> (f64, LmParams) {
        let mut grads = self.zeros_like();
        let n = mask.iter().filter(|&&m| m).count();
        if n == 0 {
            return (0.0, grads);
        }
        let scale = 1.0 / n as f64;
        let (d, k) = (self.d, self.window * self.d);
        let mut loss = 0.0;
        for i in (0..tokens.len()).filter(|&i| mask[i]) {
            let ctx = self.context(tokens, i);
            let x = self.input(&ctx);
            let (l, g) = softmax_cross_entropy(&self.logits(&x), targets[i]);
            loss += l * scale;
            let mut dx = vec![0.0; k];
            for (v, gv) in g.iter().enumerate() {
                let gv = gv * scale;
                grads.b_out[v] += gv;
                let row = &self.w_out[v * k..(v + 1) * k];
                let grow = &mut grads.w_out[v * k..(v + 1) * k];
                for j in 0..k {
                    grow[j] += gv * x[j];
                    dx[j] += gv * row[j];
                }
            }
            for (j, &t) in ctx.iter().enumerate() {
                if t == PAD {
                    continue;
                }
                for (ge, dxj) in grads.emb[t * d..(t + 1) * d]
                    .iter_mut()
                    .zip(&dx[j * d..(j + 1) * d])
                {
                    *ge += dxj;
                }
            }
        }
        (loss, grads)
    }

    pub fn loss(&self, tokens: &[usize], mask: &[bool]) -> (f64, LmParams) {
        self.loss_with_targets(tokens, tokens, mask)
    }
}

/// The prompt `premise: p hypothesis: h [EXP]` as token ids.
pub fn build_prompt(vocab: &Vocabulary, p: &str, h: &str) -> TokenSeq {
    let mut t = vec![PREMISE];
    t.extend(vocab.encode(p));
    t.push(HYPOTHESIS);
    t.extend(vocab.encode(h));
    t.push(EXP);
    t
}

/// Tokens of `premise: p hypothesis: h [EXP] t_g [EOS]` and a mask that is
/// true exactly on the `t_g` and `[EOS]` positions.
pub fn build_training_sequence(
    vocab: &Vocabulary,
    p: &str,
    h: &str,
    t_g: &str,
) -> Result<(TokenSeq, Vec<bool>)> {
    let expl = vocab.encode(t_g);
    if expl.is_empty() {
        return Err(NileError::Data(
            "cannot train on an empty explanation".into(),
        ));
    }
    let mut tokens = build_prompt(vocab, p, h);
    let mut mask = vec![false; tokens.len()];
    tokens.extend(&expl);
    tokens.push(EOS);
    mask.resize(tokens.len(), true);
    Ok((tokens, mask))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    pub scope: GeneratorScope,
    pub vocab: Vocabulary,
    pub params: LmParams,
    pub max_new_tokens: usize,
}

/// Output of one greedy decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub text: String,
    /// Set when decoding produced no tokens at all.
    pub empty: bool,
}

/// The rows a generator with this scope trains on.
pub fn training_rows(scope: GeneratorScope, dataset: &Dataset) -> Result<Vec<&Instance>> {
    let rows: Vec<&Instance> = dataset
        .iter()
        .filter(|i| match scope {
            GeneratorScope::Label(l) => i.label == l,
            GeneratorScope::All => true,
        })
        .collect();
    if rows.is_empty() {
        return Err(NileError::Data(format!(
            "no training instances for generator scope {scope:?}"
        )));
    }
    Ok(rows)
}

/// Per-epoch mean training loss, returned alongside the model.
pub type LossCurve = Vec<f64>;

pub fn train_generator(
    scope: GeneratorScope,
    dataset: &Dataset,
    vocab: &Vocabulary,
    cfg: &GeneratorConfig,
) -> Result<(GeneratorModel, LossCurve)> {
    let rows = training_rows(scope, dataset)?;
    let seqs = rows
        .iter()
        .map(|inst| {
            let t = inst.gold_explanation.as_deref().ok_or_else(|| {
                NileError::Data(format!("instance {} has no gold explanation", inst.id))
            })?;
            build_training_sequence(vocab, &inst.premise, &inst.hypothesis, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut params = LmParams::new(
        vocab.len(),
        cfg.d,
        cfg.window,
        cfg.embedding_scale,
        cfg.seed,
    );
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut r = rng(cfg.seed ^ 0x5eed);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        for &i in &order {
            let (tokens, mask) = &seqs[i];
            let (loss, grads) = params.loss(tokens, mask);
            if !loss.is_finite() {
                return Err(NileError::Numeric(
                    "generator loss became non-finite".into(),
                ));
            }
            optimizer_step(&mut params, &grads, &cfg.sgd)?;
            total += loss;
        }
        curve.push(total / seqs.len() as f64);
    }
    let model = GeneratorModel {
        scope,
        vocab: vocab.clone(),
        params,
        max_new_tokens: cfg.max_new_tokens,
    };
    Ok((model, curve))
}

impl GeneratorModel {
    /// Greedy decoding after the prompt; ties go to the lowest token id.
    /// Special tokens other than `[EOS]` are never emitted.
    pub fn generate(&self, p: &str, h: &str) -> Generated {
        let mut tokens = build_prompt(&self.vocab, p, h);
        let start = tokens.len();
        for _ in 0..self.max_new_tokens {
            let ctx = self.params.context(&tokens, tokens.len());
            let logits = self.params.logits(&self.params.input(&ctx));
            let mut best = EOS;
            for (v, &l) in logits.iter().enumerate() {
                if Vocabulary::is_special(v) && v != EOS {
                    continue;
                }
                if l > logits[best] {
                    best = v;
                }
            }
            if best == EOS {
                break;
            }
            tokens.push(best);
        }
        let text = self.vocab.decode(&tokens[start..]);
        Generated {
            empty: text.is_empty(),
            text,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let dims = BTreeMap::from([
            ("d".to_string(), self.params.d),
            ("window".to_string(), self.params.window),
        ]);
        let tag = serde_json::json!({
            "scope": self.scope,
            "max_new_tokens": self.max_new_tokens,
        });
        Checkpoint::new("generator", tag, &self.vocab, dims, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("generator")?;
        let bad = |m: &str| NileError::Data(format!("generator checkpoint: {m}"));
        let scope: GeneratorScope = serde_json::from_value(ck.tag["scope"].clone())
            .map_err(|_| bad("missing or invalid scope"))?;
        let max_new_tokens = ck.tag["max_new_tokens"]
            .as_u64()
            .ok_or_else(|| bad("missing max_new_tokens"))? as usize;
        let (d, window) = (ck.dim("d")?, ck.dim("window")?);
        let mut params = LmParams::new(ck.vocab.len(), d, window, 0.0, 0);
        ck.restore_into(&mut params)?;
        Ok(GeneratorModel {
            scope,
            vocab: ck.vocab.clone(),
            params,
            max_new_tokens,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExplanationTriple {
    pub t_entail: String,
    pub t_contradict: String,
    pub t_neutral: String,
}

impl ExplanationTriple {
    pub fn new(t_entail: String, t_contradict: String, t_neutral: String) -> Self {
        ExplanationTriple {
            t_entail,
            t_contradict,
            t_neutral,
        }
    }

    pub fn uniform(t: &str) -> Self {
        Self::new(t.into(), t.into(), t.into())
    }

    pub fn get(&self, l: Label) -> &str {
        match l {
            Label::Entail => &self.t_entail,
            Label::Contradict => &self.t_contradict,
            Label::Neutral => &self.t_neutral,
        }
    }

    pub fn set(&mut self, l: Label, t: String) {
        match l {
            Label::Entail => self.t_entail = t,
            Label::Contradict => self.t_contradict = t,
            Label::Neutral => self.t_neutral = t,
        }
    }

    pub fn as_array(&self) -> [&str; 3] {
        [&self.t_entail, &self.t_contradict, &self.t_neutral]
    }
}

/// Line record of a triple dump: `id, t_entail, t_contradict, t_neutral`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub id: String,
    pub t_entail: String,
    pub t_contradict: String,
    pub t_neutral: String,
}

impl TripleRecord {
    pub fn new(id: &str, t: &ExplanationTriple) -> Self {
        TripleRecord {
            id: id.to_string(),
            t_entail: t.t_entail.clone(),
            t_contradict: t.t_contradict.clone(),
            t_neutral: t.t_neutral.clone(),
        }
    }

    pub fn triple(&self) -> ExplanationTriple {
        ExplanationTriple::new(
            self.t_entail.clone(),
            self.t_contradict.clone(),
            self.t_neutral.clone(),
        )
    }
}

/// Runs the three generators independently on one instance.
pub fn generate_triple(gens: [&GeneratorModel; 3], p: &str, h: &str) -> ExplanationTriple {
    let [e, c, n] = gens.map(|g| g.generate(p, h).text);
    ExplanationTriple::new(e, c, n)
}

/// The template oracle: the `label`-family explanation for a synthetic
/// instance.
pub fn template_generate(world: &World, label: Label, inst: &Instance) -> Result<String> {
    world.template_generate(label, inst)
}

pub fn oracle_triple(world: &World, inst: &Instance) -> Result<ExplanationTriple> {
    let [e, c, n] = Label::ALL.map(|l| template_generate(world, l, inst));
    Ok(ExplanationTriple::new(e?, c?, n?))
}
