use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{ProcessorConfig, ProcessorModel, Variant};
use crate::corpus::{Dataset, Instance, Label};
use crate::error::{NileError, Result};
use crate::generator::ExplanationTriple;
use crate::seed::{derive_seed, rng};
use crate::textmodel::{optimizer_step, softmax_cross_entropy, ScorerParams, TokenSeq, Vocabulary};

/// One training instance, already tokenized.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub ctx: Option<TokenSeq>,
    pub slots: [TokenSeq; 3],
    pub gold: Label,
}

/// Mean losses per epoch, plus the per-step main loss of the first epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub main_loss: Vec<f64>,
    pub aux_loss: Vec<f64>,
    pub first_epoch_steps: Vec<f64>,
}

/// Main softmax cross-entropy plus, when `negatives` is non-empty, the
/// negative-sampling term: a (k+1)-way cross-entropy over the gold-label
/// score with the true gold-slot explanation (candidate 0) and with the gold
/// slot replaced by each negative. Returns `(main, aux, gradient of
/// main + aux_weight · aux)`.
pub fn example_loss(
    model: &ProcessorModel,
    ex: &TrainExample,
    negatives: &[TokenSeq],
) -> Result<(f64, f64, ScorerParams)> {
    let mut grads = model.params.zeros_like();
    let slots = [&ex.slots[0][..], &ex.slots[1][..], &ex.slots[2][..]];
    let ctx = ex.ctx.as_deref();
    let gold = ex.gold.index();

    let fwd = model.forward(ctx, slots)?;
    let (main, g) = softmax_cross_entropy(&fwd.scores, gold);
    let mut dscores = [g[0], g[1], g[2]];

    let mut aux = 0.0;
    if !negatives.is_empty() {
        let lambda = model.config.aux_weight;
        let mut cands = vec![fwd.scores[gold]];
        let mut fwds = Vec::with_capacity(negatives.len());
        for neg in negatives {
            let mut s = slots;
            s[gold] = neg;
            let f = model.forward(ctx, s)?;
            cands.push(f.scores[gold]);
            fwds.push(f);
        }
        let (l, ga) = softmax_cross_entropy(&cands, 0);
        aux = l;
        dscores[gold] += lambda * ga[0];
        for (f, gj) in fwds.iter().zip(&ga[1..]) {
            let mut d = [0.0; 3];
            d[gold] = lambda * gj;
            model.backward(f, d, &mut grads);
        }
    }
    model.backward(&fwd, dscores, &mut grads);
    if !(main.is_finite() && aux.is_finite()) {
        return Err(NileError::Numeric(format!(
            "loss is not finite (main {main}, aux {aux})"
        )));
    }
    Ok((main, aux, grads))
}

/// Indices of the candidate negatives for `inst`: other instances with the
/// same gold label whose explanation text differs from its own.
fn negative_pool(train: &Dataset, inst: &Instance) -> Vec<usize> {
    let own = inst.gold_explanation.as_deref();
    train
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            o.label == inst.label
                && o.id != inst.id
                && o.gold_explanation.is_some()
                && o.gold_explanation.as_deref() != own
        })
        .map(|(i, _)| i)
        .collect()
}

/// Draws `k` pool entries uniformly without replacement; the returned order
/// is the draw order.
pub fn sample_negatives_with<R: Rng>(pool: &[usize], k: usize, r: &mut R) -> Result<Vec<usize>> {
    if pool.len() < k {
        return Err(NileError::Data(format!(
            "need {k} negative explanations but only {} are available",
            pool.len()
        )));
    }
    Ok(sample(r, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// `k` gold explanations of other training instances with the same gold
/// label, hence from the same template family.
pub fn sample_negative_explanations(
    train: &Dataset,
    inst: &Instance,
    label: Label,
    k: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if inst.label != label {
        return Err(NileError::Config(format!(
            "instance {} has label {}, not {label}",
            inst.id, inst.label
        )));
    }
    let pool = negative_pool(train, inst);
    let picked = sample_negatives_with(&pool, k, &mut rng(seed))?;
    Ok(picked
        .into_iter()
        .map(|i| {
            train.instances[i]
                .gold_explanation
                .clone()
                .unwrap_or_default()
        })
        .collect())
}

/// Trains a processor with per-instance SGD on softmax cross-entropy, adding
/// the negative-sampling term for the NILE variant. `triples[i]` belongs to
/// `train.instances[i]`.
pub fn train_processor(
    config: &ProcessorConfig,
    train: &Dataset,
    triples: &[ExplanationTriple],
    vocab: &Vocabulary,
) -> Result<(ProcessorModel, TrainingLog)> {
    if triples.len() != train.len() {
        return Err(NileError::Data(format!(
            "{} triples for {} training instances",
            triples.len(),
            train.len()
        )));
    }
    let mut model = ProcessorModel::new(config.clone(), vocab.clone())?;
    let examples: Vec<TrainExample> = train
        .iter()
        .zip(triples)
        .map(|(inst, t)| TrainExample {
            ctx: model.context_ids(inst),
            slots: model.slot_ids(t),
            gold: inst.label,
        })
        .collect();

    let k = config.negatives();
    let nile = config.variant == Variant::Nile;
    let mut pools = Vec::new();
    let mut gold_ids = Vec::new();
    if nile {
        for inst in train.iter() {
            let e = inst.gold_explanation.as_deref().ok_or_else(|| {
                NileError::Data(format!("instance {} has no gold explanation", inst.id))
            })?;
            gold_ids.push(vocab.encode(e));
            let pool = negative_pool(train, inst);
            if pool.len() < k {
                return Err(NileError::Data(format!(
                    "instance {}: only {} negatives available, {k} requested",
                    inst.id,
                    pool.len()
                )));
            }
            pools.push(pool);
        }
    }

    let mut r = rng(derive_seed(config.seed, "processor/train"));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = TrainingLog::default();
    let n = examples.len().max(1) as f64;
    for epoch in 0..config.epochs {
        order.shuffle(&mut r);
        let (mut main_sum, mut aux_sum) = (0.0, 0.0);
        for &i in &order {
            let negatives: Vec<TokenSeq> = if nile {
                sample_negatives_with(&pools[i], k, &mut r)?
                    .into_iter()
                    .map(|j| gold_ids[j].clone())
                    .collect()
            } else {
                Vec::new()
            };
            let (main, aux, grads) = example_loss(&model, &examples[i], &negatives)?;
            optimizer_step(&mut model.params, &grads, &config.sgd)?;
            main_sum += main;
            aux_sum += aux;
            if epoch == 0 {
                log.first_epoch_steps.push(main);
            }
        }
        log.main_loss.push(main_sum / n);
        log.aux_loss.push(aux_sum / n);
    }
    Ok((model, log))
}
