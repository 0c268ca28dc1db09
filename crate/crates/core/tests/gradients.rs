//! Every hand-written backward pass against central finite differences.

use nile::baselines::{classifier_loss, ETPA_HEADS, POSTHOC_HEADS};
use nile::generator::{build_training_sequence, LmParams};
use nile::processor::{
    example_loss, Architecture, ProcessorConfig, ProcessorModel, TrainExample, Variant,
};
use nile::seed::rng;
use nile::textmodel::{flatten, grad_check, unflatten, InitConfig, ScorerParams, Vocabulary};
use nile::{Label, Result};

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn vocab() -> Vocabulary {
    Vocabulary::build([
        "sleeping in the park is the small dog",
        "a animal is sleeping",
        "the dog is running",
        "a dog is a animal",
        "the dog cannot be sleeping and running at the same time",
        "sleeping does not imply tired",
    ])
}

/// Larger-than-default init so activations sit away from saturation and
/// gradients are not vanishingly small.
fn lively_init() -> InitConfig {
    InitConfig {
        embedding_scale: 0.7,
        projection_scale: 1.5,
        head_scale: 0.8,
    }
}

fn processor(arch: Architecture, variant: Variant) -> ProcessorModel {
    let mut cfg = ProcessorConfig::new(arch, variant);
    cfg.d = 5;
    cfg.seed = 11;
    cfg.init = lively_init();
    ProcessorModel::new(cfg, vocab()).unwrap()
}

fn example(m: &ProcessorModel, gold: Label) -> TrainExample {
    let v = &m.vocab;
    TrainExample {
        ctx: m.config.variant.uses_instance().then(|| {
            v.encode(
                "premise: sleeping in the park is the small dog hypothesis: the dog is running",
            )
        }),
        slots: [
            v.encode("a dog is a animal"),
            v.encode("the dog cannot be sleeping and running at the same time"),
            v.encode("sleeping does not imply tired"),
        ],
        gold,
    }
}

fn check_processor(arch: Architecture, variant: Variant, gold: Label, negatives: &[&str]) -> f64 {
    let model = processor(arch, variant);
    let ex = example(&model, gold);
    let negs: Vec<_> = negatives.iter().map(|n| model.vocab.encode(n)).collect();
    let lambda = model.config.aux_weight;
    let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut m = model.clone();
        unflatten(&mut m.params, x);
        let (main, aux, g) = example_loss(&m, &ex, &negs)?;
        Ok((main + lambda * aux, flatten(&g)))
    };
    grad_check(f, &flatten(&model.params), EPS, usize::MAX, &mut rng(3)).unwrap()
}

#[test]
fn independent_gradients() {
    for v in [Variant::Ph, Variant::Ns] {
        for gold in Label::ALL {
            let err = check_processor(Architecture::Independent, v, gold, &[]);
            assert!(err < TOL, "{v:?} {gold}: {err}");
        }
    }
}

#[test]
fn aggregate_gradients() {
    for v in [Variant::Ph, Variant::Ns] {
        for gold in Label::ALL {
            let err = check_processor(Architecture::Aggregate, v, gold, &[]);
            assert!(err < TOL, "{v:?} {gold}: {err}");
        }
    }
}

#[test]
fn append_gradients() {
    for v in [Variant::Ph, Variant::Ns] {
        for gold in Label::ALL {
            let err = check_processor(Architecture::Append, v, gold, &[]);
            assert!(err < TOL, "{v:?} {gold}: {err}");
        }
    }
}

#[test]
fn negative_sampling_gradients() {
    let negs = ["a dog is a animal sleeping", "the small dog is a animal"];
    for arch in [Architecture::Independent, Architecture::Aggregate] {
        for gold in Label::ALL {
            let err = check_processor(arch, Variant::Nile, gold, &negs);
            assert!(err < TOL, "{arch:?} {gold}: {err}");
        }
    }
}

#[test]
fn negative_sampling_gradients_with_other_weight() {
    let mut model = processor(Architecture::Independent, Variant::Nile);
    model.config.aux_weight = 0.35;
    let ex = example(&model, Label::Contradict);
    let negs = vec![model
        .vocab
        .encode("the dog cannot be running and sleeping at the same time")];
    let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut m = model.clone();
        unflatten(&mut m.params, x);
        let (main, aux, g) = example_loss(&m, &ex, &negs)?;
        Ok((main + 0.35 * aux, flatten(&g)))
    };
    let err = grad_check(f, &flatten(&model.params), EPS, usize::MAX, &mut rng(4)).unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn generator_masked_loss_gradients() {
    let v = vocab();
    let (tokens, mask) = build_training_sequence(
        &v,
        "sleeping in the park is the small dog",
        "a animal is sleeping",
        "a dog is a animal",
    )
    .unwrap();
    let params = LmParams::new(v.len(), 4, 8, 0.5, 9);
    let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut p = params.clone();
        unflatten(&mut p, x);
        let (l, g) = p.loss(&tokens, &mask);
        Ok((l, flatten(&g)))
    };
    let err = grad_check(f, &flatten(&params), EPS, 400, &mut rng(5)).unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn generator_loss_ignores_unmasked_positions() {
    let v = vocab();
    let (tokens, mask) = build_training_sequence(
        &v,
        "the dog is running",
        "a animal is sleeping",
        "a dog is a animal",
    )
    .unwrap();
    let p = LmParams::new(v.len(), 4, 8, 0.5, 9);
    let (base, _) = p.loss(&tokens, &mask);
    // A prompt token more than `window` positions before the first target
    // is outside every masked context, so replacing it cannot move the loss.
    let first = mask.iter().position(|&m| m).unwrap();
    assert!(first > 8 + 1);
    let mut edited = tokens.clone();
    edited[1] = v.id("park");
    assert_ne!(edited[1], tokens[1]);
    let (again, _) = p.loss(&edited, &mask);
    assert_eq!(base, again);
    let none = vec![false; tokens.len()];
    let (zero, g) = p.loss(&tokens, &none);
    assert_eq!(zero, 0.0);
    assert!(flatten(&g).iter().all(|&x| x == 0.0));
}

fn check_classifier(heads: &[&str; 3]) {
    let v = vocab();
    let params = ScorerParams::new(v.len(), 5, heads, &lively_init(), &mut rng(6));
    let seq = v.encode("a dog is a animal");
    for gold in Label::ALL {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let mut p = params.clone();
            unflatten(&mut p, x);
            let (l, g) = classifier_loss(&p, heads, &seq, gold)?;
            Ok((l, flatten(&g)))
        };
        let err = grad_check(f, &flatten(&params), EPS, usize::MAX, &mut rng(7)).unwrap();
        assert!(err < TOL, "{heads:?} {gold}: {err}");
    }
}

#[test]
fn posthoc_classifier_gradients() {
    check_classifier(&POSTHOC_HEADS);
}

#[test]
fn etpa_classifier_gradients() {
    check_classifier(&ETPA_HEADS);
}
