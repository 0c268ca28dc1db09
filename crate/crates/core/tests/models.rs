//! Training behaviour of the generators, processors and baselines on the
//! synthetic world.

use std::collections::HashSet;

use nile::baselines::{
    train_etpa, train_posthoc, ClassifierConfig, EtpaClassifierInput, EtpaModel, PosthocModel,
};
use nile::corpus::{generate_synthetic_corpus, SyntheticCorpus, WorldConfig};
use nile::generator::{
    oracle_triple, train_generator, GeneratorConfig, GeneratorModel, GeneratorScope,
};
use nile::processor::{
    sample_negative_explanations, train_processor, Architecture, ProcessorConfig, ProcessorModel,
    Variant,
};
use nile::textmodel::{Params, Vocabulary};
use nile::{Dataset, Label};

fn corpus(templates: usize) -> SyntheticCorpus {
    generate_synthetic_corpus(&WorldConfig {
        templates_per_label: templates,
        ..WorldConfig::default()
    })
    .unwrap()
}

fn vocab(d: &Dataset) -> Vocabulary {
    Vocabulary::build(d.iter().flat_map(|i| {
        [
            i.premise.as_str(),
            i.hypothesis.as_str(),
            i.gold_explanation.as_deref().unwrap_or(""),
        ]
    }))
}

/// Fraction of `label`-gold instances whose generated explanation equals
/// the gold one.
fn exact_match(g: &GeneratorModel, d: &Dataset, label: Label) -> f64 {
    let gold: Vec<_> = d.iter().filter(|i| i.label == label).collect();
    let hits = gold
        .iter()
        .filter(|i| {
            Some(g.generate(&i.premise, &i.hypothesis).text.as_str())
                == i.gold_explanation.as_deref()
        })
        .count();
    hits as f64 / gold.len() as f64
}

#[test]
fn generators_learn_a_single_template_world() {
    let c = corpus(1);
    let v = vocab(&c.train);
    let cfg = GeneratorConfig {
        seed: 3,
        ..GeneratorConfig::default()
    };
    let mut total = 0.0;
    for l in Label::ALL {
        let (g, curve) = train_generator(GeneratorScope::Label(l), &c.train, &v, &cfg).unwrap();
        assert!(curve.last().unwrap() < &curve[0], "{l}: loss did not fall");
        let m = exact_match(&g, &c.test, l);
        total += m;
        if l == Label::Entail {
            assert!(m >= 0.95, "entailment exact match {m}");
        }
    }
    assert!(total / 3.0 >= 0.8, "mean exact match {}", total / 3.0);
}

#[test]
fn generator_decoding_is_deterministic_and_checkpointable() {
    let c = corpus(2);
    let v = vocab(&c.train);
    let cfg = GeneratorConfig {
        epochs: 3,
        seed: 1,
        ..GeneratorConfig::default()
    };
    let (g, _) =
        train_generator(GeneratorScope::Label(Label::Neutral), &c.train, &v, &cfg).unwrap();
    let (g2, _) =
        train_generator(GeneratorScope::Label(Label::Neutral), &c.train, &v, &cfg).unwrap();
    assert_eq!(g.params.checksum(), g2.params.checksum());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    g.save(&path).unwrap();
    let back = GeneratorModel::load(&path).unwrap();
    assert_eq!(back, g);
    for i in c.test.iter().take(20) {
        assert_eq!(
            g.generate(&i.premise, &i.hypothesis),
            back.generate(&i.premise, &i.hypothesis)
        );
    }
}

#[test]
fn posthoc_fits_its_training_data() {
    let c = corpus(3);
    let v = vocab(&c.train);
    let m = train_posthoc(&c.train, &v, &ClassifierConfig::default()).unwrap();
    let acc = c
        .train
        .iter()
        .filter(|i| m.predict(i).unwrap().0 == i.label)
        .count() as f64
        / c.train.len() as f64;
    assert!(acc >= 0.95, "{acc}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("posthoc.json");
    m.save(&path).unwrap();
    let back = PosthocModel::load(&path).unwrap();
    assert_eq!(back.params.checksum(), m.params.checksum());
}

#[test]
fn etpa_classifier_reads_gold_explanations() {
    let c = corpus(3);
    let v = vocab(&c.train);
    let gen = GeneratorConfig {
        epochs: 5,
        ..GeneratorConfig::default()
    };
    let m = train_etpa(
        &c.train,
        &v,
        &gen,
        &ClassifierConfig::default(),
        EtpaClassifierInput::Gold,
    )
    .unwrap();
    let acc = c
        .train
        .iter()
        .filter(|i| {
            m.classify(i.gold_explanation.as_deref().unwrap())
                .unwrap()
                .0
                == i.label
        })
        .count() as f64
        / c.train.len() as f64;
    assert!(acc >= 0.95, "{acc}");
    let dir = tempfile::tempdir().unwrap();
    let (gp, cp) = (dir.path().join("g.json"), dir.path().join("c.json"));
    m.save(&gp, &cp).unwrap();
    let back = EtpaModel::load(&gp, &cp).unwrap();
    assert_eq!(back.clf.checksum(), m.clf.checksum());
}

#[test]
fn negatives_share_the_label_but_not_the_text() {
    let c = corpus(3);
    for inst in c.train.iter().take(30) {
        let negs = sample_negative_explanations(&c.train, inst, inst.label, 2, 9).unwrap();
        assert_eq!(negs.len(), 2);
        let own = inst.gold_explanation.as_deref().unwrap();
        let same_label: HashSet<&str> = c
            .train
            .iter()
            .filter(|o| o.label == inst.label)
            .filter_map(|o| o.gold_explanation.as_deref())
            .collect();
        for n in &negs {
            assert_ne!(n, own);
            assert!(same_label.contains(n.as_str()));
        }
        assert_eq!(
            negs,
            sample_negative_explanations(&c.train, inst, inst.label, 2, 9).unwrap()
        );
    }
    let first = &c.train.instances[0];
    let wrong = Label::ALL.into_iter().find(|&l| l != first.label).unwrap();
    assert!(sample_negative_explanations(&c.train, first, wrong, 2, 0).is_err());
    assert!(sample_negative_explanations(&c.train, first, first.label, 10_000, 0).is_err());
}

fn quick_processor(arch: Architecture, variant: Variant, c: &SyntheticCorpus) -> ProcessorModel {
    let v = vocab(&c.train);
    let triples: Vec<_> = c
        .train
        .iter()
        .map(|i| oracle_triple(&c.world, i).unwrap())
        .collect();
    let mut cfg = ProcessorConfig::new(arch, variant);
    cfg.epochs = 150;
    cfg.seed = 4;
    train_processor(&cfg, &c.train, &triples, &v).unwrap().0
}

/// Full-input variants only: with every slot filled by a plausible
/// explanation, nothing but the instance tells the slots apart.
#[test]
fn every_architecture_learns_from_oracle_triples() {
    let c = corpus(3);
    let test_triples: Vec<_> = c
        .test
        .iter()
        .map(|i| oracle_triple(&c.world, i).unwrap())
        .collect();
    for (arch, variant) in [
        (Architecture::Independent, Variant::Ns),
        (Architecture::Aggregate, Variant::Ns),
        (Architecture::Append, Variant::Ns),
        (Architecture::Aggregate, Variant::Nile),
    ] {
        let m = quick_processor(arch, variant, &c);
        let acc = c
            .test
            .iter()
            .zip(&test_triples)
            .filter(|(i, t)| m.predict(i, t).unwrap().0 == i.label)
            .count() as f64
            / c.test.len() as f64;
        assert!(acc >= 0.9, "{arch:?}/{variant:?}: {acc}");
    }
}

#[test]
fn processor_training_is_reproducible_and_checkpoints_exactly() {
    let c = corpus(2);
    let a = quick_processor(Architecture::Independent, Variant::Nile, &c);
    let b = quick_processor(Architecture::Independent, Variant::Nile, &c);
    assert_eq!(a.checkpoint().to_bytes(), b.checkpoint().to_bytes());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    a.save(&path).unwrap();
    let back = ProcessorModel::load(&path).unwrap();
    assert_eq!(back.checkpoint().to_bytes(), a.checkpoint().to_bytes());
    let t = oracle_triple(&c.world, &c.test.instances[0]).unwrap();
    let inst = &c.test.instances[0];
    assert_eq!(
        a.predict(inst, &t).unwrap().1.as_array().map(f64::to_bits),
        back.predict(inst, &t)
            .unwrap()
            .1
            .as_array()
            .map(f64::to_bits)
    );
}

#[test]
fn invalid_processor_configs_are_rejected() {
    let v = Vocabulary::build(["a b c"]);
    let nile_append = ProcessorConfig::new(Architecture::Append, Variant::Nile);
    assert!(ProcessorModel::new(nile_append, v.clone()).is_err());
    let mut ns_with_negs = ProcessorConfig::new(Architecture::Independent, Variant::Ns);
    ns_with_negs.negatives_per_instance = Some(2);
    assert!(ProcessorModel::new(ns_with_negs, v.clone()).is_err());
    let mut nile_no_negs = ProcessorConfig::new(Architecture::Independent, Variant::Nile);
    nile_no_negs.negatives_per_instance = Some(0);
    assert!(ProcessorModel::new(nile_no_negs, v).is_err());
}
