//! Synthetic world, e-SNLI reader and the non-informative filter.

use std::collections::HashSet;

use nile::corpus::{
    filter_noninformative, filter_split, generate_synthetic_corpus, is_noninformative, load_esnli,
    write_esnli, Lexicon, WorldConfig,
};
use nile::textmodel::{tokenize, Vocabulary};
use nile::{Dataset, Instance, Label, Split};
use proptest::prelude::*;

/// Independent rule checker: the label follows from the premise and
/// hypothesis by the world's logic (is-a, mutual exclusion, unsupported
/// detail), read off with plain string splitting.
fn oracle_label(lex: &Lexicon, p: &str, h: &str) -> Option<Label> {
    let pw: Vec<&str> = p.split(' ').collect();
    let hw: Vec<&str> = h.split(' ').collect();
    if pw.len() != 8 {
        return None;
    }
    let (activity, entity) = (pw[0], pw[7]);
    let e = lex.entities.iter().position(|x| x == entity)?;
    let v = lex.activities.iter().position(|x| x == activity)?;
    let category = &lex.categories[e % lex.categories.len()];
    let other = &lex.activities[v ^ 1];
    match hw.as_slice() {
        ["a", c, "is", a] if c == category && *a == activity => Some(Label::Entail),
        ["the", x, "is", a] if *x == entity && a == other => Some(Label::Contradict),
        ["the", x, "is", a, "because", "it", "is", d]
            if *x == entity && *a == activity && lex.details.iter().any(|w| w == d) =>
        {
            Some(Label::Neutral)
        }
        _ => None,
    }
}

#[test]
fn labels_follow_the_world_rules() {
    let c = generate_synthetic_corpus(&WorldConfig::default()).unwrap();
    for (split, ood) in [
        (&c.train, false),
        (&c.dev, false),
        (&c.test, false),
        (&c.ood, true),
    ] {
        let lex = c.world.lexicon(ood);
        for inst in split.iter() {
            assert_eq!(
                oracle_label(lex, &inst.premise, &inst.hypothesis),
                Some(inst.label),
                "{}: {} / {}",
                inst.id,
                inst.premise,
                inst.hypothesis
            );
        }
    }
}

#[test]
fn default_world_is_balanced_and_large_enough() {
    let c = generate_synthetic_corpus(&WorldConfig::default()).unwrap();
    assert_eq!(c.train.label_counts(), [100, 100, 100]);
    assert_eq!(c.test.label_counts(), [50, 50, 50]);
    assert_eq!(c.ood.len(), 150);
    assert!(c.train.iter().all(|i| i.gold_explanation.is_some()));
}

#[test]
fn generation_is_deterministic_per_seed() {
    let a = generate_synthetic_corpus(&WorldConfig::default()).unwrap();
    let b = generate_synthetic_corpus(&WorldConfig::default()).unwrap();
    assert_eq!(a.train.to_jsonl(), b.train.to_jsonl());
    let other = WorldConfig {
        seed: 8,
        ..WorldConfig::default()
    };
    let c = generate_synthetic_corpus(&other).unwrap();
    assert_ne!(a.train.to_jsonl(), c.train.to_jsonl());
}

fn vocab_of(d: &Dataset) -> Vocabulary {
    Vocabulary::build(d.iter().flat_map(|i| {
        [
            i.premise.as_str(),
            i.hypothesis.as_str(),
            i.gold_explanation.as_deref().unwrap_or(""),
        ]
    }))
}

fn ood_coverage(shift: f64) -> f64 {
    let c = generate_synthetic_corpus(&WorldConfig {
        ood_vocabulary_shift: shift,
        ..WorldConfig::default()
    })
    .unwrap();
    let known: HashSet<String> = vocab_of(&c.train).tokens().iter().cloned().collect();
    let toks: Vec<String> = c
        .ood
        .iter()
        .flat_map(|i| {
            tokenize(&i.premise)
                .into_iter()
                .chain(tokenize(&i.hypothesis))
        })
        .collect();
    toks.iter().filter(|t| known.contains(*t)).count() as f64 / toks.len() as f64
}

#[test]
fn ood_vocabulary_shift_controls_overlap() {
    assert_eq!(ood_coverage(0.0), 1.0);
    let half = ood_coverage(0.5);
    assert!(half < 1.0 && half > 0.3, "{half}");
    assert!(ood_coverage(1.0) < half);
}

#[test]
fn synthetic_explanations_are_informative() {
    let c = generate_synthetic_corpus(&WorldConfig::default()).unwrap();
    let (kept, dropped) = filter_noninformative(&c.train).unwrap();
    assert_eq!(dropped, 0);
    assert_eq!(kept.len(), c.train.len());
}

fn inst(id: &str, p: &str, h: &str, l: Label, t: Option<&str>) -> Instance {
    Instance {
        id: id.into(),
        premise: p.into(),
        hypothesis: h.into(),
        label: l,
        gold_explanation: t.map(str::to_string),
    }
}

/// Six rows: two explanations contain the premise or hypothesis verbatim
/// (ignoring case), four do not.
fn filter_fixture() -> Dataset {
    Dataset::new(
        Split::Train,
        vec![
            inst(
                "r1",
                "A man plays a guitar.",
                "A person plays music.",
                Label::Entail,
                Some("A guitar is an instrument."),
            ),
            inst(
                "r2",
                "Two dogs run.",
                "Animals are moving.",
                Label::Entail,
                Some("Dogs are animals and running is moving."),
            ),
            inst(
                "r3",
                "A woman sleeps.",
                "A woman is awake.",
                Label::Contradict,
                Some("a woman is awake. That cannot hold while she sleeps."),
            ),
            inst(
                "r4",
                "Kids play outside.",
                "Kids play soccer.",
                Label::Neutral,
                Some("Not all games are soccer."),
            ),
            inst(
                "r5",
                "The cat naps.",
                "A pet rests.",
                Label::Entail,
                Some("THE CAT NAPS. Cats are pets and napping is resting."),
            ),
            inst(
                "r6",
                "A boy eats.",
                "A boy is hungry.",
                Label::Neutral,
                Some("Eating does not imply hunger."),
            ),
        ],
    )
    .unwrap()
}

#[test]
fn filter_fixture_drops_exactly_the_two_copies() {
    let (kept, dropped) = filter_noninformative(&filter_fixture()).unwrap();
    assert_eq!(dropped, 2);
    let ids: Vec<&str> = kept.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, ["r1", "r2", "r4", "r6"]);
}

#[test]
fn filter_requires_explanations_on_train_only() {
    let missing = vec![inst("x", "A man runs.", "He moves.", Label::Entail, None)];
    let train = Dataset::new(Split::Train, missing.clone()).unwrap();
    assert!(filter_noninformative(&train).is_err());
    let test = Dataset::new(Split::Test, missing).unwrap();
    let (kept, dropped) = filter_split(&test, false).unwrap();
    assert_eq!((kept.len(), dropped), (1, 0));
}

proptest! {
    #[test]
    fn filter_is_idempotent(rows in prop::collection::vec(("[a-c ]{1,6}", "[a-c ]{1,6}", "[a-c ]{1,8}"), 1..12)) {
        let instances: Vec<Instance> = rows
            .iter()
            .enumerate()
            .filter(|(_, (p, h, t))| !p.trim().is_empty() && !h.trim().is_empty() && !t.trim().is_empty())
            .map(|(i, (p, h, t))| inst(&format!("i{i}"), p, h, Label::ALL[i % 3], Some(t)))
            .collect();
        prop_assume!(!instances.is_empty());
        let d = Dataset::new(Split::Train, instances).unwrap();
        let (once, dropped) = filter_noninformative(&d).unwrap();
        prop_assert_eq!(once.len() + dropped, d.len());
        prop_assert!(once.iter().all(|i| !is_noninformative(i, i.gold_explanation.as_deref().unwrap())));
        let (twice, dropped2) = filter_noninformative(&once).unwrap();
        prop_assert_eq!(dropped2, 0);
        prop_assert_eq!(twice, once);
    }
}

const ESNLI: &str = "\
pairID,gold_label,Sentence1,Sentence2,Explanation_1
p1,entailment,\"A man, in a hat, sings.\",A person sings.,\"A man is a person;
singing is singing.\"
p2,contradiction,\"She said \"\"hi\"\".\",She is silent.,\"Saying \"\"hi\"\" is not
silent.\"
p3,-,Nobody agreed.,Something.,Skipped row.
p4,neutral,A dog runs.,A dog runs home.,Not every run ends at home.
";

#[test]
fn esnli_quoted_multiline_fields_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("esnli_train.csv");
    std::fs::write(&path, ESNLI).unwrap();
    let (d, skipped) = load_esnli(&path, Split::Train).unwrap();
    assert_eq!(skipped, 1);
    assert_eq!(d.len(), 3);
    assert_eq!(d.instances[0].premise, "A man, in a hat, sings.");
    assert_eq!(
        d.instances[0].gold_explanation.as_deref(),
        Some("A man is a person;\nsinging is singing.")
    );
    assert_eq!(d.instances[1].premise, "She said \"hi\".");
    assert_eq!(
        d.instances[1].gold_explanation.as_deref(),
        Some("Saying \"hi\" is not\nsilent.")
    );
    assert_eq!(d.instances[1].id, "p2");

    let out = dir.path().join("again.csv");
    write_esnli(&d, &out).unwrap();
    let (back, skipped) = load_esnli(&out, Split::Train).unwrap();
    assert_eq!(skipped, 0);
    assert_eq!(back, d);
    let out2 = dir.path().join("again2.csv");
    write_esnli(&back, &out2).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn esnli_missing_file_names_the_path() {
    let err = load_esnli(
        std::path::Path::new("/nonexistent/esnli_dev.csv"),
        Split::Dev,
    )
    .unwrap_err();
    assert!(err.to_string().contains("/nonexistent/esnli_dev.csv"));
}

#[test]
fn jsonl_round_trip_keeps_field_order() {
    let d = filter_fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    d.write_jsonl(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let first = text.lines().next().unwrap();
    let keys: Vec<usize> = [
        "\"id\"",
        "\"premise\"",
        "\"hypothesis\"",
        "\"label\"",
        "\"explanation\"",
    ]
    .iter()
    .map(|k| first.find(k).unwrap())
    .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]), "{first}");
    assert_eq!(Dataset::read_jsonl(&path, Split::Train).unwrap(), d);
}
