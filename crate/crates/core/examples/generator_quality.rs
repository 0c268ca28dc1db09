//! Trains the three label-specific generators on the default synthetic world
//! and reports, per label, how often the generated explanation equals the
//! gold one on test instances of that label, plus the accuracy of an NS/NILE processor fed generated triples.
//!
//! `cargo run --release -p nile --example generator_quality -- [epochs] [d]`

use std::time::Instant;

use nile::corpus::{generate_synthetic_corpus, WorldConfig};
use nile::eval::{label_accuracy, predict_dataset};
use nile::generator::{
    generate_triple, oracle_triple, train_generator, GeneratorConfig, GeneratorScope,
};
use nile::processor::{train_processor, Architecture, ProcessorConfig, Variant};
use nile::textmodel::Vocabulary;
use nile::Label;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut cfg = GeneratorConfig::default();
    if let Some(e) = args.next() {
        cfg.epochs = e.parse()?;
    }
    if let Some(d) = args.next() {
        cfg.d = d.parse()?;
    }
    let corpus = generate_synthetic_corpus(&WorldConfig::default())?;
    let vocab = Vocabulary::build(corpus.train.iter().flat_map(|i| {
        [
            i.premise.as_str(),
            i.hypothesis.as_str(),
            i.gold_explanation.as_deref().unwrap_or(""),
        ]
    }));
    let t0 = Instant::now();
    let gens = Label::ALL.map(|l| {
        train_generator(GeneratorScope::Label(l), &corpus.train, &vocab, &cfg).map(|g| g.0)
    });
    let [e, c, n] = gens;
    let (e, c, n) = (e?, c?, n?);
    println!("trained generators in {:.1}s", t0.elapsed().as_secs_f64());
    let gen = |d: &nile::Dataset| {
        d.iter()
            .map(|i| generate_triple([&e, &c, &n], &i.premise, &i.hypothesis))
            .collect::<Vec<_>>()
    };
    let test_g = gen(&corpus.test);
    for l in Label::ALL {
        let gold: Vec<_> = corpus
            .test
            .iter()
            .zip(&test_g)
            .filter(|(i, _)| i.label == l)
            .collect();
        let hits = gold
            .iter()
            .filter(|(i, t)| oracle_triple(&corpus.world, i).unwrap().get(l) == t.get(l))
            .count();
        println!(
            "{l:<14} exact match on gold-{l} instances {:.3}",
            hits as f64 / gold.len() as f64
        );
    }
    let train_g = gen(&corpus.train);
    for v in [Variant::Ns, Variant::Nile] {
        let pc = ProcessorConfig::new(Architecture::Independent, v);
        let (m, _) = train_processor(&pc, &corpus.train, &train_g, &vocab)?;
        let acc = label_accuracy(&predict_dataset(&m, &corpus.test, &test_g)?, &corpus.test)?;
        println!(
            "{} on generated triples: test accuracy {acc:.4}",
            pc.describe()
        );
    }
    Ok(())
}
