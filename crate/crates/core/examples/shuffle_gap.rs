//! Trains NS and NILE (Independent) processors on oracle triples and prints
//! Full vs Shuffled accuracy on the test split.
//!
//! `cargo run --release -p nile --example shuffle_gap -- [key=value ...]`
//! Keys: entities, categories, templates, per_label, seed, epochs, lr, d,
//! emb_scale, proj_scale, head_scale.

use std::collections::HashMap;
use std::time::Instant;

use nile::corpus::{generate_synthetic_corpus, WorldConfig};
use nile::generator::oracle_triple;
use nile::probes::{erasure_probe, shuffle_probe, Condition, Probed, ShuffleMode};
use nile::processor::{train_processor, Architecture, ProcessorConfig, Variant};
use nile::textmodel::Vocabulary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| {
            a.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect();
    let get = |k: &str, d: f64| args.get(k).map_or(d, |v| v.parse().expect("number"));

    let base = WorldConfig::default();
    let world = WorldConfig {
        num_entities: get("entities", base.num_entities as f64) as usize,
        num_categories: get("categories", base.num_categories as f64) as usize,
        templates_per_label: get("templates", base.templates_per_label as f64) as usize,
        instances_per_label: get("per_label", base.instances_per_label as f64) as usize,
        seed: get("seed", base.seed as f64) as u64,
        ..base
    };
    let corpus = generate_synthetic_corpus(&world)?;
    let vocab = Vocabulary::build(corpus.train.iter().flat_map(|i| {
        [
            i.premise.as_str(),
            i.hypothesis.as_str(),
            i.gold_explanation.as_deref().unwrap_or(""),
        ]
    }));
    let oracle = |d: &nile::Dataset| -> nile::Result<Vec<_>> {
        d.iter().map(|i| oracle_triple(&corpus.world, i)).collect()
    };
    let train_t = oracle(&corpus.train)?;
    let test_t = oracle(&corpus.test)?;

    for variant in [Variant::Ns, Variant::Nile] {
        let mut cfg = ProcessorConfig::new(Architecture::Independent, variant);
        cfg.seed = get("seed", 7.0) as u64;
        cfg.epochs = get("epochs", cfg.epochs as f64) as usize;
        cfg.sgd.learning_rate = get("lr", cfg.sgd.learning_rate);
        cfg.d = get("d", cfg.d as f64) as usize;
        cfg.init.embedding_scale = get("emb_scale", 1.0);
        cfg.init.projection_scale = get("proj_scale", 1.0);
        cfg.init.head_scale = get("head_scale", 0.1);
        let t0 = Instant::now();
        let (model, log) = train_processor(&cfg, &corpus.train, &train_t, &vocab)?;
        let full = erasure_probe(
            Probed::Processor(&model),
            &corpus.test,
            &test_t,
            Condition::Full,
        )?;
        let shuf = shuffle_probe(
            Probed::Processor(&model),
            &corpus.test,
            &test_t,
            13,
            ShuffleMode::WholeTriple,
        )?;
        println!(
            "{:<18} full {:.4} shuffled {:.4} ratio {:.3}  final main {:.4} aux {:.4}  ({:.1}s)",
            cfg.describe(),
            full.accuracy,
            shuf.accuracy,
            shuf.accuracy / full.accuracy,
            log.main_loss.last().unwrap_or(&f64::NAN),
            log.aux_loss.last().unwrap_or(&f64::NAN),
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
