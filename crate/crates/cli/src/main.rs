//! `nile`: experiment harness. Every subcommand reads one TOML config (plus
//! flag overrides), works inside one output root, and writes a manifest
//! next to each artifact.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric error.

mod artifacts;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nile::baselines::{
    etpa_pipeline, posthoc_pipeline, train_etpa, train_posthoc, EtpaModel, PosthocModel,
};
use nile::corpus::{filter_split, generate_synthetic_corpus, load_esnli, Dataset, Split};
use nile::error::ErrorKind;
use nile::eval::{
    explanation_metrics, format_eval_table, label_accuracy, predict_dataset, read_annotations,
    transfer_eval, EvalRow,
};
use nile::generator::{
    generate_triple, oracle_triple, train_generator, GeneratorModel, GeneratorScope,
};
use nile::probes::{
    erasure_probe, format_table, read_report, shuffle_probe, write_report, Condition, Probed,
    ShuffleMode,
};
use nile::processor::{
    train_processor, Architecture, PredictionRecord, ProcessorConfig, ProcessorModel, Variant,
};
use nile::seed::derive_seed;
use nile::textmodel::Vocabulary;
use nile::{Label, NileError, Result};
use serde::{Deserialize, Serialize};

use artifacts::{jsonl_bytes, split_name, triple_bytes, Layout, Run, TripleSource};
use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "nile", version, about = "NLI with label-specific explanations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides NILE_OUT and the config's `paths.root`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed all module seeds derive from.
    #[arg(long, global = true)]
    global_seed: Option<u64>,
    /// Epochs for every trainer.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// SGD learning rate for every trainer.
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    /// Gradient-norm clip for every trainer; 0 disables it.
    #[arg(long, global = true)]
    clip_norm: Option<f64>,
}

#[derive(Debug, Args, Clone)]
struct ProcessorArgs {
    #[arg(long)]
    architecture: Option<Architecture>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Negatives per instance for the negative-sampling variant.
    #[arg(long)]
    negatives: Option<usize>,
    /// Weight of the negative-sampling loss.
    #[arg(long)]
    aux_weight: Option<f64>,
    /// Which triples the processor is trained and evaluated on.
    #[arg(long, value_enum, default_value = "generated")]
    triples: TripleSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Processor,
    Posthoc,
    Etpa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineKind {
    Posthoc,
    Etpa,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the corpus splits, vocabulary and (synthetic only) oracle triples.
    GenCorpus {
        /// Load `esnli_{train,dev,test}.csv` from this directory instead of
        /// generating the synthetic world.
        #[arg(long)]
        esnli_dir: Option<PathBuf>,
        /// Also filter non-informative explanations out of dev/test.
        #[arg(long)]
        filter_eval_splits: bool,
    },
    /// Train the three label-specific generators and dump their triples.
    TrainGenerators,
    /// Train an explanation processor.
    TrainProcessor(ProcessorArgs),
    /// Train the post-hoc or explain-then-predict baseline.
    TrainBaseline {
        #[arg(long, value_enum)]
        kind: BaselineKind,
    },
    /// Label accuracy on dev and test, plus explanation metrics when an
    /// annotation file is given.
    Evaluate {
        #[arg(long, value_enum, default_value = "processor")]
        model: ModelKind,
        #[command(flatten)]
        processor: ProcessorArgs,
        /// Binary explanation judgements for the start of the test split.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// How many test instances the annotations cover.
        #[arg(long)]
        n_eval: Option<usize>,
    },
    /// Erasure and shuffle probes on the test split.
    Probe {
        #[arg(long, value_enum, default_value = "processor")]
        model: ModelKind,
        #[command(flatten)]
        processor: ProcessorArgs,
        /// One condition; every applicable one when omitted.
        #[arg(long)]
        condition: Option<Condition>,
        /// Seed of the shuffle probe (derived from the global seed when omitted).
        #[arg(long)]
        seed: Option<u64>,
        /// Draw each slot from its own donor instead of whole triples.
        #[arg(long)]
        per_slot: bool,
    },
    /// Run the frozen generators and processor on the out-of-domain split.
    Transfer(ProcessorArgs),
    /// Collect every report into one summary table.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenCorpus { .. } => "gen-corpus",
            Command::TrainGenerators => "train-generators",
            Command::TrainProcessor(_) => "train-processor",
            Command::TrainBaseline { .. } => "train-baseline",
            Command::Evaluate { .. } => "evaluate",
            Command::Probe { .. } => "probe",
            Command::Transfer(_) => "transfer",
            Command::Report => "report",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            })
        }
    }
}

fn load_config(common: &Common, command: &Command) -> Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.global_seed {
        c.seed = s;
    }
    if common.epochs.is_some() {
        c.training.epochs = common.epochs;
    }
    if common.learning_rate.is_some() {
        c.training.learning_rate = common.learning_rate;
    }
    if common.clip_norm.is_some() {
        c.training.clip_norm = common.clip_norm;
    }
    if let Command::GenCorpus {
        esnli_dir,
        filter_eval_splits,
    } = command
    {
        if esnli_dir.is_some() {
            c.data.esnli_dir = esnli_dir.clone();
        }
        c.data.filter_eval_splits |= filter_eval_splits;
    }
    let processor_args = match command {
        Command::TrainProcessor(a) | Command::Transfer(a) => Some(a),
        Command::Evaluate { processor, .. } | Command::Probe { processor, .. } => Some(processor),
        _ => None,
    };
    if let Some(a) = processor_args {
        apply_processor_args(&mut c.processor, a);
    }
    c.resolve()
}

fn apply_processor_args(p: &mut ProcessorConfig, a: &ProcessorArgs) {
    if let Some(x) = a.architecture {
        p.architecture = x;
    }
    if let Some(v) = a.variant {
        p.variant = v;
        // A variant switch without an explicit count falls back to the
        // variant's own default number of negatives.
        if a.negatives.is_none() {
            p.negatives_per_instance = None;
        }
    }
    if a.negatives.is_some() {
        p.negatives_per_instance = a.negatives;
    }
    if let Some(w) = a.aux_weight {
        p.aux_weight = w;
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.common, &cli.command)?;
    let layout = Layout::new(config.output_root(cli.common.out.as_deref()), &config);
    let mut run = Run::new(&layout, &config, cli.command.name());
    match &cli.command {
        Command::GenCorpus { .. } => gen_corpus(&mut run)?,
        Command::TrainGenerators => train_generators(&mut run)?,
        Command::TrainProcessor(a) => train_processor_cmd(&mut run, a.triples)?,
        Command::TrainBaseline { kind } => train_baseline(&mut run, *kind)?,
        Command::Evaluate {
            model,
            processor,
            annotations,
            n_eval,
        } => evaluate(
            &mut run,
            *model,
            processor.triples,
            annotations.as_ref(),
            *n_eval,
        )?,
        Command::Probe {
            model,
            processor,
            condition,
            seed,
            per_slot,
        } => probe(
            &mut run,
            *model,
            processor.triples,
            *condition,
            *seed,
            *per_slot,
        )?,
        Command::Transfer(a) => transfer(&mut run, a.triples)?,
        Command::Report => report(&mut run)?,
    }
    for p in &run.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn build_vocab(train: &Dataset) -> Vocabulary {
    Vocabulary::build(train.iter().flat_map(|i| {
        [
            i.premise.as_str(),
            i.hypothesis.as_str(),
            i.gold_explanation.as_deref().unwrap_or(""),
        ]
    }))
}

fn gen_corpus(run: &mut Run) -> Result<()> {
    let config = run.config;
    let filter = config.data.filter_eval_splits;
    let (splits, oracle) = match &config.data.esnli_dir {
        Some(dir) => {
            let mut splits = Vec::new();
            for s in [Split::Train, Split::Dev, Split::Test] {
                let path = dir.join(format!("esnli_{}.csv", split_name(s)));
                let (d, skipped) = load_esnli(&path, s)?;
                run.input(&path)?;
                let (d, dropped) = filter_split(&d, filter)?;
                eprintln!(
                    "{}: {} instances ({skipped} unlabelled skipped, {dropped} non-informative dropped)",
                    split_name(s),
                    d.len()
                );
                splits.push(d);
            }
            (splits, None)
        }
        None => {
            let corpus = generate_synthetic_corpus(&config.world)?;
            let mut splits = Vec::new();
            for s in [Split::Train, Split::Dev, Split::Test, Split::Ood] {
                let (d, _) = filter_split(corpus.split(s), filter)?;
                splits.push(d);
            }
            (splits, Some(corpus.world))
        }
    };
    let vocab = build_vocab(&splits[0]);
    for d in &splits {
        run.write(&run.layout.dataset(d.split), &d.to_jsonl())?;
    }
    let mut vocab_bytes = serde_json::to_vec(&vocab).expect("vocabulary serializes");
    vocab_bytes.push(b'\n');
    run.write(&run.layout.vocab(), &vocab_bytes)?;
    if let Some(world) = oracle {
        for d in &splits {
            let triples = d
                .iter()
                .map(|i| oracle_triple(&world, i))
                .collect::<Result<Vec<_>>>()?;
            run.write(
                &run.layout.triples(TripleSource::Oracle, d.split),
                &triple_bytes(d, &triples),
            )?;
        }
    }
    Ok(())
}

fn generator_config(config: &ExperimentConfig, label: &str) -> nile::generator::GeneratorConfig {
    let mut g = config.generator.clone();
    g.seed = derive_seed(config.generator.seed, label);
    g
}

fn present_splits(run: &Run) -> Vec<Split> {
    [Split::Train, Split::Dev, Split::Test, Split::Ood]
        .into_iter()
        .filter(|&s| s == Split::Train || run.layout.dataset(s).exists())
        .collect()
}

fn load_generators(run: &mut Run) -> Result<[GeneratorModel; 3]> {
    let mut out = Vec::with_capacity(3);
    for l in Label::ALL {
        let path = run.layout.generator(l);
        out.push(GeneratorModel::load(&path)?);
        run.input(&path)?;
    }
    Ok(out
        .try_into()
        .unwrap_or_else(|_| unreachable!("three labels")))
}

fn generated_triples(
    gens: &[GeneratorModel; 3],
    d: &Dataset,
) -> Vec<nile::generator::ExplanationTriple> {
    let [e, c, n] = gens;
    d.iter()
        .map(|i| generate_triple([e, c, n], &i.premise, &i.hypothesis))
        .collect()
}

fn train_generators(run: &mut Run) -> Result<()> {
    let train = run.read_dataset(Split::Train)?;
    let vocab = run.read_vocab()?;
    let mut gens = Vec::with_capacity(3);
    for l in Label::ALL {
        let cfg = generator_config(run.config, l.name());
        let (g, curve) = train_generator(GeneratorScope::Label(l), &train, &vocab, &cfg)?;
        eprintln!(
            "generator {}: final loss {:.4}",
            l.name(),
            curve.last().copied().unwrap_or(f64::NAN)
        );
        run.write(&run.layout.generator(l), &g.checkpoint().to_bytes())?;
        gens.push(g);
    }
    let gens: [GeneratorModel; 3] = gens
        .try_into()
        .unwrap_or_else(|_| unreachable!("three labels"));
    for s in present_splits(run) {
        let d = if s == Split::Train {
            train.clone()
        } else {
            run.read_dataset(s)?
        };
        let triples = generated_triples(&gens, &d);
        run.write(
            &run.layout.triples(TripleSource::Generated, s),
            &triple_bytes(&d, &triples),
        )?;
    }
    Ok(())
}

fn processor_name(config: &ProcessorConfig, source: TripleSource) -> String {
    format!("{}-{}", config.describe(), source.name())
}

fn train_processor_cmd(run: &mut Run, source: TripleSource) -> Result<()> {
    let train = run.read_dataset(Split::Train)?;
    let vocab = run.read_vocab()?;
    let triples = run.read_triples(source, &train)?;
    let cfg = &run.config.processor;
    let (model, log) = train_processor(cfg, &train, &triples, &vocab)?;
    eprintln!(
        "{}: final main loss {:.4}, aux loss {:.4}",
        cfg.describe(),
        log.main_loss.last().copied().unwrap_or(f64::NAN),
        log.aux_loss.last().copied().unwrap_or(f64::NAN)
    );
    let path = run.layout.processor(&processor_name(cfg, source));
    run.write(&path, &model.checkpoint().to_bytes())
}

fn baseline_classifier(
    config: &ExperimentConfig,
    label: &str,
) -> nile::baselines::ClassifierConfig {
    let mut c = config.baseline.classifier.clone();
    c.seed = derive_seed(c.seed, label);
    c
}

fn train_baseline(run: &mut Run, kind: BaselineKind) -> Result<()> {
    let train = run.read_dataset(Split::Train)?;
    let vocab = run.read_vocab()?;
    match kind {
        BaselineKind::Posthoc => {
            let m = train_posthoc(&train, &vocab, &baseline_classifier(run.config, "posthoc"))?;
            run.write(&run.layout.posthoc(), &m.checkpoint().to_bytes())
        }
        BaselineKind::Etpa => {
            let m = train_etpa(
                &train,
                &vocab,
                &generator_config(run.config, "etpa"),
                &baseline_classifier(run.config, "etpa"),
                run.config.baseline.etpa_input.into(),
            )?;
            let (gp, cp) = run.layout.etpa();
            m.save(&gp, &cp)?;
            run.output(&gp)?;
            run.output(&cp)
        }
    }
}

/// A trained model ready to label a split.
enum Loaded {
    Processor(ProcessorModel, TripleSource),
    Posthoc(PosthocModel, TripleSource),
    Etpa(EtpaModel),
}

impl Loaded {
    fn load(run: &mut Run, kind: ModelKind, source: TripleSource) -> Result<(Self, String)> {
        Ok(match kind {
            ModelKind::Processor => {
                let name = processor_name(&run.config.processor, source);
                let path = run.layout.processor(&name);
                let m = ProcessorModel::load(&path)?;
                run.input(&path)?;
                (Loaded::Processor(m, source), name)
            }
            ModelKind::Posthoc => {
                let path = run.layout.posthoc();
                let m = PosthocModel::load(&path)?;
                run.input(&path)?;
                (
                    Loaded::Posthoc(m, source),
                    format!("posthoc-{}", source.name()),
                )
            }
            ModelKind::Etpa => {
                let (gp, cp) = run.layout.etpa();
                let m = EtpaModel::load(&gp, &cp)?;
                run.input(&gp)?;
                run.input(&cp)?;
                (Loaded::Etpa(m), "etpa".to_string())
            }
        })
    }

    fn predict(&self, run: &mut Run, d: &Dataset) -> Result<Vec<PredictionRecord>> {
        match self {
            Loaded::Processor(m, source) => {
                let triples = run.read_triples(*source, d)?;
                predict_dataset(m, d, &triples)
            }
            Loaded::Posthoc(m, source) => {
                let triples = run.read_triples(*source, d)?;
                d.iter()
                    .zip(&triples)
                    .map(|(i, t)| {
                        let x = posthoc_pipeline(m, i, t)?;
                        Ok(PredictionRecord::new(
                            &i.id,
                            x.label,
                            &x.scores,
                            &x.explanation,
                        ))
                    })
                    .collect()
            }
            Loaded::Etpa(m) => d
                .iter()
                .map(|i| {
                    let x = etpa_pipeline(m, &i.premise, &i.hypothesis)?;
                    Ok(PredictionRecord::new(
                        &i.id,
                        x.label,
                        &x.scores,
                        &x.explanation,
                    ))
                })
                .collect(),
        }
    }
}

fn evaluate(
    run: &mut Run,
    kind: ModelKind,
    source: TripleSource,
    annotations: Option<&PathBuf>,
    n_eval: Option<usize>,
) -> Result<()> {
    let (model, name) = Loaded::load(run, kind, source)?;
    let mut row = EvalRow {
        model: name.clone(),
        dev_accuracy: None,
        test_accuracy: None,
        explanations: None,
    };
    for s in [Split::Dev, Split::Test] {
        let d = run.read_dataset(s)?;
        let preds = model.predict(run, &d)?;
        let acc = label_accuracy(&preds, &d)?;
        run.write(
            &run.layout.predictions(&name, split_name(s)),
            &jsonl_bytes(&preds),
        )?;
        if s == Split::Dev {
            row.dev_accuracy = Some(acc);
        } else {
            row.test_accuracy = Some(acc);
            if let Some(path) = annotations {
                let ann = read_annotations(path)?;
                run.input(path)?;
                let n = n_eval.unwrap_or(run.config.data.n_eval).min(d.len());
                row.explanations = Some(explanation_metrics(&preds, &d, &ann, n)?);
            }
        }
    }
    let path = run.layout.eval_report(&name);
    let mut bytes = serde_json::to_vec_pretty(&row).expect("eval row serializes");
    bytes.push(b'\n');
    run.write(&path, &bytes)?;
    run.write(
        &path.with_extension("txt"),
        format_eval_table(std::slice::from_ref(&row)).as_bytes(),
    )
}

fn probe(
    run: &mut Run,
    kind: ModelKind,
    source: TripleSource,
    condition: Option<Condition>,
    seed: Option<u64>,
    per_slot: bool,
) -> Result<()> {
    let (model, name) = Loaded::load(run, kind, source)?;
    let probed = match &model {
        Loaded::Processor(m, _) => Probed::Processor(m),
        Loaded::Posthoc(m, _) => Probed::Posthoc(m),
        Loaded::Etpa(_) => {
            return Err(NileError::Config(
                "the explain-then-predict baseline has no explanation triples to probe".into(),
            ))
        }
    };
    let test = run.read_dataset(Split::Test)?;
    let triples = run.read_triples(source, &test)?;
    let seed = seed.unwrap_or_else(|| derive_seed(run.config.seed, "probe/shuffle"));
    let mode = if per_slot {
        ShuffleMode::PerSlot
    } else {
        ShuffleMode::WholeTriple
    };
    let conditions = match condition {
        Some(c) => vec![c],
        None => {
            let instance = match probed {
                Probed::Processor(m) => m.config.variant.uses_instance(),
                Probed::Posthoc(_) => false,
            };
            let mut all = vec![Condition::Full];
            if instance {
                all.extend([Condition::InstanceOnly, Condition::ExplanationOnly]);
            }
            all.push(Condition::Shuffled);
            all
        }
    };
    let mut reports = Vec::with_capacity(conditions.len());
    for c in &conditions {
        let mut r = match c {
            Condition::Shuffled => shuffle_probe(probed, &test, &triples, seed, mode)?,
            _ => erasure_probe(probed, &test, &triples, *c)?,
        };
        r.model = name.clone();
        reports.push(r);
    }
    let tag = match condition {
        Some(c) => c.name(),
        None => "all",
    };
    let path = run.layout.probe_report(&name, tag);
    write_report(&reports, &path)?;
    run.output(&path)?;
    run.output(&path.with_extension("txt"))
}

#[derive(Debug, Serialize, Deserialize)]
struct TransferSummary {
    model: String,
    accuracy: f64,
    n: usize,
    checksums: [String; 4],
}

fn transfer(run: &mut Run, source: TripleSource) -> Result<()> {
    let (model, name) = Loaded::load(run, ModelKind::Processor, source)?;
    let Loaded::Processor(model, _) = model else {
        unreachable!("processor requested")
    };
    let gens = load_generators(run)?;
    let ood = run.read_dataset(Split::Ood)?;
    let [e, c, n] = &gens;
    let res = transfer_eval(&model, [e, c, n], &ood)?;
    run.write(
        &run.layout.predictions(&name, "transfer"),
        &jsonl_bytes(&res.predictions),
    )?;
    let summary = TransferSummary {
        model: name.clone(),
        accuracy: res.accuracy,
        n: ood.len(),
        checksums: res.checksums_after,
    };
    let mut bytes = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    bytes.push(b'\n');
    run.write(&run.layout.transfer_report(&name), &bytes)
}

fn report(run: &mut Run) -> Result<()> {
    let dir = run.layout.reports_dir().to_path_buf();
    // Nothing evaluated yet: the summary is just the table headers.
    let mut files: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(entries) => entries.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(NileError::io(&dir, e)),
    };
    files.sort();
    let name_of = |p: &PathBuf| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let (mut rows, mut probes, mut transfers) = (Vec::new(), Vec::new(), Vec::new());
    for p in &files {
        let n = name_of(p);
        if n.ends_with(".manifest.json") {
            continue;
        }
        let read = |p: &PathBuf| std::fs::read(p).map_err(|e| NileError::io(p, e));
        let parse_err = |e: serde_json::Error| NileError::Parse {
            path: p.display().to_string(),
            line: e.line() as u64,
            msg: e.to_string(),
        };
        if n.starts_with("eval-") && n.ends_with(".json") {
            rows.push(serde_json::from_slice::<EvalRow>(&read(p)?).map_err(parse_err)?);
        } else if n.starts_with("probe-") && n.ends_with(".jsonl") {
            probes.extend(read_report(p)?);
        } else if n.starts_with("transfer-") && n.ends_with(".json") {
            transfers
                .push(serde_json::from_slice::<TransferSummary>(&read(p)?).map_err(parse_err)?);
        } else {
            continue;
        }
        run.input(p)?;
    }
    let mut text = String::from("# Label and explanation accuracy\n");
    text.push_str(&format_eval_table(&rows));
    text.push_str("\n# Probes\n");
    text.push_str(&format_table(&probes));
    text.push_str("\n# Out-of-domain transfer\n");
    text.push_str(&format!("{:<32} {:>8} {:>6}\n", "model", "accuracy", "n"));
    for t in &transfers {
        text.push_str(&format!("{:<32} {:>8.4} {:>6}\n", t.model, t.accuracy, t.n));
    }
    run.write(&run.layout.summary(), text.as_bytes())
}
