//! A small entity/category world with deterministic label logic.
//!
//! Premise: `"{verb} in the {place} is the {adj} {entity}"`. Hypotheses:
//! - entailment generalizes the entity to its category: `"a {category} is {verb}"`
//! - contradiction asserts the mutually exclusive activity: `"the {entity} is {other}"`
//! - neutral adds an unsupported detail: `"the {entity} is {verb} because it is {detail}"`
//!
//! Explanations come from label-specific template families, one phrasing per
//! category (so `templates_per_label` phrasings are in play). The wording of a
//! family reveals the label; its content words tie it to one instance. Word
//! order is chosen so that every content word a generator needs lies within a
//! short window before the point where it is emitted.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Instance, Label, Split};
use crate::error::{NileError, Result};
use crate::seed::{derive_seed, rng};
use crate::textmodel::tokenize;

pub const MAX_TEMPLATES_PER_LABEL: usize = 4;

const ENTITIES: [&str; 24] = [
    "dog", "cat", "horse", "bird", "cow", "sheep", "goat", "fox", "owl", "bee", "ant", "frog",
    "man", "woman", "boy", "girl", "baby", "child", "pig", "duck", "hen", "mouse", "rabbit",
    "wolf",
];
const OOD_ENTITIES: [&str; 24] = [
    "bear", "deer", "lion", "tiger", "seal", "whale", "crab", "moth", "wasp", "toad", "eel", "yak",
    "lad", "lady", "teen", "toddler", "infant", "kid", "boar", "goose", "swan", "rat", "hare",
    "lynx",
];
const CATEGORIES: [&str; 8] = [
    "animal", "creature", "thing", "organism", "beast", "critter", "entity", "agent",
];
const OOD_CATEGORIES: [&str; 8] = [
    "mammal", "lifeform", "object", "specimen", "brute", "varmint", "unit", "figure",
];
const VERB_PAIRS: [(&str, &str); 4] = [
    ("sleeping", "running"),
    ("sitting", "standing"),
    ("eating", "swimming"),
    ("singing", "crying"),
];
const OOD_VERB_PAIRS: [(&str, &str); 4] = [
    ("napping", "sprinting"),
    ("resting", "jumping"),
    ("dining", "diving"),
    ("humming", "weeping"),
];
const PLACES: [&str; 5] = ["park", "street", "field", "house", "beach"];
const OOD_PLACES: [&str; 5] = ["garden", "road", "meadow", "barn", "shore"];
const ADJECTIVES: [&str; 4] = ["small", "big", "old", "young"];
const OOD_ADJECTIVES: [&str; 4] = ["tiny", "huge", "elderly", "little"];
const DETAILS: [&str; 6] = ["tired", "happy", "hungry", "late", "lost", "alone"];
const OOD_DETAILS: [&str; 6] = ["sleepy", "joyful", "thirsty", "early", "bored", "lonely"];

// {e} entity, {c} category, {v} premise activity, {w} second activity/detail.
const ENTAIL_TEMPLATES: [&str; MAX_TEMPLATES_PER_LABEL] = [
    "a {e} is a {c}",
    "every {e} is a {c}",
    "the {e} is a kind of {c}",
    "any {e} is a {c}",
];
const CONTRADICT_TEMPLATES: [&str; MAX_TEMPLATES_PER_LABEL] = [
    "the {e} cannot be {v} and {w} at the same time",
    "a {e} cannot be {v} and {w} at the same time",
    "one {e} cannot be both {v} and {w} at the same time",
    "no {e} can be {v} and {w} at the same time",
];
const NEUTRAL_TEMPLATES: [&str; MAX_TEMPLATES_PER_LABEL] = [
    "{v} does not imply {w}",
    "being {v} does not imply being {w}",
    "{v} does not imply that it is {w}",
    "a {e} {v} does not imply {w}",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub num_entities: usize,
    pub num_categories: usize,
    pub templates_per_label: usize,
    /// Training instances per label; dev, test and ood get half as many.
    pub instances_per_label: usize,
    pub ood_vocabulary_shift: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_entities: 8,
            num_categories: 3,
            templates_per_label: 3,
            instances_per_label: 100,
            ood_vocabulary_shift: 0.5,
            seed: 7,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NileError::Config(m));
        if self.templates_per_label == 0 || self.templates_per_label > MAX_TEMPLATES_PER_LABEL {
            return bad(format!(
                "templates_per_label must be in 1..={MAX_TEMPLATES_PER_LABEL}, got {}",
                self.templates_per_label
            ));
        }
        if self.num_entities == 0 || self.num_entities > ENTITIES.len() {
            return bad(format!(
                "num_entities must be in 1..={}, got {}",
                ENTITIES.len(),
                self.num_entities
            ));
        }
        if self.num_categories == 0
            || self.num_categories > CATEGORIES.len()
            || self.num_categories > self.num_entities
        {
            return bad(format!(
                "num_categories must be in 1..=min({}, num_entities), got {}",
                CATEGORIES.len(),
                self.num_categories
            ));
        }
        if self.instances_per_label == 0 {
            return bad("instances_per_label must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.ood_vocabulary_shift) {
            return bad(format!(
                "ood_vocabulary_shift must lie in [0, 1], got {}",
                self.ood_vocabulary_shift
            ));
        }
        Ok(())
    }

    pub fn eval_instances_per_label(&self) -> usize {
        (self.instances_per_label / 2).max(1)
    }
}

/// Surface words of the world. Entity `i` is-a category `i % num_categories`;
/// activities come in mutually exclusive pairs `(2k, 2k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub entities: Vec<String>,
    pub categories: Vec<String>,
    pub activities: Vec<String>,
    pub places: Vec<String>,
    pub adjectives: Vec<String>,
    pub details: Vec<String>,
}

impl Lexicon {
    pub fn category_of(&self, entity: usize) -> usize {
        entity % self.categories.len()
    }

    pub fn exclusive_of(activity: usize) -> usize {
        activity ^ 1
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entities
            .iter()
            .chain(&self.categories)
            .chain(&self.activities)
            .chain(&self.places)
            .chain(&self.adjectives)
            .chain(&self.details)
            .map(String::as_str)
    }

    fn find(list: &[String], w: &str) -> Option<usize> {
        list.iter().position(|x| x == w)
    }
}

/// The latent facts behind one synthetic instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facts {
    pub label: Label,
    pub entity: usize,
    pub activity: usize,
    pub place: usize,
    pub adjective: usize,
    /// The unsupported detail; only neutral instances have one.
    pub detail: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub base: Lexicon,
    pub ood: Lexicon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub world: World,
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub ood: Dataset,
}

impl SyntheticCorpus {
    pub fn split(&self, s: Split) -> &Dataset {
        match s {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
            Split::Ood => &self.ood,
        }
    }
}

pub fn generate_synthetic_corpus(config: &WorldConfig) -> Result<SyntheticCorpus> {
    let world = World::new(config.clone())?;
    let n_eval = config.eval_instances_per_label();
    let train = world.sample_split(Split::Train, config.instances_per_label, false)?;
    let dev = world.sample_split(Split::Dev, n_eval, false)?;
    let test = world.sample_split(Split::Test, n_eval, false)?;
    let ood = world.sample_split(Split::Ood, n_eval, true)?;
    Ok(SyntheticCorpus {
        world,
        train,
        dev,
        test,
        ood,
    })
}

fn owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

fn flatten_pairs(pairs: &[(&str, &str)]) -> Vec<String> {
    pairs
        .iter()
        .flat_map(|(a, b)| [a.to_string(), b.to_string()])
        .collect()
}

impl World {
    pub fn new(config: WorldConfig) -> Result<World> {
        config.validate()?;
        let base = Lexicon {
            entities: owned(&ENTITIES[..config.num_entities]),
            categories: owned(&CATEGORIES[..config.num_categories]),
            activities: flatten_pairs(&VERB_PAIRS),
            places: owned(&PLACES),
            adjectives: owned(&ADJECTIVES),
            details: owned(&DETAILS),
        };
        let mut r = rng(derive_seed(config.seed, "world/ood-lexicon"));
        let shift = config.ood_vocabulary_shift;
        let mut swap = |dst: &mut Vec<String>, alt: &[String]| {
            let k = (shift * dst.len() as f64).round() as usize;
            for i in sample(&mut r, dst.len(), k.min(dst.len())) {
                dst[i] = alt[i].clone();
            }
        };
        let mut ood = base.clone();
        swap(
            &mut ood.entities,
            &owned(&OOD_ENTITIES[..config.num_entities]),
        );
        swap(
            &mut ood.categories,
            &owned(&OOD_CATEGORIES[..config.num_categories]),
        );
        // Exclusive pairs shift together so the pair structure survives.
        let mut pairs: Vec<String> = (0..VERB_PAIRS.len()).map(|i| i.to_string()).collect();
        swap(&mut pairs, &vec![String::new(); VERB_PAIRS.len()]);
        let ood_acts = flatten_pairs(&OOD_VERB_PAIRS);
        for (k, p) in pairs.iter().enumerate() {
            if p.is_empty() {
                ood.activities[2 * k] = ood_acts[2 * k].clone();
                ood.activities[2 * k + 1] = ood_acts[2 * k + 1].clone();
            }
        }
        swap(&mut ood.places, &owned(&OOD_PLACES));
        swap(&mut ood.adjectives, &owned(&OOD_ADJECTIVES));
        swap(&mut ood.details, &owned(&OOD_DETAILS));
        Ok(World { config, base, ood })
    }

    pub fn lexicon(&self, ood: bool) -> &Lexicon {
        if ood {
            &self.ood
        } else {
            &self.base
        }
    }

    fn template_index(&self, lex: &Lexicon, entity: usize) -> usize {
        lex.category_of(entity) % self.config.templates_per_label
    }

    pub fn premise(&self, lex: &Lexicon, f: &Facts) -> String {
        format!(
            "{} in the {} is the {} {}",
            lex.activities[f.activity],
            lex.places[f.place],
            lex.adjectives[f.adjective],
            lex.entities[f.entity]
        )
    }

    pub fn hypothesis(&self, lex: &Lexicon, f: &Facts) -> String {
        let e = &lex.entities[f.entity];
        let v = &lex.activities[f.activity];
        match f.label {
            Label::Entail => format!("a {} is {v}", lex.categories[lex.category_of(f.entity)]),
            Label::Contradict => {
                format!(
                    "the {e} is {}",
                    lex.activities[Lexicon::exclusive_of(f.activity)]
                )
            }
            Label::Neutral => {
                let d = f.detail.expect("neutral facts carry a detail");
                format!("the {e} is {v} because it is {}", lex.details[d])
            }
        }
    }

    /// The `label`-form explanation for the instance described by `f`. For the
    /// gold label this is the gold explanation; for other labels the template
    /// is filled with world-consistent content (the entity's real category,
    /// the truly exclusive activity, a detail keyed on entity and activity).
    pub fn explanation(&self, lex: &Lexicon, f: &Facts, label: Label) -> String {
        let t = self.template_index(lex, f.entity);
        let e = &lex.entities[f.entity];
        let v = &lex.activities[f.activity];
        let (template, w) = match label {
            Label::Entail => (
                ENTAIL_TEMPLATES[t],
                lex.categories[lex.category_of(f.entity)].as_str(),
            ),
            Label::Contradict => (
                CONTRADICT_TEMPLATES[t],
                lex.activities[Lexicon::exclusive_of(f.activity)].as_str(),
            ),
            Label::Neutral => {
                let d = match (f.label, f.detail) {
                    (Label::Neutral, Some(d)) => d,
                    _ => (f.entity + f.activity) % lex.details.len(),
                };
                (NEUTRAL_TEMPLATES[t], lex.details[d].as_str())
            }
        };
        template
            .replace("{e}", e)
            .replace("{c}", w)
            .replace("{v}", v)
            .replace("{w}", w)
    }

    pub fn instance(&self, lex: &Lexicon, f: &Facts, id: String) -> Instance {
        Instance {
            id,
            premise: self.premise(lex, f),
            hypothesis: self.hypothesis(lex, f),
            label: f.label,
            gold_explanation: Some(self.explanation(lex, f, f.label)),
        }
    }

    fn sample_facts<R: Rng>(&self, lex: &Lexicon, label: Label, r: &mut R) -> Facts {
        let entity = r.gen_range(0..lex.entities.len());
        let activity = r.gen_range(0..lex.activities.len());
        let place = r.gen_range(0..lex.places.len());
        let adjective = r.gen_range(0..lex.adjectives.len());
        let detail = (label == Label::Neutral).then(|| r.gen_range(0..lex.details.len()));
        Facts {
            label,
            entity,
            activity,
            place,
            adjective,
            detail,
        }
    }

    fn sample_split(&self, split: Split, per_label: usize, ood: bool) -> Result<Dataset> {
        let lex = self.lexicon(ood);
        let mut r = rng(derive_seed(self.config.seed, &format!("world/{split}")));
        let mut facts: Vec<Facts> = Label::ALL
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, per_label))
            .map(|l| self.sample_facts(lex, l, &mut r))
            .collect();
        facts.shuffle(&mut r);
        let instances = facts
            .iter()
            .enumerate()
            .map(|(i, f)| self.instance(lex, f, format!("{split}-{i:05}")))
            .collect();
        Dataset::new(split, instances)
    }

    /// Recovers the facts behind a synthetic instance from its text, trying the
    /// in-domain lexicon first and then the shifted one. `None` when the text
    /// does not come from this world.
    pub fn parse(&self, inst: &Instance) -> Option<(Facts, &Lexicon)> {
        [false, true].into_iter().find_map(|ood| {
            let lex = self.lexicon(ood);
            parse_with(lex, inst).map(|f| (f, lex))
        })
    }

    /// Fills the `label` template family with the instance's content words.
    pub fn template_generate(&self, label: Label, inst: &Instance) -> Result<String> {
        let (facts, lex) = self.parse(inst).ok_or_else(|| {
            NileError::Data(format!(
                "instance {} is not from the synthetic world",
                inst.id
            ))
        })?;
        Ok(self.explanation(lex, &facts, label))
    }
}

fn parse_with(lex: &Lexicon, inst: &Instance) -> Option<Facts> {
    let p = tokenize(&inst.premise);
    let h = tokenize(&inst.hypothesis);
    let p: Vec<&str> = p.iter().map(String::as_str).collect();
    let [v, "in", "the", pl, "is", "the", adj, e] = p.as_slice() else {
        return None;
    };
    let activity = Lexicon::find(&lex.activities, v)?;
    let entity = Lexicon::find(&lex.entities, e)?;
    let place = Lexicon::find(&lex.places, pl)?;
    let adjective = Lexicon::find(&lex.adjectives, adj)?;
    let mut facts = Facts {
        label: Label::Entail,
        entity,
        activity,
        place,
        adjective,
        detail: None,
    };
    let h: Vec<&str> = h.iter().map(String::as_str).collect();
    match h.as_slice() {
        ["a", c, "is", hv] if *c == lex.categories[lex.category_of(entity)] && hv == v => {
            facts.label = Label::Entail;
        }
        ["the", he, "is", hv]
            if he == e && *hv == lex.activities[Lexicon::exclusive_of(activity)] =>
        {
            facts.label = Label::Contradict;
        }
        ["the", he, "is", hv, "because", "it", "is", d] if he == e && hv == v => {
            facts.label = Label::Neutral;
            facts.detail = Some(Lexicon::find(&lex.details, d)?);
        }
        _ => return None,
    }
    (facts.label == inst.label).then_some(facts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_templates() {
        let cfg = WorldConfig {
            templates_per_label: 0,
            ..WorldConfig::default()
        };
        assert!(matches!(
            generate_synthetic_corpus(&cfg),
            Err(NileError::Config(_))
        ));
    }

    #[test]
    fn word_lists_are_disjoint() {
        let mut all: Vec<&str> = ENTITIES
            .iter()
            .chain(&OOD_ENTITIES)
            .chain(&CATEGORIES)
            .chain(&OOD_CATEGORIES)
            .chain(&PLACES)
            .chain(&OOD_PLACES)
            .chain(&ADJECTIVES)
            .chain(&OOD_ADJECTIVES)
            .chain(&DETAILS)
            .chain(&OOD_DETAILS)
            .copied()
            .collect();
        for (a, b) in VERB_PAIRS.iter().chain(&OOD_VERB_PAIRS) {
            all.push(a);
            all.push(b);
        }
        let glue: Vec<String> = ENTAIL_TEMPLATES
            .iter()
            .chain(&CONTRADICT_TEMPLATES)
            .chain(&NEUTRAL_TEMPLATES)
            .flat_map(|t| tokenize(t))
            .chain(["in", "the", "is", "because", "it", "a"].map(String::from))
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n, "lexicon words repeat");
        for w in &all {
            assert!(!glue.iter().any(|g| g == w), "{w} is also a template word");
        }
    }

    #[test]
    fn parse_recovers_generated_facts() {
        let c = generate_synthetic_corpus(&WorldConfig::default()).unwrap();
        for d in [&c.train, &c.ood] {
            for inst in d.iter() {
                let (f, lex) = c.world.parse(inst).expect("parses");
                assert_eq!(c.world.instance(lex, &f, inst.id.clone()), *inst);
            }
        }
    }

    #[test]
    fn non_synthetic_instance_is_rejected() {
        let c = generate_synthetic_corpus(&WorldConfig::default()).unwrap();
        let inst = Instance {
            id: "x".into(),
            premise: "a man plays guitar".into(),
            hypothesis: "a person plays music".into(),
            label: Label::Entail,
            gold_explanation: None,
        };
        assert!(c.world.template_generate(Label::Entail, &inst).is_err());
    }
}
