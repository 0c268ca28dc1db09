use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const EXP: usize = 2;
pub const EOS: usize = 3;
pub const SEP: usize = 4;
pub const PREMISE: usize = 5;
pub const HYPOTHESIS: usize = 6;
pub const ENTAILMENT: usize = 7;
pub const CONTRADICTION: usize = 8;
pub const NEUTRAL: usize = 9;

/// Reserved tokens, indexed by their fixed ids.
pub const SPECIAL_TOKENS: [&str; 10] = [
    "[PAD]",
    "[UNK]",
    "[EXP]",
    "[EOS]",
    "[SEP]",
    "premise:",
    "hypothesis:",
    "entailment:",
    "contradiction:",
    "neutral:",
];

const FIELD_WORDS: [&str; 5] = [
    "premise",
    "hypothesis",
    "entailment",
    "contradiction",
    "neutral",
];

pub type TokenSeq = Vec<usize>;

/// Lowercases and splits on whitespace and punctuation; every punctuation
/// character is its own token, except that a field word directly followed by
/// a colon ("Premise:") stays a single marker token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let chars = text.chars().flat_map(char::to_lowercase).peekable();
    for c in chars {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            if c == ':' && FIELD_WORDS.contains(&word.as_str()) {
                word.push(':');
                out.push(std::mem::take(&mut word));
                continue;
            }
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Inverse of [`tokenize`] for text made of words and punctuation: words are
/// space-separated, closing punctuation attaches to the previous word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let attach = matches!(t, "." | "," | ";" | "!" | "?" | ")");
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from(
            SPECIAL_TOKENS
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>(),
        )
    }
}

impl Vocabulary {
    /// Specials first, then every token of `texts` in sorted order, so the
    /// id assignment does not depend on the order texts are visited.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocabulary::default();
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        for w in words {
            v.add(&w);
        }
        v
    }

    /// Rebuild from a token list (checkpoint load); the specials must sit at
    /// their reserved ids.
    pub fn from_tokens(tokens: Vec<String>) -> Option<Self> {
        let ok = tokens.len() >= SPECIAL_TOKENS.len()
            && SPECIAL_TOKENS.iter().zip(&tokens).all(|(a, b)| a == b);
        ok.then(|| Vocabulary::from(tokens))
    }

    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> TokenSeq {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        let toks: Vec<&str> = ids.iter().map(|&i| self.token(i)).collect();
        detokenize(&toks)
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIAL_TOKENS.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(tokenize("A dog runs."), ["a", "dog", "runs", "."]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn field_markers_are_single_tokens() {
        assert_eq!(tokenize("Premise: p"), ["premise:", "p"]);
        assert_eq!(
            tokenize("premise: a b hypothesis: c"),
            ["premise:", "a", "b", "hypothesis:", "c"]
        );
        // not a field word: the colon is split off
        assert_eq!(tokenize("note: x"), ["note", ":", "x"]);
    }

    #[test]
    fn special_ids_are_reserved() {
        let v = Vocabulary::build(["zebra premise: apple"]);
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            assert_eq!(v.id(s), i);
        }
        assert_eq!(v.len(), SPECIAL_TOKENS.len() + 2);
        assert_eq!(v.id("apple"), SPECIAL_TOKENS.len());
        assert_eq!(v.id("never-seen"), UNK);
    }

    #[test]
    fn build_is_order_independent() {
        let a = Vocabulary::build(["b a", "c"]);
        let b = Vocabulary::build(["c", "a b"]);
        assert_eq!(a, b);
    }

    #[test]
    fn decode_inverts_encode_for_known_words() {
        let v = Vocabulary::build(["a dog runs ."]);
        assert_eq!(v.decode(&v.encode("A dog runs.")), "a dog runs.");
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::build(["x y z"]);
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
    }
}
