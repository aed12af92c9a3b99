//! English gate, tokenizer and token-count gate.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::corpus::ClassLabel;
use crate::{Error, Result};

pub const DEFAULT_LANG_THRESHOLD: f64 = 0.30;
/// Texts shorter than this (in characters) are not classified.
pub const MIN_DETECT_CHARS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangVerdict {
    /// ISO 639-1 code of the closest profile, or `und` when undeterminable.
    pub lang: String,
    pub confidence: f64,
    pub is_english: bool,
}

/// Ordered so that sums run in a fixed order and scores are reproducible.
type Profile = BTreeMap<[char; 3], f64>;

fn trigrams(text: &str) -> BTreeMap<[char; 3], f64> {
    let mut counts = BTreeMap::new();
    for word in text
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
    {
        let mut chars = vec![' '];
        chars.extend(word.chars().flat_map(char::to_lowercase));
        chars.push(' ');
        for w in chars.windows(3) {
            *counts.entry([w[0], w[1], w[2]]).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Trigrams kept per language profile.
pub const PROFILE_SIZE: usize = 200;

/// Square-root damping keeps a handful of very common trigrams (` th`, `the`)
/// from dominating the cosine, then the vector is scaled to unit length.
fn normalized(mut p: Profile) -> Profile {
    p.values_mut().for_each(|v| *v = v.sqrt());
    let norm = p.values().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        p.values_mut().for_each(|v| *v /= norm);
    }
    p
}

/// Character-trigram language identifier.
///
/// Each language profile holds the [`PROFILE_SIZE`] most frequent trigrams of
/// a sample text. A document's trigrams outside every profile (names, jargon)
/// are dropped, and what remains is scored by cosine similarity against each
/// profile.
#[derive(Debug, Clone)]
pub struct LanguageDetector {
    profiles: Vec<(String, Profile)>,
    vocabulary: HashSet<[char; 3]>,
    threshold: f64,
}

fn profile(text: &str) -> Profile {
    let mut ranked: Vec<_> = trigrams(text).into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(PROFILE_SIZE);
    normalized(ranked.into_iter().collect())
}

const SAMPLES: [(&str, &str); 7] = [
    ("en", include_str!("../data/lang/en.txt")),
    ("es", include_str!("../data/lang/es.txt")),
    ("fr", include_str!("../data/lang/fr.txt")),
    ("de", include_str!("../data/lang/de.txt")),
    ("pt", include_str!("../data/lang/pt.txt")),
    ("ru", include_str!("../data/lang/ru.txt")),
    ("zh", include_str!("../data/lang/zh.txt")),
];

static BUILTIN: LazyLock<LanguageDetector> = LazyLock::new(|| {
    LanguageDetector::from_samples(SAMPLES.iter().map(|(l, t)| (l.to_string(), *t)), DEFAULT_LANG_THRESHOLD)
        .expect("bundled samples are valid")
});

impl LanguageDetector {
    pub fn builtin() -> &'static LanguageDetector {
        &BUILTIN
    }

    pub fn from_samples<'a>(samples: impl IntoIterator<Item = (String, &'a str)>, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        let profiles: Vec<_> = samples
            .into_iter()
            .map(|(lang, text)| (lang, profile(text)))
            .collect();
        if profiles.is_empty() {
            return Err(Error::invalid("language detector needs at least one profile"));
        }
        let vocabulary = profiles.iter().flat_map(|(_, p)| p.keys().copied()).collect();
        Ok(LanguageDetector {
            profiles,
            vocabulary,
            threshold,
        })
    }

    /// Same profiles, different acceptance threshold.
    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(LanguageDetector {
            profiles: self.profiles.clone(),
            vocabulary: self.vocabulary.clone(),
            threshold,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn detect(&self, text: &str) -> LangVerdict {
        if text.chars().count() < MIN_DETECT_CHARS {
            return undetermined();
        }
        let mut doc = trigrams(text);
        doc.retain(|g, _| self.vocabulary.contains(g));
        let doc = normalized(doc);
        if doc.is_empty() {
            return undetermined();
        }
        let mut best: Option<(&str, f64)> = None;
        for (lang, prof) in &self.profiles {
            let sim: f64 = doc
                .iter()
                .filter_map(|(g, w)| prof.get(g).map(|p| p * w))
                .sum();
            // Strict comparison keeps the earlier profile on ties.
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((lang, sim));
            }
        }
        let (lang, confidence) = best.expect("at least one profile");
        let confidence = confidence.clamp(0.0, 1.0);
        LangVerdict {
            lang: lang.to_string(),
            confidence,
            is_english: lang == "en" && confidence >= self.threshold,
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("language threshold {t} outside [0, 1]")));
    }
    Ok(())
}

fn undetermined() -> LangVerdict {
    LangVerdict {
        lang: "und".into(),
        confidence: 0.0,
        is_english: false,
    }
}

/// Detect the language of `text` with the bundled profiles and default threshold.
pub fn detect_language(text: &str) -> LangVerdict {
    LanguageDetector::builtin().detect(text)
}

const SENTENCE_PUNCT: [char; 5] = ['.', ',', ';', '!', '?'];

/// Words split into two tokens regardless of apostrophes.
const FUSED: [(&str, usize); 8] = [
    ("cannot", 3),
    ("gimme", 3),
    ("gonna", 3),
    ("gotta", 3),
    ("lemme", 3),
    ("wanna", 3),
    ("d'ye", 1),
    ("more'n", 4),
];

const CLITICS: [&str; 7] = ["n't", "'ll", "'re", "'ve", "'s", "'m", "'d"];

fn split_word(word: &str, out: &mut Vec<String>) {
    let lower = word.to_lowercase();
    if lower.len() == word.len() {
        if let Some(&(_, at)) = FUSED.iter().find(|(w, _)| *w == lower) {
            out.push(word[..at].to_string());
            out.push(word[at..].to_string());
            return;
        }
        for clitic in CLITICS {
            if lower.len() > clitic.len() && lower.ends_with(clitic) {
                let at = word.len() - clitic.len();
                out.push(word[..at].to_string());
                out.push(word[at..].to_string());
                return;
            }
        }
    }
    out.push(word.to_string());
}

/// Treebank-style tokenization of cleaned text.
///
/// Splits on whitespace, detaches leading and trailing `. , ; ! ?` as separate
/// tokens (one per character) and splits English contractions:
/// `can't` becomes `ca n't`, `it's` becomes `it 's`, `cannot` becomes `can not`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let core_start = raw.len() - raw.trim_start_matches(SENTENCE_PUNCT).len();
        let trimmed = raw.trim_end_matches(SENTENCE_PUNCT);
        let core_end = trimmed.len().max(core_start);
        for c in raw[..core_start].chars() {
            tokens.push(c.to_string());
        }
        if core_start < core_end {
            split_word(&raw[core_start..core_end], &mut tokens);
        }
        for c in raw[core_end..].chars() {
            tokens.push(c.to_string());
        }
    }
    tokens
}

/// Inclusive bounds on the token count of an eligible document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGate {
    pub min: usize,
    pub max: usize,
}

impl Default for TokenGate {
    fn default() -> Self {
        TokenGate { min: 6, max: 199 }
    }
}

impl TokenGate {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min > max {
            return Err(Error::invalid(format!("token bounds {min}..={max} are empty")));
        }
        Ok(TokenGate { min, max })
    }

    pub fn accepts(&self, count: usize) -> bool {
        (self.min..=self.max).contains(&count)
    }
}

/// True iff the document has more than five and fewer than 200 tokens.
pub fn length_gate(tokens: &[String]) -> bool {
    TokenGate::default().accepts(tokens.len())
}

/// A cleaned, English, tokenized document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub id: u64,
    pub class: ClassLabel,
    pub tokens: Vec<String>,
    pub eligible: bool,
}

impl TokenizedDoc {
    pub fn new(id: u64, class: ClassLabel, text: &str, gate: TokenGate) -> Self {
        let tokens = tokenize(text);
        let eligible = gate.accepts(tokens.len());
        TokenizedDoc {
            id,
            class,
            tokens,
            eligible,
        }
    }
}
