//! Issue text cleaning: markdown structure stripping followed by noise-pattern
//! removal and punctuation normalisation.

mod markdown;
mod patterns;

pub use markdown::{parse_markdown, strip_structural, Block, BlockKind, StructuralDoc};
pub use patterns::{apply_noise_patterns, NoiseFamily, NoisePattern, PatternSet, RemovalStats};

use crate::corpus::{CleanedDoc, RawIssue};

const TERMINAL: [char; 5] = ['.', '!', '?', ';', ':'];

/// Join title and body text, adding `". "` when the title does not already end
/// a sentence.
pub fn concat_title_body(title: &str, body_text: &str) -> String {
    let title = title.trim();
    let body_text = body_text.trim();
    match (title.is_empty(), body_text.is_empty()) {
        (true, _) => body_text.to_string(),
        (false, true) => title.to_string(),
        (false, false) if title.ends_with(TERMINAL) => format!("{title} {body_text}"),
        (false, false) => format!("{title}. {body_text}"),
    }
}

const KEPT_PUNCT: [char; 5] = ['.', ',', ';', '!', '?'];

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Drop punctuation other than `. , ; ! ?`, collapse whitespace to single spaces.
///
/// Apostrophes between two alphanumerics (`don't`) are part of the word and stay.
/// Tokens left with nothing but sentence punctuation are dropped.
pub fn normalize_punctuation(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut buf = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || c.is_whitespace()
            || KEPT_PUNCT.contains(&c)
            || (is_apostrophe(c)
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()));
        if keep {
            buf.push(if is_apostrophe(c) { '\'' } else { c });
        } else {
            buf.push(' ');
        }
    }
    buf.split_whitespace()
        .filter(|w| !w.chars().all(|c| KEPT_PUNCT.contains(&c)))
        .collect::<Vec<_>>()
        .join(" ")
}

const MAX_ROUNDS: usize = 8;

/// Cleans issues with a fixed, shareable pattern set.
#[derive(Debug, Clone)]
pub struct Cleaner {
    patterns: PatternSet,
}

impl Default for Cleaner {
    fn default() -> Self {
        Cleaner::new(PatternSet::builtin())
    }
}

impl Cleaner {
    pub fn new(patterns: PatternSet) -> Self {
        Cleaner { patterns }
    }

    pub fn patterns(&self) -> &PatternSet {
        &self.patterns
    }

    /// Noise removal and punctuation normalisation, repeated until the text is
    /// stable so that the result holds no pattern match.
    pub fn clean_text(&self, text: &str) -> (String, RemovalStats) {
        let mut stats = RemovalStats::new();
        let mut current = text.to_string();
        for _ in 0..MAX_ROUNDS {
            let (stripped, s) = apply_noise_patterns(&current, &self.patterns);
            for (fam, n) in s {
                *stats.entry(fam).or_default() += n;
            }
            let next = normalize_punctuation(&stripped);
            if next == current {
                break;
            }
            current = next;
        }
        (current, stats)
    }

    pub fn clean(&self, issue: &RawIssue) -> CleanedDoc {
        let body = strip_structural(&parse_markdown(&issue.body));
        let joined = concat_title_body(&issue.title, &body);
        let (text, removal_stats) = self.clean_text(&joined);
        CleanedDoc {
            id: issue.id,
            text,
            removal_stats,
            token_count: 0,
        }
    }
}

/// Clean one issue: markdown stripping, title/body join, noise removal and
/// punctuation normalisation.
pub fn clean(issue: &RawIssue, patterns: &PatternSet) -> CleanedDoc {
    Cleaner::new(patterns.clone()).clean(issue)
}
