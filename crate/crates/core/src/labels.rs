//! Label frequency mining and question / not-question lexicons.
//!
//! Each category starts from a handful of base labels (`question`; `bug`,
//! `enhancement`, ...). Every label seen in the corpus that contains a base as a
//! substring and was applied at least `min_count` times joins that category.
//! Labels that would join both categories are dropped from both.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::corpus::{ClassLabel, IssueState, LabeledIssue, RawIssue};
use crate::{Error, Result};

pub const DEFAULT_MIN_COUNT: u64 = 50;

/// Per-label usage counts. Partial counts from separate shards can be merged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelCounts(pub BTreeMap<String, u64>);

impl LabelCounts {
    pub fn add_issue(&mut self, issue: &RawIssue) {
        for l in &issue.labels {
            *self.0.entry(l.clone()).or_default() += 1;
        }
    }

    pub fn merge(mut self, other: LabelCounts) -> LabelCounts {
        for (k, v) in other.0 {
            *self.0.entry(k).or_default() += v;
        }
        self
    }

    pub fn get(&self, label: &str) -> u64 {
        self.0.get(label).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Labels sorted by descending count, ties lexicographic.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.0.iter().map(|(k, &c)| (k.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

impl FromIterator<(String, u64)> for LabelCounts {
    fn from_iter<I: IntoIterator<Item = (String, u64)>>(iter: I) -> Self {
        LabelCounts(iter.into_iter().collect())
    }
}

pub fn count_labels<'a>(issues: impl IntoIterator<Item = &'a RawIssue>) -> LabelCounts {
    let mut counts = LabelCounts::default();
    for issue in issues {
        counts.add_issue(issue);
    }
    counts
}

/// All labels containing `base` with at least `min_count` uses, most used first.
pub fn expand_base_label(counts: &LabelCounts, base: &str, min_count: u64) -> Vec<String> {
    let base = base.trim().to_lowercase();
    counts
        .ranked()
        .into_iter()
        .filter(|&(label, c)| c >= min_count.max(1) && label.contains(base.as_str()))
        .map(|(label, _)| label.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseLabelConfig {
    pub question_bases: BTreeSet<String>,
    pub not_question_bases: BTreeSet<String>,
}

impl Default for BaseLabelConfig {
    fn default() -> Self {
        BaseLabelConfig {
            question_bases: ["question"].into_iter().map(String::from).collect(),
            not_question_bases: ["bug", "duplicate", "enhancement", "wontfix", "feature", "improvement"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl BaseLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.question_bases.is_empty() || self.not_question_bases.is_empty() {
            return Err(Error::invalid("both base label sets must be non-empty"));
        }
        if let Some(b) = self.question_bases.intersection(&self.not_question_bases).next() {
            return Err(Error::invalid(format!("base label `{b}` is listed for both categories")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelLexicon {
    pub question_labels: BTreeSet<String>,
    pub not_question_labels: BTreeSet<String>,
    pub min_count: u64,
}

pub fn build_lexicon(counts: &LabelCounts, config: &BaseLabelConfig, min_count: u64) -> Result<LabelLexicon> {
    config.validate()?;
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let expand = |bases: &BTreeSet<String>| -> BTreeSet<String> {
        bases
            .iter()
            .flat_map(|b| expand_base_label(counts, b, min_count))
            .collect()
    };
    let mut question_labels = expand(&config.question_bases);
    let mut not_question_labels = expand(&config.not_question_bases);
    let conflicts: Vec<String> = question_labels.intersection(&not_question_labels).cloned().collect();
    for c in &conflicts {
        question_labels.remove(c);
        not_question_labels.remove(c);
    }
    if question_labels.is_empty() {
        return Err(Error::invalid(format!(
            "no question labels reach min_count {min_count}; lexicon unusable"
        )));
    }
    Ok(LabelLexicon {
        question_labels,
        not_question_labels,
        min_count,
    })
}

/// Assign an issue to a class from its labels, or `None` when it must be excluded
/// (labels from both categories, or no lexicon label at all).
pub fn categorize(issue: &RawIssue, lexicon: &LabelLexicon) -> Option<ClassLabel> {
    let q = issue.labels.iter().any(|l| lexicon.question_labels.contains(l));
    let nq = issue.labels.iter().any(|l| lexicon.not_question_labels.contains(l));
    match (q, nq) {
        (true, false) => Some(ClassLabel::Question),
        (false, true) => Some(ClassLabel::NotQuestion),
        _ => None,
    }
}

/// Which categorized issues must be closed to be kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClosedFilter {
    Off,
    #[default]
    QuestionsOnly,
    All,
}

impl ClosedFilter {
    pub fn keeps(self, class: ClassLabel, state: IssueState) -> bool {
        match (self, state) {
            (_, IssueState::Closed) | (ClosedFilter::Off, _) => true,
            (ClosedFilter::QuestionsOnly, IssueState::Open) => class == ClassLabel::NotQuestion,
            (ClosedFilter::All, IssueState::Open) => false,
        }
    }
}

impl std::str::FromStr for ClosedFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(ClosedFilter::Off),
            "questions" => Ok(ClosedFilter::QuestionsOnly),
            "all" => Ok(ClosedFilter::All),
            _ => Err(Error::invalid(format!("closed filter must be off|questions|all, got `{s}`"))),
        }
    }
}

impl std::fmt::Display for ClosedFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClosedFilter::Off => "off",
            ClosedFilter::QuestionsOnly => "questions",
            ClosedFilter::All => "all",
        })
    }
}

pub fn select_corpus<'l, I>(issues: I, lexicon: &'l LabelLexicon, closed: ClosedFilter) -> impl Iterator<Item = LabeledIssue> + 'l
where
    I: IntoIterator<Item = RawIssue>,
    I::IntoIter: 'l,
{
    issues.into_iter().filter_map(move |issue| {
        let class = categorize(&issue, lexicon)?;
        closed.keeps(class, issue.state).then_some(LabeledIssue { issue, class })
    })
}

pub const QUESTION_LABELS_FILE: &str = "question.txt";
pub const NOT_QUESTION_LABELS_FILE: &str = "not_question.txt";

/// Persist a lexicon as two plain-text files in `dir`, one label per line.
pub fn write_lexicon(lexicon: &LabelLexicon, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, set) in [
        (QUESTION_LABELS_FILE, &lexicon.question_labels),
        (NOT_QUESTION_LABELS_FILE, &lexicon.not_question_labels),
    ] {
        let mut text = format!("# min_count={}\n", lexicon.min_count);
        for l in set {
            text.push_str(l);
            text.push('\n');
        }
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_lexicon(dir: &Path) -> Result<LabelLexicon> {
    let mut min_count = 1;
    let mut load = |name: &str| -> Result<BTreeSet<String>> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut set = BTreeSet::new();
        for line in text.lines() {
            if let Some(v) = line.strip_prefix("# min_count=") {
                min_count = v.trim().parse().map_err(|_| Error::data(format!("{}: bad min_count", path.display())))?;
                continue;
            }
            let l = line.trim().to_lowercase();
            if !l.is_empty() {
                set.insert(l);
            }
        }
        Ok(set)
    };
    let question_labels = load(QUESTION_LABELS_FILE)?;
    let not_question_labels = load(NOT_QUESTION_LABELS_FILE)?;
    if let Some(l) = question_labels.intersection(&not_question_labels).next() {
        return Err(Error::data(format!("label `{l}` appears in both lexicon files")));
    }
    Ok(LabelLexicon {
        question_labels,
        not_question_labels,
        min_count,
    })
}
