//! Noise pattern families and the pattern file format.
//!
//! A pattern file holds one expression per line:
//!
//! ```text
//! family<TAB>flags<TAB>expression
//! ```
//!
//! `flags` is `-` or any combination of `m` (`^`/`$` match at line breaks),
//! `i` (case-insensitive) and `s` (`.` matches newline). Blank lines and lines
//! starting with `#` are ignored; a `# version: N` line declares the file version.
//! Patterns are applied in file order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;
use std::str::FromStr;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    StackTrace,
    LogLines,
    CodeSnippet,
    DependencyTree,
    Emoji,
    Comment,
    ErrorMessage,
    Timestamp,
    Datetime,
    CommandLine,
    EnvVar,
    Identifier,
    HtmlMarkup,
    ModuleVersion,
    IpAddress,
    Email,
    UserHandle,
    Uri,
    FilePath,
    Digits,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 20] = [
        NoiseFamily::StackTrace,
        NoiseFamily::LogLines,
        NoiseFamily::CodeSnippet,
        NoiseFamily::DependencyTree,
        NoiseFamily::Emoji,
        NoiseFamily::Comment,
        NoiseFamily::ErrorMessage,
        NoiseFamily::Timestamp,
        NoiseFamily::Datetime,
        NoiseFamily::CommandLine,
        NoiseFamily::EnvVar,
        NoiseFamily::Identifier,
        NoiseFamily::HtmlMarkup,
        NoiseFamily::ModuleVersion,
        NoiseFamily::IpAddress,
        NoiseFamily::Email,
        NoiseFamily::UserHandle,
        NoiseFamily::Uri,
        NoiseFamily::FilePath,
        NoiseFamily::Digits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::StackTrace => "stack_trace",
            NoiseFamily::LogLines => "log_lines",
            NoiseFamily::CodeSnippet => "code_snippet",
            NoiseFamily::DependencyTree => "dependency_tree",
            NoiseFamily::Emoji => "emoji",
            NoiseFamily::Comment => "comment",
            NoiseFamily::ErrorMessage => "error_message",
            NoiseFamily::Timestamp => "timestamp",
            NoiseFamily::Datetime => "datetime",
            NoiseFamily::CommandLine => "command_line",
            NoiseFamily::EnvVar => "env_var",
            NoiseFamily::Identifier => "identifier",
            NoiseFamily::HtmlMarkup => "html_markup",
            NoiseFamily::ModuleVersion => "module_version",
            NoiseFamily::IpAddress => "ip_address",
            NoiseFamily::Email => "email",
            NoiseFamily::UserHandle => "user_handle",
            NoiseFamily::Uri => "uri",
            NoiseFamily::FilePath => "file_path",
            NoiseFamily::Digits => "digits",
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown noise family `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct NoisePattern {
    /// Position in the pattern file (0-based, counting only pattern lines).
    pub id: usize,
    pub family: NoiseFamily,
    pub multiline: bool,
    pub source: String,
    pub regex: Regex,
}

/// Removal counts per family.
pub type RemovalStats = BTreeMap<NoiseFamily, u64>;

/// An ordered, compiled pattern list.
#[derive(Debug, Clone)]
pub struct PatternSet {
    pub version: u32,
    patterns: Vec<NoisePattern>,
}

const DEFAULT_PATTERNS: &str = include_str!("../../data/patterns.tsv");

static BUILTIN: LazyLock<PatternSet> =
    LazyLock::new(|| DEFAULT_PATTERNS.parse().expect("bundled pattern file is valid"));

impl PatternSet {
    /// The bundled pattern file.
    pub fn builtin() -> PatternSet {
        BUILTIN.clone()
    }

    pub fn load(path: &Path) -> Result<PatternSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn patterns(&self) -> &[NoisePattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Keep only patterns of the given families, preserving order.
    pub fn restricted_to(&self, families: &[NoiseFamily]) -> PatternSet {
        PatternSet {
            version: self.version,
            patterns: self
                .patterns
                .iter()
                .filter(|p| families.contains(&p.family))
                .cloned()
                .collect(),
        }
    }

    /// Stable digest of the pattern sources, for run manifests.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in &self.patterns {
            h.update(p.family.name());
            h.update([0]);
            h.update(&p.source);
            h.update([u8::from(p.multiline)]);
        }
        hex::encode(h.finalize())
    }
}

impl FromStr for PatternSet {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut version = 0;
        let mut patterns = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let err = |m: String| Error::invalid(format!("pattern file line {}: {m}", n + 1));
            if let Some(v) = line.strip_prefix("# version:") {
                version = v.trim().parse().map_err(|_| err("bad version".into()))?;
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(family), Some(flags), Some(expr)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(err("expected family<TAB>flags<TAB>expression".into()));
            };
            let family: NoiseFamily = family.trim().parse().map_err(|e: Error| err(e.to_string()))?;
            let flags = flags.trim();
            let mut b = RegexBuilder::new(expr);
            let mut multiline = false;
            for f in flags.chars() {
                match f {
                    'm' => {
                        multiline = true;
                        b.multi_line(true);
                    }
                    'i' => {
                        b.case_insensitive(true);
                    }
                    's' => {
                        b.dot_matches_new_line(true);
                    }
                    '-' => {}
                    other => return Err(err(format!("unknown flag `{other}`"))),
                }
            }
            let regex = b
                .size_limit(1 << 24)
                .build()
                .map_err(|e| err(format!("does not compile: {e}")))?;
            patterns.push(NoisePattern {
                id: patterns.len(),
                family,
                multiline,
                source: expr.to_string(),
                regex,
            });
        }
        Ok(PatternSet { version, patterns })
    }
}

/// Replace every non-empty match with a single space; returns the match count.
pub(crate) fn replace_counting(re: &Regex, text: &str) -> (String, u64) {
    let mut out = String::new();
    let mut last = 0;
    let mut n = 0;
    for m in re.find_iter(text) {
        if m.is_empty() {
            continue;
        }
        out.push_str(&text[last..m.start()]);
        out.push(' ');
        last = m.end();
        n += 1;
    }
    if n == 0 {
        return (text.to_string(), 0);
    }
    out.push_str(&text[last..]);
    (out, n)
}

/// Collapse whitespace inside each line and drop empty lines.
pub(crate) fn collapse_lines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut words = line.split_whitespace().peekable();
        if words.peek().is_none() {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        for (i, w) in words.enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(w);
        }
    }
    out
}

const MAX_PASSES: usize = 16;

/// Apply every pattern in declared order, replacing matches with a space.
///
/// Passes repeat until one completes with no replacements, so the returned text
/// contains no match for any pattern. Line structure is kept so later
/// multi-line patterns still see lines; whitespace runs within a line collapse
/// to one space and empty lines disappear.
pub fn apply_noise_patterns(text: &str, patterns: &PatternSet) -> (String, RemovalStats) {
    let mut stats = RemovalStats::new();
    let mut current = text.to_string();
    for _ in 0..MAX_PASSES {
        let before = current.clone();
        for p in &patterns.patterns {
            let (next, n) = replace_counting(&p.regex, &current);
            if n > 0 {
                *stats.entry(p.family).or_default() += n;
                current = next;
            }
        }
        current = collapse_lines(&current);
        if current == before {
            break;
        }
    }
    (current, stats)
}
