//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use qlabel::clean::{normalize_punctuation, Cleaner};
use qlabel::corpus::{ClassLabel, EmbeddedRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub enum Tagged {
    Keep(String),
    Remove { family: String, text: String },
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub lines: Vec<Tagged>,
}

impl Block {
    pub fn text(&self) -> String {
        self.lines
            .iter()
            .map(|l| match l {
                Tagged::Keep(t) => t.as_str(),
                Tagged::Remove { text, .. } => text.as_str(),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn keeps(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                Tagged::Keep(t) => Some(t.as_str()),
                _ => None,
            })
            .collect()
    }
}

pub fn annotated_corpus() -> Vec<Block> {
    let text = std::fs::read_to_string(fixture("cleaning/annotated.txt")).unwrap();
    let mut blocks: Vec<Block> = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("=== ") {
            blocks.push(Block { name: name.to_string(), lines: vec![] });
            continue;
        }
        let block = blocks.last_mut().expect("line before first block");
        let mut cols = line.splitn(3, '\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some("K"), Some(t), None) => block.lines.push(Tagged::Keep(t.to_string())),
            (Some("R"), Some(f), Some(t)) => block.lines.push(Tagged::Remove {
                family: f.to_string(),
                text: t.to_string(),
            }),
            _ => panic!("bad fixture line: {line}"),
        }
    }
    blocks
}

/// Outcome of cleaning one annotated block.
pub struct BlockResult {
    pub output: String,
    /// Keep lines missing from the output (or out of order).
    pub altered_keeps: Vec<String>,
    /// (family, line) for remove lines whose distinctive words survived.
    pub surviving: Vec<(String, String)>,
    pub removed: usize,
    pub remove_total: usize,
}

pub fn check_block(cleaner: &Cleaner, block: &Block) -> BlockResult {
    let (output, _) = cleaner.clean_text(&block.text());
    let mut altered_keeps = Vec::new();
    let mut pos = 0;
    for k in block.keeps() {
        match output[pos..].find(k) {
            Some(i) => pos += i + k.len(),
            None => altered_keeps.push(k.to_string()),
        }
    }
    let keep_words: BTreeSet<&str> = block.keeps().iter().flat_map(|k| k.split_whitespace()).collect();
    let out_words: BTreeSet<&str> = output.split_whitespace().collect();
    let mut surviving = Vec::new();
    let mut removed = 0;
    let mut remove_total = 0;
    for l in &block.lines {
        if let Tagged::Remove { family, text } = l {
            remove_total += 1;
            let norm = normalize_punctuation(text);
            let left = norm
                .split_whitespace()
                .filter(|w| !keep_words.contains(w))
                .any(|w| out_words.contains(w));
            if left {
                surviving.push((family.clone(), text.clone()));
            } else {
                removed += 1;
            }
        }
    }
    BlockResult {
        output,
        altered_keeps,
        surviving,
        removed,
        remove_total,
    }
}

pub fn prose_sentences() -> Vec<String> {
    std::fs::read_to_string(fixture("cleaning/prose.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Two linearly separable classes in `dim` dimensions. Points are uniform in a
/// cube, then shifted along a random unit normal so that every point sits at
/// least `margin / 2` from the separating hyperplane through the origin.
pub fn blobs(n_per_class: usize, dim: usize, margin: f64, seed: u64) -> Vec<EmbeddedRecord> {
    let mut r = rng(seed);
    let mut dir: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let class = if i % 2 == 0 { ClassLabel::NotQuestion } else { ClassLabel::Question };
        let sign = if class == ClassLabel::Question { 1.0 } else { -1.0 };
        let mut x: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let along: f64 = x.iter().zip(&dir).map(|(a, b)| a * b).sum();
        // Distance from the separating hyperplane lands in [margin/2, margin/2 + 1).
        let target = sign * (margin / 2.0 + r.gen_range(0.0..1.0));
        for (xi, di) in x.iter_mut().zip(&dir) {
            *xi += (target - along) * di;
        }
        out.push(EmbeddedRecord::new(i as u64, class, x.iter().map(|&v| v as f32).collect()));
    }
    out
}

pub fn random_records(n: usize, dim: usize, r: &mut ChaCha8Rng) -> Vec<EmbeddedRecord> {
    (0..n)
        .map(|i| {
            let class = if r.gen_bool(0.5) { ClassLabel::Question } else { ClassLabel::NotQuestion };
            let v = (0..dim).map(|_| r.gen_range(-1.0f32..1.0)).collect();
            EmbeddedRecord::new(i as u64, class, v)
        })
        .collect()
}

/// Pipeline over `input` writing to `out`, with `key=value` overrides applied in order.
pub fn pipeline(out: &Path, input: &Path, sets: &[(&str, &str)]) -> qlabel::pipeline::Pipeline {
    let mut cfg = qlabel::pipeline::PipelineConfig::default();
    cfg.set("out_dir", out.to_str().unwrap()).unwrap();
    cfg.set("raw", input.to_str().unwrap()).unwrap();
    for (k, v) in sets {
        cfg.set(k, v).unwrap();
    }
    qlabel::pipeline::Pipeline::new(cfg).unwrap()
}

/// The 60-issue end-to-end corpus needs `min_count = 1`: its labels are rare.
pub fn e2e_pipeline(out: &Path, threads: usize) -> qlabel::pipeline::Pipeline {
    let threads = threads.to_string();
    pipeline(
        out,
        &fixture("pipeline/e2e_issues.jsonl"),
        &[("min_count", "1"), ("threads", threads.as_str())],
    )
}

pub fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
