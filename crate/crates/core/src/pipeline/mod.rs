//! Stage orchestration.
//!
//! Every stage reads the previous stage's artifact from the output directory,
//! writes its own, and records a manifest line. Stages can be rerun one at a
//! time; a rerun with the same configuration and inputs rewrites byte-identical
//! files regardless of the thread count.
//!
//! | stage   | reads                         | writes                                    |
//! |---------|-------------------------------|-------------------------------------------|
//! | prepare | raw issues                    | `labeled.jsonl`, `labels/`, `prepare_summary.json` |
//! | clean   | `labeled.jsonl`               | `cleaned.jsonl`, `clean_stats.csv`        |
//! | filter  | `cleaned.jsonl`               | `filtered.jsonl`                          |
//! | embed   | `filtered.jsonl`              | `vectors.csv`, `vectors.csv.meta.json`    |
//! | train   | `vectors.csv`                 | `model.json`                              |
//! | eval    | `model.json`, `vectors.csv`   | `report.json`                             |

mod config;
mod manifest;

pub use config::{PipelineConfig, DEFAULT_SEED};
pub use manifest::{file_digest, hash_params, read_manifest, ManifestEntry, TimingEntry};

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{train, Prediction, TrainedModel};
use crate::clean::{Cleaner, NoiseFamily, PatternSet, RemovalStats};
use crate::corpus::{
    create_file, open_file, read_all_vectors, read_labeled_issues, read_raw_issues, write_labeled_issues,
    write_vectors, ClassLabel, CleanedDoc, EmbeddedRecord, LabeledIssue, RawIssue, IssueState,
};
use crate::embed::{attach_external_vectors, build_idf, embed_hashed, EmbeddingMeta};
use crate::eval::{balance_dataset, evaluate, render_report, stratified_split, EvalReport, ReportFormat};
use crate::labels::{build_lexicon, categorize, write_lexicon, BaseLabelConfig, LabelCounts};
use crate::lang::{tokenize, LanguageDetector, TokenizedDoc};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prepare,
    Clean,
    Filter,
    Embed,
    Train,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Prepare, Stage::Clean, Stage::Filter, Stage::Embed, Stage::Train, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Clean => "clean",
            Stage::Filter => "filter",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

/// One line of `cleaned.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedRecord {
    pub id: u64,
    pub class: ClassLabel,
    pub text: String,
    pub removal_stats: RemovalStats,
    pub token_count: usize,
}

impl CleanedRecord {
    fn new(doc: CleanedDoc, class: ClassLabel) -> Self {
        CleanedRecord {
            id: doc.id,
            class,
            text: doc.text,
            removal_stats: doc.removal_stats,
            token_count: doc.token_count,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub issues_read: u64,
    pub missing_fields: u64,
    pub question: u64,
    pub not_question: u64,
    pub excluded: u64,
    pub dropped_open: u64,
    pub question_labels: usize,
    pub not_question_labels: usize,
    pub min_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// Human-readable summary for the command line.
    pub summary: String,
}

/// Result of classifying a single issue.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutcome {
    pub prediction: Prediction,
    pub cleaned_text: String,
    pub tokens: usize,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    pool: rayon::ThreadPool,
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut out = create_file(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let input = open_file(path)?;
    let mut items = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: n + 1,
            offset: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        items.push(item);
    }
    Ok(items)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create_file(path)?;
    out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn require(path: &Path, stage: Stage) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{} not found; run the stage that produces it before `{stage}`",
            path.display()
        )))
    }
}

fn class_counts(records: &[EmbeddedRecord]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for r in records {
        c[r.class.index()] += 1;
    }
    c
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker threads: {e}")))?;
        Ok(Pipeline { cfg, pool })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn patterns(&self) -> Result<PatternSet> {
        match &self.cfg.patterns {
            Some(p) => PatternSet::load(p),
            None => Ok(PatternSet::builtin()),
        }
    }

    /// Settings recorded in the manifest line of `stage`.
    pub fn stage_params(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let all = self.cfg.canonical();
        let pick = |keys: &[&str]| -> BTreeMap<String, String> {
            keys.iter()
                .filter_map(|k| all.get(*k).map(|v| (k.to_string(), v.clone())))
                .collect()
        };
        let mut p = match stage {
            Stage::Prepare => pick(&["max_records", "min_count", "closed_filter"]),
            Stage::Clean => {
                let set = self.patterns()?;
                let mut p = BTreeMap::new();
                p.insert("patterns_version".into(), set.version.to_string());
                p.insert("patterns_digest".into(), set.digest());
                p
            }
            Stage::Filter => pick(&["min_tokens", "max_tokens", "lang_threshold"]),
            Stage::Embed => {
                let mut p = pick(&["provider", "idf", "verify_unit_norm"]);
                p.insert("dim".into(), self.cfg.provider()?.dim.to_string());
                p
            }
            Stage::Train | Stage::Eval => {
                let mut p = pick(&["algo", "balance_target", "train_fraction", "split", "seed"]);
                let hyper = self.cfg.train_params()?.hyper;
                p.insert(
                    "hyper".into(),
                    serde_json::to_string(&hyper).map_err(|e| Error::data(e.to_string()))?,
                );
                if stage == Stage::Eval {
                    p.insert("timestamp".into(), self.cfg.timestamp.to_string());
                }
                p
            }
        };
        if stage != Stage::Clean {
            p.retain(|_, v| !v.is_empty());
        }
        Ok(p)
    }

    fn record(&self, stage: Stage, inputs: &[&Path], outputs: &[&Path], started: Instant) -> Result<()> {
        let params = self.stage_params(stage)?;
        let entry = ManifestEntry {
            stage,
            config_hash: hash_params(&params),
            params,
            input_digest: manifest::files_digest(inputs)?,
            output_digest: manifest::files_digest(outputs)?,
        };
        manifest::upsert(&self.cfg.manifest_path(), entry)?;
        manifest::upsert(
            &self.cfg.timings_path(),
            TimingEntry {
                stage,
                duration_ms: started.elapsed().as_millis(),
            },
        )
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome> {
        let started = Instant::now();
        let summary = self.pool.install(|| match stage {
            Stage::Prepare => self.prepare(started),
            Stage::Clean => self.clean(started),
            Stage::Filter => self.filter(started),
            Stage::Embed => self.embed(started),
            Stage::Train => self.train(started),
            Stage::Eval => self.eval(started),
        })?;
        log::info!("{stage}: {summary}");
        Ok(StageOutcome { stage, summary })
    }

    /// Run every stage in order.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        Stage::ALL.iter().map(|&s| self.run_stage(s)).collect()
    }

    fn prepare(&self, started: Instant) -> Result<String> {
        let raw = self
            .cfg
            .raw
            .as_deref()
            .ok_or_else(|| Error::invalid("prepare needs an input file (config key `raw`)"))?;
        let mut counts = LabelCounts::default();
        let mut reader = read_raw_issues(raw, self.cfg.max_records)?;
        let mut summary = PrepareSummary::default();
        for issue in &mut reader {
            counts.add_issue(&issue?);
            summary.issues_read += 1;
        }
        summary.missing_fields = reader.missing_fields() as u64;
        if summary.issues_read == 0 {
            return Err(Error::data(format!("no issues in {}", raw.display())));
        }
        let lexicon = build_lexicon(&counts, &BaseLabelConfig::default(), self.cfg.min_count)?;
        write_lexicon(&lexicon, &self.cfg.lexicon_dir())?;
        summary.question_labels = lexicon.question_labels.len();
        summary.not_question_labels = lexicon.not_question_labels.len();
        summary.min_count = lexicon.min_count;

        let mut read_error = None;
        let issues = read_raw_issues(raw, self.cfg.max_records)?.map_while(|r| match r {
            Ok(issue) => Some(issue),
            Err(e) => {
                read_error = Some(e);
                None
            }
        });
        let closed = self.cfg.closed_filter;
        let selected = issues.filter_map(|issue: RawIssue| match categorize(&issue, &lexicon) {
            None => {
                summary.excluded += 1;
                None
            }
            Some(class) if !closed.keeps(class, issue.state) => {
                debug_assert_eq!(issue.state, IssueState::Open);
                summary.dropped_open += 1;
                None
            }
            Some(class) => {
                match class {
                    ClassLabel::Question => summary.question += 1,
                    ClassLabel::NotQuestion => summary.not_question += 1,
                }
                Some(LabeledIssue { issue, class })
            }
        });
        let labeled = self.cfg.labeled_path();
        write_labeled_issues(selected, &labeled)?;
        if let Some(e) = read_error {
            return Err(e);
        }
        let summary_path = self.cfg.prepare_summary_path();
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::data(e.to_string()))?;
        write_text(&summary_path, &(text + "\n"))?;

        let lex = self.cfg.lexicon_dir();
        let q = lex.join(crate::labels::QUESTION_LABELS_FILE);
        let nq = lex.join(crate::labels::NOT_QUESTION_LABELS_FILE);
        self.record(Stage::Prepare, &[raw], &[&labeled, &q, &nq, &summary_path], started)?;
        Ok(format!(
            "{} issues read: {} question, {} not-question, {} excluded, {} open questions dropped",
            summary.issues_read, summary.question, summary.not_question, summary.excluded, summary.dropped_open
        ))
    }

    fn clean(&self, started: Instant) -> Result<String> {
        let labeled = self.cfg.labeled_path();
        require(&labeled, Stage::Clean)?;
        let cleaner = Cleaner::new(self.patterns()?);
        let issues: Vec<LabeledIssue> = read_labeled_issues(&labeled)?.collect::<Result<_>>()?;
        let records: Vec<CleanedRecord> = issues
            .par_iter()
            .map(|l| {
                let mut doc = cleaner.clean(&l.issue);
                doc.token_count = tokenize(&doc.text).len();
                CleanedRecord::new(doc, l.class)
            })
            .collect();
        let cleaned = self.cfg.cleaned_path();
        write_jsonl(&records, &cleaned)?;

        let mut totals: BTreeMap<NoiseFamily, u64> = NoiseFamily::ALL.iter().map(|&f| (f, 0)).collect();
        for r in &records {
            for (f, n) in &r.removal_stats {
                *totals.entry(*f).or_default() += n;
            }
        }
        let mut csv = String::from("family,count\n");
        for f in NoiseFamily::ALL {
            csv.push_str(&format!("{},{}\n", f, totals[&f]));
        }
        let stats = self.cfg.stats_path();
        write_text(&stats, &csv)?;
        let empty = records.iter().filter(|r| r.text.is_empty()).count();
        self.record(Stage::Clean, &[&labeled], &[&cleaned, &stats], started)?;
        Ok(format!(
            "{} issues cleaned, {} removals, {} left empty",
            records.len(),
            totals.values().sum::<u64>(),
            empty
        ))
    }

    fn filter(&self, started: Instant) -> Result<String> {
        let cleaned = self.cfg.cleaned_path();
        require(&cleaned, Stage::Filter)?;
        let detector = LanguageDetector::builtin().with_threshold(self.cfg.lang_threshold)?;
        let gate = self.cfg.token_gate()?;
        let records: Vec<CleanedRecord> = read_jsonl(&cleaned)?;
        let judged: Vec<Option<TokenizedDoc>> = records
            .par_iter()
            .map(|r| {
                detector
                    .detect(&r.text)
                    .is_english
                    .then(|| TokenizedDoc::new(r.id, r.class, &r.text, gate))
            })
            .collect();
        let non_english = judged.iter().filter(|d| d.is_none()).count();
        let docs: Vec<TokenizedDoc> = judged.into_iter().flatten().collect();
        let eligible = docs.iter().filter(|d| d.eligible).count();
        let filtered = self.cfg.filtered_path();
        write_jsonl(&docs, &filtered)?;
        self.record(Stage::Filter, &[&cleaned], &[&filtered], started)?;
        Ok(format!(
            "{} documents: {} not English, {} English, {} within {}..={} tokens",
            records.len(),
            non_english,
            docs.len(),
            eligible,
            gate.min,
            gate.max
        ))
    }

    fn embed(&self, started: Instant) -> Result<String> {
        let filtered = self.cfg.filtered_path();
        require(&filtered, Stage::Embed)?;
        let docs: Vec<TokenizedDoc> = read_jsonl(&filtered)?;
        let provider = self.cfg.provider()?;
        let mut inputs: Vec<PathBuf> = vec![filtered.clone()];
        let (records, idf) = if provider.is_external() {
            let source = self.cfg.external_vectors.as_deref().ok_or_else(|| {
                Error::invalid(format!("provider {} needs a vector file (config key `external_vectors`)", provider.kind))
            })?;
            inputs.push(source.to_path_buf());
            (attach_external_vectors(&docs, source, &provider, self.cfg.verify_unit_norm)?, None)
        } else {
            let idf = if self.cfg.idf { Some(build_idf(&docs)?) } else { None };
            (embed_hashed(&docs, provider.dim, idf.as_ref())?, idf)
        };
        if records.is_empty() {
            return Err(Error::data("no eligible documents to embed"));
        }
        let vectors = self.cfg.vectors_path();
        write_vectors(&records, &vectors, provider.dim)?;
        let meta = EmbeddingMeta {
            provider: provider.clone(),
            idf,
        };
        meta.write(&vectors)?;
        let sidecar = EmbeddingMeta::sidecar_path(&vectors);
        let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        self.record(Stage::Embed, &input_refs, &[&vectors, &sidecar], started)?;
        let counts = class_counts(&records);
        Ok(format!(
            "{} vectors of dimension {} ({} question, {} not-question) from provider {}",
            records.len(),
            provider.dim,
            counts[1],
            counts[0],
            provider.kind
        ))
    }

    /// Balance (when configured) and split the embedded corpus.
    pub fn split(&self, records: &[EmbeddedRecord]) -> Result<(Vec<EmbeddedRecord>, Vec<EmbeddedRecord>)> {
        let balanced;
        let data = match self.cfg.balance_target {
            Some(target) => {
                balanced = balance_dataset(records, target, self.cfg.stage_seed("balance"))?;
                &balanced[..]
            }
            None => records,
        };
        stratified_split(data, self.cfg.train_fraction, self.cfg.stage_seed("split"), self.cfg.stratified)
    }

    fn load_vectors(&self) -> Result<(Vec<EmbeddedRecord>, EmbeddingMeta)> {
        let vectors = self.cfg.vectors_path();
        require(&vectors, Stage::Train)?;
        let (dim, records) = read_all_vectors(&vectors)?;
        let meta = EmbeddingMeta::read(&vectors)?;
        if meta.provider.dim != dim {
            return Err(Error::data(format!(
                "{} has dimension {dim} but its metadata says {}",
                vectors.display(),
                meta.provider.dim
            )));
        }
        Ok((records, meta))
    }

    fn train(&self, started: Instant) -> Result<String> {
        let (records, meta) = self.load_vectors()?;
        let (train_set, _) = self.split(&records)?;
        let params = self.cfg.train_params()?;
        let mut model = train(&train_set, &params)?;
        model.embedding = Some(meta);
        let path = self.cfg.model_path();
        model.save(&path)?;
        let vectors = self.cfg.vectors_path();
        let sidecar = EmbeddingMeta::sidecar_path(&vectors);
        self.record(Stage::Train, &[&vectors, &sidecar], &[&path], started)?;
        let c = class_counts(&train_set);
        Ok(format!(
            "{} trained on {} records ({} question, {} not-question)",
            model.algo,
            train_set.len(),
            c[1],
            c[0]
        ))
    }

    fn eval(&self, started: Instant) -> Result<String> {
        let model_path = self.cfg.model_path();
        require(&model_path, Stage::Eval)?;
        let model = TrainedModel::load(&model_path)?;
        let (records, _) = self.load_vectors()?;
        let (train_set, test_set) = self.split(&records)?;
        let mut report = evaluate(&model, &test_set)?;
        report.sizes.train = Some(class_counts(&train_set));
        // The model keeps its derived training seed; reports show the master seed.
        report.seed = self.cfg.seed;
        if self.cfg.timestamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            report.timestamp = Some(format!("unix:{secs}"));
        }
        let path = self.cfg.report_path();
        write_text(&path, &render_report(&report, ReportFormat::Json))?;
        let vectors = self.cfg.vectors_path();
        self.record(Stage::Eval, &[&model_path, &vectors], &[&path], started)?;
        Ok(render_report(&report, ReportFormat::Text))
    }

    /// Render the last evaluation report.
    pub fn report(&self, format: ReportFormat) -> Result<String> {
        let path = self.cfg.report_path();
        require(&path, Stage::Eval)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(render_report(&EvalReport::from_json(&text)?, format))
    }

    /// Clean, tokenize, embed and classify one issue with a trained model.
    pub fn predict(&self, model: &TrainedModel, title: &str, body: &str) -> Result<PredictOutcome> {
        let meta = model
            .embedding
            .as_ref()
            .ok_or_else(|| Error::invalid("model has no embedding metadata; cannot embed raw text"))?;
        let cleaner = Cleaner::new(self.patterns()?);
        let issue = RawIssue {
            id: 0,
            title: title.to_string(),
            body: body.to_string(),
            labels: Vec::new(),
            state: IssueState::Open,
        };
        let doc = cleaner.clean(&issue);
        let tokens = tokenize(&doc.text);
        let vector = meta.embed_tokens(&tokens)?;
        let prediction = model.predict(&vector)?;
        Ok(PredictOutcome {
            prediction,
            cleaned_text: doc.text,
            tokens: tokens.len(),
        })
    }
}
