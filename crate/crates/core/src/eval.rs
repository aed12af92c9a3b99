//! Class balancing, train/test splitting, confusion matrices and reports.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::TrainedModel;
use crate::corpus::{ClassLabel, EmbeddedRecord};
use crate::seed::rng_from;
use crate::{Error, Result};

/// Uniform sample of `target` records without replacement, returned in id order.
pub fn balance_sample(pool: &[EmbeddedRecord], target: usize, seed: u64) -> Result<Vec<EmbeddedRecord>> {
    if target > pool.len() {
        return Err(Error::invalid(format!(
            "cannot sample {target} records from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = rng_from(seed);
    let mut out: Vec<EmbeddedRecord> = sample(&mut rng, pool.len(), target)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    out.sort_by_key(|r| r.id);
    Ok(out)
}

/// Downsample the not-question class to `target` records and keep every
/// question. Output is in id order.
pub fn balance_dataset(data: &[EmbeddedRecord], target: usize, seed: u64) -> Result<Vec<EmbeddedRecord>> {
    let (nq, q): (Vec<_>, Vec<_>) = data
        .iter()
        .cloned()
        .partition(|r| r.class == ClassLabel::NotQuestion);
    let mut out = balance_sample(&nq, target, seed)?;
    out.extend(q);
    out.sort_by_key(|r| r.id);
    Ok(out)
}

/// `floor(fraction * n)`, tolerant of products like `2.9999999999999996`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Split into train and test sets.
///
/// Stratified mode shuffles each class separately (not-question first, from one
/// seeded stream) and sends `floor(fraction * class size)` records of each class
/// to train. Uniform mode does the same over the whole dataset. Both outputs keep
/// the input order.
pub fn stratified_split(
    data: &[EmbeddedRecord],
    train_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<EmbeddedRecord>, Vec<EmbeddedRecord>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut rng = rng_from(seed);
    let mut in_train = vec![false; data.len()];
    let groups: Vec<Vec<usize>> = if stratified {
        ClassLabel::ALL
            .iter()
            .map(|&c| (0..data.len()).filter(|&i| data[i].class == c).collect())
            .collect()
    } else {
        vec![(0..data.len()).collect()]
    };
    for (g, mut members) in groups.into_iter().enumerate() {
        if members.len() < 2 {
            let what = if stratified {
                format!("class {}", ClassLabel::ALL[g])
            } else {
                "dataset".to_string()
            };
            return Err(Error::data(format!("{what} has {} record(s); at least 2 are needed to split", members.len())));
        }
        members.shuffle(&mut rng);
        let k = train_count(members.len(), train_fraction);
        for &i in &members[..k] {
            in_train[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (r, t) in data.iter().zip(in_train) {
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((train, test))
}

/// Rows are actual classes, columns predicted, both indexed by [`ClassLabel::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn add(&mut self, actual: ClassLabel, predicted: ClassLabel) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn merge(mut self, other: ConfusionMatrix) -> Self {
        for r in 0..2 {
            for c in 0..2 {
                self.counts[r][c] += other.counts[r][c];
            }
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn row_sum(&self, class: ClassLabel) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    pub fn col_sum(&self, class: ClassLabel) -> u64 {
        self.counts.iter().map(|row| row[class.index()]).sum()
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// Short class name, `NQ` or `Q`.
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let per_class = ClassLabel::ALL
        .iter()
        .map(|&c| {
            let tp = cm.counts[c.index()][c.index()] as f64;
            let mut undefined = Vec::new();
            let ratio = |den: u64, name: &str, undefined: &mut Vec<String>| {
                if den == 0 {
                    undefined.push(name.to_string());
                    0.0
                } else {
                    tp / den as f64
                }
            };
            let precision = ratio(cm.col_sum(c), "precision", &mut undefined);
            let recall = ratio(cm.row_sum(c), "recall", &mut undefined);
            if precision + recall == 0.0 {
                undefined.push("f_measure".into());
            }
            ClassMetrics {
                class: c.short().into(),
                precision,
                recall,
                f_measure: f_measure(precision, recall),
                undefined,
            }
        })
        .collect();
    Ok(Metrics {
        accuracy: cm.trace() as f64 / total as f64,
        per_class,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSizes {
    /// Records per class index.
    pub train: Option<[u64; 2]>,
    pub test: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algo: String,
    pub provider: String,
    pub seed: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub sizes: SetSizes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

const EVAL_CHUNK: usize = 256;

/// Predict every test record and tally the results.
///
/// Work is split into fixed chunks and the partial matrices are merged in
/// chunk order.
pub fn evaluate(model: &TrainedModel, test: &[EmbeddedRecord]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let parts: Vec<ConfusionMatrix> = test
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let mut cm = ConfusionMatrix::default();
            for r in chunk {
                let p = model.predict(&r.vector).map_err(|e| e.for_record(r.id))?;
                cm.add(r.class, p.class);
            }
            Ok(cm)
        })
        .collect::<Result<_>>()?;
    let cm = parts.into_iter().fold(ConfusionMatrix::default(), ConfusionMatrix::merge);
    let m = compute_metrics(&cm)?;
    let provider = model
        .embedding
        .as_ref()
        .map_or_else(|| "unknown".to_string(), |e| e.provider.kind.to_string());
    Ok(EvalReport {
        algo: model.algo.to_string(),
        provider,
        seed: model.seed,
        accuracy: m.accuracy,
        per_class: m.per_class,
        confusion: cm,
        sizes: SetSizes {
            train: None,
            test: [cm.row_sum(ClassLabel::NotQuestion), cm.row_sum(ClassLabel::Question)],
        },
        timestamp: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::invalid(format!("unknown report format `{s}` (expected text, json or csv)"))),
        }
    }
}

pub const CSV_HEADER: &str = "algo,provider,class,precision,recall,f_measure,accuracy,seed";

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for c in &report.per_class {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    report.algo, report.provider, c.class, c.precision, c.recall, c.f_measure, report.accuracy, report.seed
                );
            }
            out
        }
        ReportFormat::Text => render_text(report),
    }
}

fn render_text(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "algorithm  {}", r.algo);
    let _ = writeln!(out, "provider   {}", r.provider);
    let _ = writeln!(out, "seed       {}", r.seed);
    if let Some(ts) = &r.timestamp {
        let _ = writeln!(out, "timestamp  {ts}");
    }
    let _ = writeln!(out, "accuracy   {}", pct(r.accuracy));
    out.push('\n');
    let _ = writeln!(out, "{:<6}{:>12}{:>12}{:>12}", "class", "precision", "recall", "f-measure");
    for c in &r.per_class {
        let mut line = format!("{:<6}{:>12}{:>12}{:>12}", c.class, pct(c.precision), pct(c.recall), pct(c.f_measure));
        if !c.undefined.is_empty() {
            let _ = write!(line, "  (undefined: {})", c.undefined.join(", "));
        }
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');
    let _ = writeln!(out, "confusion matrix (rows actual, columns predicted)");
    let _ = writeln!(out, "{:<6}{:>10}{:>10}", "", "NQ", "Q");
    for c in ClassLabel::ALL {
        let row = r.confusion.counts[c.index()];
        let _ = writeln!(out, "{:<6}{:>10}{:>10}", c.short(), row[0], row[1]);
    }
    out.push('\n');
    let test = r.sizes.test;
    match r.sizes.train {
        Some(train) => {
            let _ = writeln!(
                out,
                "train {} (NQ {}, Q {})  test {} (NQ {}, Q {})",
                train[0] + train[1],
                train[0],
                train[1],
                test[0] + test[1],
                test[0],
                test[1]
            );
        }
        None => {
            let _ = writeln!(out, "test {} (NQ {}, Q {})", test[0] + test[1], test[0], test[1]);
        }
    }
    out
}

impl EvalReport {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::data(format!("report: {e}")))
    }
}
