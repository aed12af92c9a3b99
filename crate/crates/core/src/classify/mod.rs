//! Binary classifiers over embedded records.
//!
//! All five algorithms share [`train`] / [`predict`]. Training is deterministic
//! given the record order and [`TrainParams::seed`]; no feature scaling is
//! applied.

mod forest;
mod knn;
mod logreg;
mod svm;
mod tree;

pub use forest::{Forest, ForestParams};
pub use knn::{knn_predict, KnnParams};
pub use logreg::{logreg_fit, logreg_gradient, logreg_loss, sigmoid, LogRegFit, LogRegParams};
pub use svm::{svm_objective, svm_train, SvmFit, SvmParams};
pub use tree::{gain_ratio, Node, Tree, TreeParams, TIE_EPSILON};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, EmbeddedRecord};
use crate::embed::EmbeddingMeta;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Records per work unit in parallel reductions.
pub(crate) const CHUNK: usize = 256;

pub(crate) fn dot(w: &[f64], x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(a, &b)| a * f64::from(b)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Logreg,
    C45,
    RandomForest,
    LinearSvm,
    Knn,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Logreg, Algo::C45, Algo::RandomForest, Algo::LinearSvm, Algo::Knn];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Logreg => "logreg",
            Algo::C45 => "c45",
            Algo::RandomForest => "random_forest",
            Algo::LinearSvm => "linear_svm",
            Algo::Knn => "knn",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" | "logistic_regression" => Ok(Algo::Logreg),
            "c45" | "j48" | "tree" => Ok(Algo::C45),
            "random_forest" | "forest" => Ok(Algo::RandomForest),
            "linear_svm" | "svm" => Ok(Algo::LinearSvm),
            "knn" => Ok(Algo::Knn),
            _ => Err(Error::invalid(format!(
                "unknown algorithm `{s}` (expected logreg, c45, random_forest, linear_svm or knn)"
            ))),
        }
    }
}

/// Hyperparameters, one variant per algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hyper {
    Logreg(LogRegParams),
    C45(TreeParams),
    RandomForest(ForestParams),
    LinearSvm(SvmParams),
    Knn(KnnParams),
}

impl Hyper {
    pub fn defaults(algo: Algo) -> Hyper {
        match algo {
            Algo::Logreg => Hyper::Logreg(LogRegParams::default()),
            Algo::C45 => Hyper::C45(TreeParams::default()),
            Algo::RandomForest => Hyper::RandomForest(ForestParams::default()),
            Algo::LinearSvm => Hyper::LinearSvm(SvmParams::default()),
            Algo::Knn => Hyper::Knn(KnnParams::default()),
        }
    }

    pub fn algo(&self) -> Algo {
        match self {
            Hyper::Logreg(_) => Algo::Logreg,
            Hyper::C45(_) => Algo::C45,
            Hyper::RandomForest(_) => Algo::RandomForest,
            Hyper::LinearSvm(_) => Algo::LinearSvm,
            Hyper::Knn(_) => Algo::Knn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyper::Logreg(p) => p.validate(),
            Hyper::C45(p) => p.validate(),
            Hyper::RandomForest(p) => p.validate(),
            Hyper::LinearSvm(p) => p.validate(),
            Hyper::Knn(p) => p.validate(),
        }
    }

    /// Override one hyperparameter by name, e.g. `("k", "3")` for knn.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid(format!("hyperparameter {key}: cannot parse `{v}`")))
        }
        fn tree_key(p: &mut TreeParams, key: &str, v: &str) -> Result<bool> {
            match key {
                "min_leaf" => p.min_leaf = num(key, v)?,
                "min_gain" => p.min_gain = num(key, v)?,
                _ => return Ok(false),
            }
            Ok(true)
        }
        let known = match self {
            Hyper::Logreg(p) => match key {
                "lambda" => {
                    p.lambda = num(key, value)?;
                    true
                }
                "lr" => {
                    p.lr = num(key, value)?;
                    true
                }
                "max_iter" => {
                    p.max_iter = num(key, value)?;
                    true
                }
                "tol" => {
                    p.tol = num(key, value)?;
                    true
                }
                _ => false,
            },
            Hyper::C45(p) => tree_key(p, key, value)?,
            Hyper::RandomForest(p) => match key {
                "trees" => {
                    p.trees = num(key, value)?;
                    true
                }
                "features_per_split" => {
                    p.features_per_split = Some(num(key, value)?);
                    true
                }
                "bootstrap" => {
                    p.bootstrap = num(key, value)?;
                    true
                }
                _ => tree_key(&mut p.tree, key, value)?,
            },
            Hyper::LinearSvm(p) => match key {
                "lambda" => {
                    p.lambda = num(key, value)?;
                    true
                }
                "epochs" => {
                    p.epochs = num(key, value)?;
                    true
                }
                _ => false,
            },
            Hyper::Knn(p) => match key {
                "k" => {
                    p.k = num(key, value)?;
                    true
                }
                _ => false,
            },
        };
        if !known {
            return Err(Error::invalid(format!(
                "{} has no hyperparameter `{key}`",
                self.algo()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub seed: u64,
    pub hyper: Hyper,
}

impl TrainParams {
    pub fn new(algo: Algo, seed: u64) -> Self {
        TrainParams {
            seed,
            hyper: Hyper::defaults(algo),
        }
    }

    pub fn algo(&self) -> Algo {
        self.hyper.algo()
    }
}

/// Weight vector and bias of a linear decision function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f32]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameters {
    Linear(LinearModel),
    Tree(Tree),
    Forest(Forest),
    Knn { records: Vec<EmbeddedRecord> },
}

/// A trained classifier plus everything needed to describe and rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    pub algo: Algo,
    pub seed: u64,
    pub dim: usize,
    pub hyper: Hyper,
    /// Class names by index.
    pub classes: [String; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingMeta>,
    pub parameters: Parameters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: ClassLabel,
    /// Confidence in `class`, in `[0.5, 1]` for two-class votes and probabilities.
    pub score: f64,
}

impl Prediction {
    /// From a probability of `Question`; exactly 0.5 goes to `NotQuestion`.
    pub fn from_question_probability(p: f64) -> Self {
        if p > 0.5 {
            Prediction {
                class: ClassLabel::Question,
                score: p,
            }
        } else {
            Prediction {
                class: ClassLabel::NotQuestion,
                score: 1.0 - p,
            }
        }
    }
}

fn check_dataset(data: &[EmbeddedRecord], algo: Algo) -> Result<usize> {
    let Some(first) = data.first() else {
        return Err(Error::data("cannot train on an empty dataset"));
    };
    let dim = first.vector.len();
    if dim == 0 {
        return Err(Error::data("cannot train on zero-dimensional vectors"));
    }
    let mut seen = [false; 2];
    for r in data {
        if r.vector.len() != dim {
            return Err(Error::Dimension {
                id: r.id,
                expected: dim,
                found: r.vector.len(),
            });
        }
        if let Some(v) = r.vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite component {v}")).for_record(r.id));
        }
        seen[r.class.index()] = true;
    }
    if algo != Algo::Knn && !(seen[0] && seen[1]) {
        return Err(Error::data(format!("{algo} needs records of both classes")));
    }
    if algo != Algo::Knn && data.len() < 2 {
        return Err(Error::data(format!("{algo} needs at least two records")));
    }
    Ok(dim)
}

pub fn train(data: &[EmbeddedRecord], params: &TrainParams) -> Result<TrainedModel> {
    params.hyper.validate()?;
    let algo = params.algo();
    let dim = check_dataset(data, algo)?;
    let parameters = match &params.hyper {
        Hyper::Logreg(p) => Parameters::Linear(logreg_fit(data, p).model),
        Hyper::LinearSvm(p) => Parameters::Linear(svm_train(data, p, params.seed).model),
        Hyper::C45(p) => Parameters::Tree(tree::train(data, p)),
        Hyper::RandomForest(p) => Parameters::Forest(forest::train(data, p, params.seed)),
        Hyper::Knn(p) => {
            if p.k > data.len() {
                return Err(Error::invalid(format!("knn: k = {} exceeds {} training records", p.k, data.len())));
            }
            Parameters::Knn { records: data.to_vec() }
        }
    };
    Ok(TrainedModel {
        schema_version: SCHEMA_VERSION,
        algo,
        seed: params.seed,
        dim,
        hyper: params.hyper,
        classes: ClassLabel::ALL.map(|c| c.name().to_string()),
        embedding: None,
        parameters,
    })
}

impl TrainedModel {
    pub fn predict(&self, x: &[f32]) -> Result<Prediction> {
        if x.len() != self.dim {
            return Err(Error::data(format!(
                "vector has {} components, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(match (&self.parameters, &self.hyper) {
            (Parameters::Linear(m), Hyper::Logreg(_)) | (Parameters::Linear(m), Hyper::LinearSvm(_)) => {
                Prediction::from_question_probability(sigmoid(m.decision(x)))
            }
            (Parameters::Tree(t), _) => t.predict(x),
            (Parameters::Forest(f), _) => f.predict(x),
            (Parameters::Knn { records }, Hyper::Knn(p)) => knn_predict(records, x, p.k)?,
            _ => return Err(Error::data("model parameters do not match its algorithm")),
        })
    }

    /// Structural checks run after loading a model file.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::data(format!(
                "model schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.hyper.algo() != self.algo {
            return Err(Error::data("model hyperparameters belong to a different algorithm"));
        }
        self.hyper.validate()?;
        let ok = match &self.parameters {
            Parameters::Linear(m) => matches!(self.algo, Algo::Logreg | Algo::LinearSvm) && m.weights.len() == self.dim,
            Parameters::Tree(t) => self.algo == Algo::C45 && t.validate(self.dim).is_ok(),
            Parameters::Forest(f) => {
                self.algo == Algo::RandomForest
                    && !f.trees.is_empty()
                    && f.trees.len() == f.tree_seeds.len()
                    && f.trees.iter().all(|t| t.validate(self.dim).is_ok())
            }
            Parameters::Knn { records } => {
                self.algo == Algo::Knn && !records.is_empty() && records.iter().all(|r| r.vector.len() == self.dim)
            }
        };
        if !ok {
            return Err(Error::data("model parameters are inconsistent with its algorithm or dimension"));
        }
        if let Some(e) = &self.embedding {
            if e.provider.dim != self.dim {
                return Err(Error::data("model embedding dimension differs from its parameters"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::data(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text).map_err(|e| Error::data(format!("model file: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Data(m) => Error::data(format!("{}: {m}", path.display())),
            e => e,
        })
    }
}

/// Convenience wrapper over [`TrainedModel::predict`].
pub fn predict(model: &TrainedModel, x: &[f32]) -> Result<Prediction> {
    model.predict(x)
}
