//! Document vectors: a hashed bag-of-words embedder and ingestion of
//! precomputed sentence-encoder vectors.
//!
//! The hashed embedder uses 64-bit FNV-1a (offset basis `0xcbf29ce484222325`,
//! prime `0x100000001b3`) over the UTF-8 bytes of each lowercased token.
//! Bucket = `hash % dim`; the component is negated when bit 63 of the hash is
//! set. Counts (or idf weights) are summed per bucket and the vector is scaled
//! to unit L2 norm.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_all_vectors, EmbeddedRecord};
use crate::lang::TokenizedDoc;
use crate::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub const SBERT_DIM: usize = 1024;
pub const USE_DIM: usize = 512;
pub const DEFAULT_HASHED_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Sbert,
    Use,
    Hashed,
}

impl ProviderKind {
    pub fn name(self) -> &'static str {
        match self {
            ProviderKind::Sbert => "sbert",
            ProviderKind::Use => "use",
            ProviderKind::Hashed => "hashed",
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sbert" => Ok(ProviderKind::Sbert),
            "use" => Ok(ProviderKind::Use),
            "hashed" => Ok(ProviderKind::Hashed),
            _ => Err(Error::invalid(format!("unknown provider `{s}` (expected sbert, use or hashed)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingProvider {
    pub kind: ProviderKind,
    pub dim: usize,
    pub metadata: String,
}

impl EmbeddingProvider {
    pub fn sbert() -> Self {
        EmbeddingProvider {
            kind: ProviderKind::Sbert,
            dim: SBERT_DIM,
            metadata: "roberta-large-nli-stsb-mean-tokens".into(),
        }
    }

    pub fn universal_sentence_encoder() -> Self {
        EmbeddingProvider {
            kind: ProviderKind::Use,
            dim: USE_DIM,
            metadata: "universal-sentence-encoder-large-v5".into(),
        }
    }

    pub fn hashed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("hashed embedding dimension must be positive"));
        }
        Ok(EmbeddingProvider {
            kind: ProviderKind::Hashed,
            dim,
            metadata: "fnv1a64-signed-bag-of-words".into(),
        })
    }

    /// Build a provider; `dim` is only accepted for the hashed kind, or when it
    /// equals the fixed dimension of an external kind.
    pub fn new(kind: ProviderKind, dim: Option<usize>) -> Result<Self> {
        let p = match kind {
            ProviderKind::Sbert => Self::sbert(),
            ProviderKind::Use => Self::universal_sentence_encoder(),
            ProviderKind::Hashed => return Self::hashed(dim.unwrap_or(DEFAULT_HASHED_DIM)),
        };
        match dim {
            Some(d) if d != p.dim => Err(Error::invalid(format!(
                "provider {kind} produces {}-dimensional vectors, not {d}",
                p.dim
            ))),
            _ => Ok(p),
        }
    }

    pub fn is_external(&self) -> bool {
        self.kind != ProviderKind::Hashed
    }
}

/// Inverse document frequencies, `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub n_docs: u64,
    pub weights: BTreeMap<String, f64>,
}

impl IdfTable {
    fn formula(n: u64, df: u64) -> f64 {
        ((1.0 + n as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    /// Weight of a token; tokens never seen get the `df = 0` weight.
    pub fn weight(&self, token: &str) -> f64 {
        self.weights
            .get(token)
            .copied()
            .unwrap_or_else(|| Self::formula(self.n_docs, 0))
    }
}

/// Document frequencies over eligible documents; tokens are lowercased.
pub fn build_idf(docs: &[TokenizedDoc]) -> Result<IdfTable> {
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    let mut n = 0u64;
    for doc in docs.iter().filter(|d| d.eligible) {
        n += 1;
        let distinct: BTreeSet<String> = doc.tokens.iter().map(|t| t.to_lowercase()).collect();
        for t in distinct {
            *df.entry(t).or_default() += 1;
        }
    }
    if n == 0 {
        return Err(Error::data("cannot build idf table: no eligible documents"));
    }
    let weights = df
        .into_iter()
        .map(|(t, d)| (t, IdfTable::formula(n, d)))
        .collect();
    Ok(IdfTable { n_docs: n, weights })
}

/// Signed feature-hashing embedding, L2-normalised.
pub fn hashed_embed(tokens: &[String], dim: usize, idf: Option<&IdfTable>) -> Result<Vec<f32>> {
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    if tokens.is_empty() {
        return Err(Error::data("cannot embed an empty token list"));
    }
    let mut acc = vec![0f64; dim];
    for tok in tokens {
        let tok = tok.to_lowercase();
        let h = fnv1a64(tok.as_bytes());
        let idx = (h % dim as u64) as usize;
        let w = idf.map_or(1.0, |t| t.weight(&tok));
        if h >> 63 == 1 {
            acc[idx] -= w;
        } else {
            acc[idx] += w;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::data("hashed features cancel out to a zero vector"));
    }
    Ok(acc.into_iter().map(|v| (v / norm) as f32).collect())
}

/// Embed every eligible document with the hashed embedder, in input order.
pub fn embed_hashed(docs: &[TokenizedDoc], dim: usize, idf: Option<&IdfTable>) -> Result<Vec<EmbeddedRecord>> {
    docs.par_iter()
        .filter(|d| d.eligible)
        .map(|d| {
            hashed_embed(&d.tokens, dim, idf)
                .map(|v| EmbeddedRecord::new(d.id, d.class, v))
                .map_err(|e| e.for_record(d.id))
        })
        .collect()
}

const MAX_LISTED_MISSING: usize = 20;
const UNIT_NORM_TOLERANCE: f64 = 1e-3;

/// Join eligible documents with vectors from an external CSV file by id.
///
/// Vector values are passed through unchanged. When `verify_unit_norm` is set,
/// vectors whose L2 norm differs from 1 by more than 1e-3 are logged as warnings.
pub fn attach_external_vectors(
    docs: &[TokenizedDoc],
    vector_file: &Path,
    provider: &EmbeddingProvider,
    verify_unit_norm: bool,
) -> Result<Vec<EmbeddedRecord>> {
    let (dim, records) = read_all_vectors(vector_file)?;
    if dim != provider.dim {
        return Err(Error::data(format!(
            "{} holds {dim}-dimensional vectors but provider {} produces {}",
            vector_file.display(),
            provider.kind,
            provider.dim
        )));
    }
    let mut index: HashMap<u64, EmbeddedRecord> = HashMap::with_capacity(records.len());
    for r in records {
        let id = r.id;
        if index.insert(id, r).is_some() {
            return Err(Error::data(format!("{}: vector id {id} appears twice", vector_file.display())));
        }
    }
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for d in docs.iter().filter(|d| d.eligible) {
        match index.remove(&d.id) {
            None => missing.push(d.id),
            Some(r) => {
                if r.class != d.class {
                    return Err(Error::data(format!(
                        "vector file labels issue as {} but the corpus says {}",
                        r.class, d.class
                    ))
                    .for_record(d.id));
                }
                if verify_unit_norm {
                    let norm = r.vector.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                        log::warn!("issue {}: vector norm {norm:.6} is not 1", d.id);
                    }
                }
                out.push(r);
            }
        }
    }
    if !missing.is_empty() {
        let listed: Vec<String> = missing.iter().take(MAX_LISTED_MISSING).map(u64::to_string).collect();
        let more = missing.len().saturating_sub(MAX_LISTED_MISSING);
        return Err(Error::data(format!(
            "{} eligible issue(s) have no vector in {}: {}{}",
            missing.len(),
            vector_file.display(),
            listed.join(", "),
            if more > 0 { format!(" and {more} more") } else { String::new() }
        )));
    }
    Ok(out)
}

/// Sidecar describing how a vector file was produced; written next to it as
/// `<vectors>.meta.json` and embedded in trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub provider: EmbeddingProvider,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idf: Option<IdfTable>,
}

impl EmbeddingMeta {
    pub fn sidecar_path(vectors: &Path) -> PathBuf {
        let mut name = vectors.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    pub fn write(&self, vectors: &Path) -> Result<()> {
        let path = Self::sidecar_path(vectors);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::data(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(vectors: &Path) -> Result<Self> {
        let path = Self::sidecar_path(vectors);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    /// Embed a single token list the same way the training vectors were made.
    /// Only possible for the hashed provider.
    pub fn embed_tokens(&self, tokens: &[String]) -> Result<Vec<f32>> {
        if self.provider.is_external() {
            return Err(Error::invalid(format!(
                "model was trained on external {} vectors; supply a precomputed vector instead",
                self.provider.kind
            )));
        }
        hashed_embed(tokens, self.provider.dim, self.idf.as_ref())
    }
}
