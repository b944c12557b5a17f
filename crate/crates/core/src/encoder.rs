//! Shared embedding space for queries and responses.
//!
//! Vectors are plain `f64` slices wrapped in [`Embedding`]. Anything written
//! to memory is L2-normalized first, so cosine similarity and Euclidean
//! distance agree (`‖u − v‖² = 2 − 2·cos(u, v)` for unit vectors).

use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;
use std::io::BufRead;
use std::ops::Deref;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default dimension, matching the common MiniLM-style sentence encoders.
pub const DEFAULT_DIMENSION: usize = 384;
pub const DEFAULT_NGRAM: usize = 3;

/// Dense real vector. Finite by construction; unit norm only when built
/// through [`Embedding::normalized`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps `values` as-is. Rejects NaN/Inf.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(values))
    }

    /// Scales `values` to unit L2 norm.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        if (norm - 1.0).abs() > 1e-12 {
            values.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// Returns a unit-norm copy (or `self` when already unit within 1e-12).
    pub fn to_unit(&self) -> Result<Self> {
        Self::normalized(self.0.clone())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        check_dim(expected, self.dim())
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub(crate) fn l2_norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `dot(u, v) / (‖u‖‖v‖)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Componentwise mean. The result is deliberately left un-normalized.
pub fn centroid<'a, I>(vectors: I) -> Result<Embedding>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptyCollection)?;
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for v in iter {
        check_dim(sum.len(), v.len())?;
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        count += 1;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Embedding::from_raw(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    DeterministicHash,
    Precomputed,
    External,
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::DeterministicHash => "deterministic-hash",
            EncoderKind::Precomputed => "precomputed",
            EncoderKind::External => "external",
        })
    }
}

/// Encoder selection. `parameters` is kind-specific: `ngram` and `seed` for
/// the hash encoder, `url` (and optionally `timeout_secs`) for external.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dimension: usize,
    #[serde(default)]
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl EncoderSpec {
    pub fn hash(dimension: usize, seed: u64) -> Self {
        let mut parameters = BTreeMap::new();
        parameters.insert("seed".to_string(), seed.into());
        parameters.insert("ngram".to_string(), (DEFAULT_NGRAM as u64).into());
        Self {
            kind: EncoderKind::DeterministicHash,
            dimension,
            parameters,
        }
    }

    pub fn precomputed(dimension: usize) -> Self {
        Self {
            kind: EncoderKind::Precomputed,
            dimension,
            parameters: BTreeMap::new(),
        }
    }

    pub fn external(dimension: usize, url: &str) -> Self {
        let mut parameters = BTreeMap::new();
        parameters.insert("url".to_string(), url.into());
        Self {
            kind: EncoderKind::External,
            dimension,
            parameters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidConfig("encoder dimension must be > 0".into()));
        }
        if self.kind == EncoderKind::DeterministicHash && self.param_u64("ngram", 3)? == 0 {
            return Err(Error::InvalidConfig("ngram must be > 0".into()));
        }
        Ok(())
    }

    pub fn param_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.parameters.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| Error::InvalidConfig(format!("parameter `{key}` must be a non-negative integer"))),
        }
    }

    pub fn param_str(&self, key: &str) -> Option<&str> {
        self.parameters.get(key).and_then(|v| v.as_str())
    }
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self::hash(DEFAULT_DIMENSION, 0)
    }
}

/// Anything that maps text into the shared space.
pub trait TextEncoder: Send + Sync {
    fn dimension(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Embedding>;

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.encode(t)).collect()
    }
}

/// Hashed character n-gram counts projected into `dimension` buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashEncoder {
    dimension: usize,
    ngram: usize,
    seed: u64,
}

impl HashEncoder {
    pub fn new(dimension: usize, ngram: usize, seed: u64) -> Result<Self> {
        if dimension == 0 || ngram == 0 {
            return Err(Error::InvalidConfig("dimension and ngram must be > 0".into()));
        }
        Ok(Self {
            dimension,
            ngram,
            seed,
        })
    }

    pub fn from_spec(spec: &EncoderSpec) -> Result<Self> {
        if spec.kind != EncoderKind::DeterministicHash {
            return Err(Error::UnsupportedKind(spec.kind.to_string()));
        }
        Self::new(
            spec.dimension,
            spec.param_u64("ngram", DEFAULT_NGRAM as u64)? as usize,
            spec.param_u64("seed", 0)?,
        )
    }

    fn bucket(&self, gram: &[char]) -> usize {
        let mut h = FnvHasher::with_key(0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut buf = [0u8; 4];
        for c in gram {
            h.write(c.encode_utf8(&mut buf).as_bytes());
        }
        (h.finish() % self.dimension as u64) as usize
    }
}

impl TextEncoder for HashEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        let chars: Vec<char> = text.chars().collect();
        let mut counts = vec![0.0; self.dimension];
        if chars.len() < self.ngram {
            counts[self.bucket(&chars)] += 1.0;
        } else {
            for gram in chars.windows(self.ngram) {
                counts[self.bucket(gram)] += 1.0;
            }
        }
        Embedding::normalized(counts)
    }
}

/// One-shot encoding from a spec. Only the hash kind can encode in-process;
/// external encoders need the service transport.
pub fn encode(spec: &EncoderSpec, text: &str) -> Result<Embedding> {
    match spec.kind {
        EncoderKind::DeterministicHash => HashEncoder::from_spec(spec)?.encode(text),
        EncoderKind::Precomputed => Err(Error::UnsupportedKind(spec.kind.to_string())),
        EncoderKind::External => Err(Error::ExternalEncoderUnavailable(
            "no transport configured for the external encoder".into(),
        )),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PrecomputedLine {
    id: String,
    vector: Vec<f64>,
}

/// Precomputed embeddings loaded from JSONL lines `{"id": ..., "vector": [...]}`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedStore {
    dimension: usize,
    ids: Vec<String>,
    vectors: HashMap<String, Embedding>,
}

impl PrecomputedStore {
    pub fn load<R: BufRead>(reader: R, dimension: usize) -> Result<Self> {
        let mut store = Self {
            dimension,
            ..Default::default()
        };
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PrecomputedLine = serde_json::from_str(&line)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
            check_dim(dimension, rec.vector.len())?;
            let emb = Embedding::normalized(rec.vector)?;
            if store.vectors.insert(rec.id.clone(), emb).is_none() {
                store.ids.push(rec.id);
            }
        }
        Ok(store)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.vectors.get(id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Vectors in file order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding)> {
        self.ids.iter().map(|id| (id.as_str(), &self.vectors[id]))
    }
}
