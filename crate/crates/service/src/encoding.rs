//! Turns request items (text and/or vector) into unit embeddings.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Duration;

use memreward::encoder::PrecomputedStore;
use memreward::{Embedding, EncoderKind, EncoderSpec, HashEncoder, TextEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ServiceError};

/// A query or response as sent by clients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct ExternalResponse {
    vectors: Vec<Vec<f64>>,
}

pub enum Encoder {
    Hash(HashEncoder),
    /// Texts are looked up by id; without a store only vectors are accepted.
    Precomputed(Option<PrecomputedStore>),
    /// `POST {"texts": [...]}` to `url`, expecting `{"vectors": [[...]]}`.
    External { client: reqwest::Client, url: String },
}

impl Encoder {
    pub fn from_spec(spec: &EncoderSpec) -> Result<Self, ServiceError> {
        Ok(match spec.kind {
            EncoderKind::DeterministicHash => Encoder::Hash(HashEncoder::from_spec(spec)?),
            EncoderKind::Precomputed => match spec.param_str("path") {
                Some(path) => {
                    let file = BufReader::new(File::open(Path::new(path))?);
                    Encoder::Precomputed(Some(PrecomputedStore::load(file, spec.dimension)?))
                }
                None => Encoder::Precomputed(None),
            },
            EncoderKind::External => {
                let url = spec
                    .param_str("url")
                    .ok_or_else(|| ServiceError::Config("external encoder needs a `url` parameter".into()))?;
                let timeout = spec.param_u64("timeout_secs", 30)?;
                let client = reqwest::Client::builder()
                    .timeout(Duration::from_secs(timeout))
                    .build()
                    .map_err(|e| ServiceError::Config(e.to_string()))?;
                Encoder::External {
                    client,
                    url: url.to_owned(),
                }
            }
        })
    }

    async fn encode_texts(&self, texts: &[&str], dimension: usize) -> Result<Vec<Embedding>, ApiError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        match self {
            Encoder::Hash(h) => Ok(h.encode_batch(texts)?),
            Encoder::Precomputed(None) => Err(ApiError::bad_request(
                "this engine has no text encoder; send vectors",
            )),
            Encoder::Precomputed(Some(store)) => texts
                .iter()
                .map(|t| {
                    store
                        .get(t)
                        .cloned()
                        .ok_or_else(|| ApiError::bad_request(format!("no precomputed vector for `{t}`")))
                })
                .collect(),
            Encoder::External { client, url } => {
                let unavailable = |m: String| ApiError::from(memreward::Error::ExternalEncoderUnavailable(m));
                let resp = client
                    .post(url)
                    .json(&ExternalRequest { texts })
                    .send()
                    .await
                    .and_then(|r| r.error_for_status())
                    .map_err(|e| unavailable(e.to_string()))?;
                let body: ExternalResponse = resp.json().await.map_err(|e| unavailable(e.to_string()))?;
                if body.vectors.len() != texts.len() {
                    return Err(unavailable(format!(
                        "asked for {} vectors, got {}",
                        texts.len(),
                        body.vectors.len()
                    )));
                }
                body.vectors
                    .into_iter()
                    .map(|v| {
                        if v.len() != dimension {
                            return Err(unavailable(format!("vector of dimension {}, expected {dimension}", v.len())));
                        }
                        Embedding::normalized(v).map_err(|e| unavailable(e.to_string()))
                    })
                    .collect()
            }
        }
    }

    /// Resolves every item, preferring its vector over its text. Texts are
    /// encoded in one batch.
    pub async fn resolve(&self, items: &[&Item], dimension: usize) -> Result<Vec<Embedding>, ApiError> {
        let mut out: Vec<Option<Embedding>> = Vec::with_capacity(items.len());
        let mut pending: Vec<(usize, &str)> = Vec::new();
        for (i, item) in items.iter().enumerate() {
            match (&item.vector, &item.text) {
                (Some(v), _) => {
                    if v.len() != dimension {
                        return Err(memreward::Error::DimensionMismatch {
                            expected: dimension,
                            found: v.len(),
                        }
                        .into());
                    }
                    out.push(Some(Embedding::normalized(v.clone())?));
                }
                (None, Some(t)) => {
                    pending.push((i, t.as_str()));
                    out.push(None);
                }
                (None, None) => return Err(ApiError::bad_request(format!("item {i} has neither text nor vector"))),
            }
        }
        let texts: Vec<&str> = pending.iter().map(|&(_, t)| t).collect();
        let encoded = self.encode_texts(&texts, dimension).await?;
        for ((i, _), e) in pending.into_iter().zip(encoded) {
            out[i] = Some(e);
        }
        Ok(out.into_iter().map(|e| e.expect("every slot filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::http::StatusCode;

    fn item(text: Option<&str>, vector: Option<Vec<f64>>) -> Item {
        Item {
            text: text.map(str::to_owned),
            vector,
        }
    }

    #[tokio::test]
    async fn vectors_win_over_text_and_are_normalized() {
        let enc = Encoder::from_spec(&EncoderSpec::hash(2, 0)).unwrap();
        let a = item(Some("ignored"), Some(vec![3.0, 4.0]));
        let out = enc.resolve(&[&a], 2).await.unwrap();
        assert_eq!(out[0].as_slice(), &[0.6, 0.8]);
    }

    #[tokio::test]
    async fn wrong_dimension_is_bad_request() {
        let enc = Encoder::from_spec(&EncoderSpec::hash(3, 0)).unwrap();
        let a = item(None, Some(vec![1.0, 0.0]));
        let err = enc.resolve(&[&a], 3).await.unwrap_err();
        assert_eq!(err.status, StatusCode::BAD_REQUEST);
        let empty = item(None, None);
        assert_eq!(enc.resolve(&[&empty], 3).await.unwrap_err().status, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn vector_only_encoder_rejects_text() {
        let enc = Encoder::from_spec(&EncoderSpec::precomputed(3)).unwrap();
        let a = item(Some("hello"), None);
        assert_eq!(enc.resolve(&[&a], 3).await.unwrap_err().status, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn unreachable_external_encoder_is_unavailable() {
        // port 9 (discard) on localhost is closed in the test sandbox
        let enc = Encoder::from_spec(&EncoderSpec::external(3, "http://127.0.0.1:9/embed")).unwrap();
        let a = item(Some("hello"), None);
        let err = enc.resolve(&[&a], 3).await.unwrap_err();
        assert_eq!(err.status, StatusCode::SERVICE_UNAVAILABLE);
        assert_eq!(err.code, "encoder_unavailable");
    }
}
