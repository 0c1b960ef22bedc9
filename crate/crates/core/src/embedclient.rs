//! Client for HTTP embedding services with an on-disk cache and an offline
//! fixture mode.
//!
//! Requests are `{"model": ..., "input": [...]}` POSTed as JSON; responses
//! carry `{"data": [{"index": i, "embedding": [...]}, ...]}` and are put
//! back in input order by `index`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vecspace::{VectorSource, WordVectors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EmbedMode {
    Live,
    Fixture { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub base_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub mode: EmbedMode,
    pub cache_dir: Option<PathBuf>,
    pub timeout_secs: u64,
    pub max_batch: usize,
    pub max_retries: u32,
    pub parallel_batches: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            base_url: "https://api.openai.com/v1/embeddings".into(),
            model_name: "text-embedding-3-large".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            mode: EmbedMode::Live,
            cache_dir: None,
            timeout_secs: 60,
            max_batch: 256,
            max_retries: 3,
            parallel_batches: 1,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    index: usize,
    embedding: Vec<f64>,
}

/// Counters exposed for cache and batching checks.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct EmbedStats {
    pub requests: usize,
    pub cache_hits: usize,
    pub cache_writes: usize,
}

pub struct EmbedClient {
    cfg: EmbedConfig,
    fixture: Option<HashMap<String, Vec<f64>>>,
    agent: ureq::Agent,
    requests: AtomicUsize,
    cache_hits: AtomicUsize,
    cache_writes: AtomicUsize,
}

impl EmbedClient {
    pub fn new(cfg: EmbedConfig) -> Result<Self> {
        if cfg.max_batch == 0 {
            return Err(Error::InvalidInput("max_batch must be >= 1".into()));
        }
        let fixture = match &cfg.mode {
            EmbedMode::Fixture { path } => Some(load_fixture(path)?),
            EmbedMode::Live => None,
        };
        if let Some(dir) = &cfg.cache_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build();
        Ok(EmbedClient {
            cfg,
            fixture,
            agent,
            requests: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            cache_writes: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &EmbedConfig {
        &self.cfg
    }

    pub fn stats(&self) -> EmbedStats {
        EmbedStats {
            requests: self.requests.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            cache_writes: self.cache_writes.load(Ordering::SeqCst),
        }
    }

    /// One vector per input text, in input order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("nothing to embed".into()));
        }
        let mut found: HashMap<&str, Vec<f64>> = HashMap::new();
        let mut queued: HashSet<&str> = HashSet::new();
        let mut missing: Vec<&String> = Vec::new();
        for text in texts {
            if found.contains_key(text.as_str()) || queued.contains(text.as_str()) {
                continue;
            }
            match self.cache_read(text)? {
                Some(v) => {
                    self.cache_hits.fetch_add(1, Ordering::SeqCst);
                    found.insert(text, v);
                }
                None => {
                    queued.insert(text);
                    missing.push(text);
                }
            }
        }

        if !missing.is_empty() {
            let fetched = match &self.fixture {
                Some(fixture) => missing
                    .iter()
                    .map(|t| fixture.get(*t).cloned().ok_or_else(|| Error::FixtureMiss((*t).clone())))
                    .collect::<Result<Vec<_>>>()?,
                None => {
                    let owned: Vec<String> = missing.iter().map(|t| (*t).clone()).collect();
                    self.fetch_live(&owned)?
                }
            };
            for (text, vector) in missing.into_iter().zip(fetched) {
                self.cache_write(text, &vector)?;
                found.insert(text, vector);
            }
        }

        let out: Vec<Vec<f64>> = texts.iter().map(|t| found[t.as_str()].clone()).collect();
        let dim = out[0].len();
        if let Some(bad) = out.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Ok(out)
    }

    fn fetch_live(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let key = std::env::var(&self.cfg.api_key_env).map_err(|_| Error::Embed {
            status: None,
            message: format!("environment variable {} is not set", self.cfg.api_key_env),
        })?;
        let batches: Vec<&[String]> = texts.chunks(self.cfg.max_batch).collect();
        let mut results: Vec<Result<Vec<Vec<f64>>>> = Vec::with_capacity(batches.len());
        for group in batches.chunks(self.cfg.parallel_batches.max(1)) {
            let group_results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|batch| scope.spawn(|| self.request_batch(batch, &key)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("batch thread panicked")).collect()
            });
            results.extend(group_results);
        }
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    fn request_batch(&self, batch: &[String], key: &str) -> Result<Vec<Vec<f64>>> {
        let body = EmbedRequest {
            model: &self.cfg.model_name,
            input: batch,
        };
        let mut attempt = 0;
        let response = loop {
            self.requests.fetch_add(1, Ordering::SeqCst);
            let result = self
                .agent
                .post(&self.cfg.base_url)
                .set("Authorization", &format!("Bearer {key}"))
                .send_json(&body);
            match result {
                Ok(resp) => break resp,
                Err(ureq::Error::Status(code, resp)) => {
                    let retryable = code == 429 || code >= 500;
                    if !retryable || attempt >= self.cfg.max_retries {
                        let message = resp.into_string().unwrap_or_default();
                        return Err(Error::Embed {
                            status: Some(code),
                            message,
                        });
                    }
                }
                Err(e) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(Error::Embed {
                            status: None,
                            message: e.to_string(),
                        });
                    }
                }
            }
            std::thread::sleep(Duration::from_millis(100 << attempt));
            attempt += 1;
        };
        let parsed: EmbedResponse = response.into_json().map_err(|e| Error::Embed {
            status: None,
            message: format!("malformed response: {e}"),
        })?;
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; batch.len()];
        for datum in parsed.data {
            let slot = slots.get_mut(datum.index).ok_or_else(|| Error::Embed {
                status: None,
                message: format!("response index {} out of range", datum.index),
            })?;
            *slot = Some(datum.embedding);
        }
        let vectors = slots
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::Embed {
                    status: None,
                    message: format!("response lacks index {i}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dim = vectors[0].len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim || v.is_empty()) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Ok(vectors)
    }

    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        self.cfg
            .cache_dir
            .as_ref()
            .map(|dir| dir.join(format!("{}.vec", cache_key(&self.cfg.model_name, text))))
    }

    fn cache_read(&self, text: &str) -> Result<Option<Vec<f64>>> {
        let Some(path) = self.cache_path(text) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => decode_vector(&bytes).map(Some).ok_or_else(|| {
                Error::InvalidInput(format!("corrupt cache entry {}", path.display()))
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn cache_write(&self, text: &str, vector: &[f64]) -> Result<()> {
        let Some(path) = self.cache_path(text) else {
            return Ok(());
        };
        let dir = path.parent().expect("cache entries live in the cache dir");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(&encode_vector(vector)).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        self.cache_writes.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

/// Hex SHA-256 of the model name and text.
pub fn cache_key(model: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

/// `u32` dimension followed by `f64` components, all little-endian.
pub fn encode_vector(v: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 8 * v.len());
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_vector(bytes: &[u8]) -> Option<Vec<f64>> {
    let dim = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let body = &bytes[4..];
    if body.len() != dim * 8 {
        return None;
    }
    Some(
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    )
}

pub fn load_fixture(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Word-level vectors: every distinct token is embedded as its own input.
pub fn embed_words<S: AsRef<str>>(client: &EmbedClient, tokens: &[S]) -> Result<WordVectors> {
    let mut distinct: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    distinct.sort();
    distinct.dedup();
    let vectors = client.embed(&distinct)?;
    WordVectors::from_entries(distinct.into_iter().zip(vectors), VectorSource::EmbeddingService)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_client(cache: Option<PathBuf>) -> (EmbedClient, tempfile::NamedTempFile) {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"abc": [0.1, 0.2], "def": [0.3, 0.4]}}"#).unwrap();
        let cfg = EmbedConfig {
            mode: EmbedMode::Fixture {
                path: f.path().to_path_buf(),
            },
            cache_dir: cache,
            ..EmbedConfig::default()
        };
        (EmbedClient::new(cfg).unwrap(), f)
    }

    #[test]
    fn fixture_lookup() {
        let (client, _f) = fixture_client(None);
        let out = client.embed(&["abc".to_string()]).unwrap();
        assert_eq!(out, vec![vec![0.1, 0.2]]);
        assert!(matches!(client.embed(&["zzz".to_string()]), Err(Error::FixtureMiss(t)) if t == "zzz"));
        assert!(client.embed(&[]).is_err());
        assert_eq!(client.stats().requests, 0);
    }

    #[test]
    fn cache_hits_on_second_call() {
        let dir = tempfile::tempdir().unwrap();
        let (client, _f) = fixture_client(Some(dir.path().to_path_buf()));
        let texts = vec!["abc".to_string(), "def".to_string(), "abc".to_string()];
        let first = client.embed(&texts).unwrap();
        assert_eq!(client.stats().cache_hits, 0);
        assert_eq!(client.stats().cache_writes, 2);
        let second = client.embed(&texts).unwrap();
        assert_eq!(first, second);
        assert_eq!(client.stats().cache_hits, 2);
        assert_eq!(client.stats().cache_writes, 2);
    }

    #[test]
    fn vector_encoding_is_bit_exact() {
        let v = vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -3.5];
        let back = decode_vector(&encode_vector(&v)).unwrap();
        assert_eq!(
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert!(decode_vector(&[1, 0, 0, 0, 1]).is_none());
    }

    #[test]
    fn live_mode_requires_key() {
        let cfg = EmbedConfig {
            api_key_env: "STS_CORE_TEST_KEY_THAT_IS_NOT_SET".into(),
            base_url: "http://127.0.0.1:9/embeddings".into(),
            ..EmbedConfig::default()
        };
        let client = EmbedClient::new(cfg).unwrap();
        assert!(matches!(client.embed(&["x".to_string()]), Err(Error::Embed { status: None, .. })));
        assert_eq!(client.stats().requests, 0);
    }

    #[test]
    fn word_vectors_from_fixture() {
        let (client, _f) = fixture_client(None);
        let wv = embed_words(&client, &["def", "abc", "abc"]).unwrap();
        assert_eq!(wv.len(), 2);
        assert_eq!(wv.get("def").unwrap(), &[0.3, 0.4]);
    }
}
