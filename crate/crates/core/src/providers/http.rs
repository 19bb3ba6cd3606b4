//! JSON-over-HTTP clients for the service-agnostic wire contract:
//!
//! ```text
//! POST {base}/embed    {texts: [..]}            -> {vectors: [[..]]}
//! POST {base}/rerank   {query, passages: [..]}  -> {scores: [..]}
//! POST {base}/complete {prompt, max_tokens}     -> {text, usage: {prompt_tokens, completion_tokens}}
//! ```
//!
//! Transport errors, 429 and 5xx responses are retried with exponential
//! backoff; other 4xx responses fail immediately.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Completion, Embedder, LanguageModel, ProviderConfig, Reranker, Usage};
use crate::error::{Error, Result};
use crate::vector::Embedding;

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpTransport {
    provider: &'static str,
    base: String,
    client: reqwest::blocking::Client,
    max_retries: u32,
    backoff: Duration,
    permits: Semaphore,
}

impl HttpTransport {
    pub fn new(provider: &'static str, cfg: &ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Transport {
                provider,
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self {
            provider,
            base: cfg.endpoint.trim_end_matches('/').to_string(),
            client,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            permits: Semaphore::new(cfg.concurrency_cap),
        })
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}/{}", self.base, path);
        let attempts = self.max_retries as usize + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.backoff * 2u32.saturating_pow(attempt as u32 - 1);
                log::warn!("{} request failed ({last}); retry {attempt} in {wait:?}", self.provider);
                std::thread::sleep(wait);
            }
            let response = {
                let _permit = self.permits.acquire();
                self.client.post(&url).json(body).send()
            };
            match response {
                Err(e) => last = e.to_string(),
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.json::<R>().map_err(|e| Error::Protocol {
                            provider: self.provider,
                            message: e.to_string(),
                        });
                    }
                    let body = resp.text().unwrap_or_default();
                    if status.is_client_error() && status.as_u16() != 429 {
                        return Err(Error::Protocol {
                            provider: self.provider,
                            message: format!("HTTP {status}: {body}"),
                        });
                    }
                    last = format!("HTTP {status}");
                }
            }
        }
        Err(Error::Transport {
            provider: self.provider,
            attempts,
            message: last,
        })
    }
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct CompleteResponse {
    text: String,
    usage: Option<WireUsage>,
}

pub struct HttpLlm {
    transport: HttpTransport,
    model_name: String,
}

impl HttpLlm {
    pub fn new(cfg: &ProviderConfig) -> Result<Self> {
        Ok(Self {
            transport: HttpTransport::new("llm", cfg)?,
            model_name: cfg.model_name.clone(),
        })
    }
}

impl LanguageModel for HttpLlm {
    fn name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, prompt: &str, max_tokens: usize) -> Result<Completion> {
        let r: CompleteResponse = self
            .transport
            .post("complete", &CompleteRequest { prompt, max_tokens })?;
        Ok(Completion {
            text: r.text,
            usage: r.usage.map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Embedding>,
}

pub struct HttpEmbedder {
    transport: HttpTransport,
    model_name: String,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(cfg: &ProviderConfig, dim: usize) -> Result<Self> {
        Ok(Self {
            transport: HttpTransport::new("embed", cfg)?,
            model_name: cfg.model_name.clone(),
            dim,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> String {
        format!("http:{}", self.model_name)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let r: EmbedResponse = self.transport.post("embed", &EmbedRequest { texts })?;
        if r.vectors.len() != texts.len() {
            return Err(Error::Protocol {
                provider: "embed",
                message: format!("expected {} vectors, got {}", texts.len(), r.vectors.len()),
            });
        }
        Ok(r.vectors)
    }
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    passages: &'a [String],
}

#[derive(Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

pub struct HttpReranker {
    transport: HttpTransport,
    model_name: String,
}

impl HttpReranker {
    pub fn new(cfg: &ProviderConfig) -> Result<Self> {
        Ok(Self {
            transport: HttpTransport::new("rerank", cfg)?,
            model_name: cfg.model_name.clone(),
        })
    }
}

impl Reranker for HttpReranker {
    fn name(&self) -> &str {
        &self.model_name
    }

    fn rerank(&self, query: &str, passages: &[String]) -> Result<Vec<f64>> {
        let r: RerankResponse = self.transport.post("rerank", &RerankRequest { query, passages })?;
        if r.scores.len() != passages.len() {
            return Err(Error::Protocol {
                provider: "rerank",
                message: format!("expected {} scores, got {}", passages.len(), r.scores.len()),
            });
        }
        Ok(r.scores)
    }
}
