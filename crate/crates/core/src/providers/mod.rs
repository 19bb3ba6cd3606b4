//! Contracts and clients for the external model services (completion LLM,
//! embedder, re-ranker), their deterministic local stand-ins, and token
//! accounting.

pub mod http;
pub mod ledger;
pub mod mock;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenizer_by_name, Tokenizer};
use crate::error::{Error, Result};
use crate::extraction::ner::{EntityRecognizer, RuleNer};
use crate::vector::Embedding;

pub use ledger::{CostReport, Phase, TokenLedger};
pub use mock::{FixtureReranker, LexicalReranker, MockEmbedder, MockLlm};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Vendor-reported usage, when the service returns it.
    pub usage: Option<Usage>,
}

pub trait LanguageModel: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str, max_tokens: usize) -> Result<Completion>;
}

pub trait Embedder: Send + Sync {
    /// Identifies the embedding space; recorded in the index manifest.
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>>;
}

pub trait Reranker: Send + Sync {
    fn name(&self) -> &str;
    /// One score per passage, higher is more relevant.
    fn rerank(&self, query: &str, passages: &[String]) -> Result<Vec<f64>>;
}

/// Calls `reranker` and checks that it returned one score per passage.
pub fn rerank_checked(reranker: &dyn Reranker, query: &str, passages: &[String]) -> Result<Vec<f64>> {
    if passages.is_empty() {
        return Ok(Vec::new());
    }
    let scores = reranker.rerank(query, passages)?;
    if scores.len() != passages.len() {
        return Err(Error::Protocol {
            provider: "rerank",
            message: format!("expected {} scores, got {}", passages.len(), scores.len()),
        });
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Llm,
    Embed,
    Rerank,
}

/// One service endpoint. `endpoint` is an `http(s)://` base URL, `mock`, or
/// `fixture:<path>`; re-rankers also accept `lexical`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model_name: String,
    pub max_retries: u32,
    pub concurrency_cap: usize,
    pub token_limit: usize,
    pub max_tokens: usize,
    pub timeout_secs: u64,
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Llm,
            endpoint: "mock".into(),
            model_name: "mock".into(),
            max_retries: 3,
            concurrency_cap: 4,
            token_limit: 8000,
            max_tokens: 512,
            timeout_secs: 120,
            backoff_ms: 200,
        }
    }
}

impl ProviderConfig {
    pub fn mock(kind: ProviderKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.concurrency_cap < 1 {
            return Err(Error::InvalidArgument("concurrency_cap must be at least 1".into()));
        }
        if self.token_limit < 1 {
            return Err(Error::InvalidArgument("token_limit must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock" || (self.kind == ProviderKind::Rerank && self.endpoint == "lexical")
    }
}

/// Where query mentions for entity anchoring come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryEntityMode {
    #[default]
    Ner,
    Llm,
}

/// The `--providers` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProvidersConfig {
    pub llm: ProviderConfig,
    pub embed: ProviderConfig,
    pub rerank: ProviderConfig,
    pub embedding_dim: usize,
    pub seed: u64,
    pub tokenizer: String,
    pub query_entities: QueryEntityMode,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            llm: ProviderConfig::mock(ProviderKind::Llm),
            embed: ProviderConfig::mock(ProviderKind::Embed),
            rerank: ProviderConfig {
                endpoint: "lexical".into(),
                model_name: "lexical".into(),
                ..ProviderConfig::mock(ProviderKind::Rerank)
            },
            embedding_dim: mock::MOCK_DIM,
            seed: 0,
            tokenizer: "words".into(),
            query_entities: QueryEntityMode::Ner,
        }
    }
}

impl ProvidersConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&raw)?;
        cfg.llm.kind = ProviderKind::Llm;
        cfg.embed.kind = ProviderKind::Embed;
        cfg.rerank.kind = ProviderKind::Rerank;
        Ok(cfg)
    }

    /// Applies `CLUE_LLM_URL`, `CLUE_EMBED_URL` and `CLUE_RERANK_URL`.
    pub fn apply_env(&mut self) {
        self.apply_overrides(|k| std::env::var(k).ok());
    }

    pub fn apply_overrides(&mut self, get: impl Fn(&str) -> Option<String>) {
        for (var, target) in [
            ("CLUE_LLM_URL", &mut self.llm),
            ("CLUE_EMBED_URL", &mut self.embed),
            ("CLUE_RERANK_URL", &mut self.rerank),
        ] {
            if let Some(url) = get(var).filter(|u| !u.trim().is_empty()) {
                target.endpoint = url;
            }
        }
    }

    pub fn all_mock(&self) -> bool {
        self.llm.is_mock() && self.embed.is_mock() && self.rerank.is_mock()
    }
}

/// LLM handle that enforces the prompt limit and records token usage.
#[derive(Clone)]
pub struct LlmClient {
    model: Arc<dyn LanguageModel>,
    tokenizer: Arc<dyn Tokenizer>,
    ledger: Arc<TokenLedger>,
    token_limit: usize,
    max_tokens: usize,
}

impl LlmClient {
    pub fn new(
        model: Arc<dyn LanguageModel>,
        tokenizer: Arc<dyn Tokenizer>,
        ledger: Arc<TokenLedger>,
        token_limit: usize,
        max_tokens: usize,
    ) -> Self {
        Self {
            model,
            tokenizer,
            ledger,
            token_limit,
            max_tokens,
        }
    }

    pub fn token_limit(&self) -> usize {
        self.token_limit
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        self.tokenizer.count(text)
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.ledger
    }

    /// Completes `prompt`, charging the tokens to `phase`. Over-limit prompts
    /// are rejected without contacting the model.
    pub fn complete(&self, prompt: &str, phase: Phase) -> Result<CompletionRecord> {
        let prompt_tokens = self.tokenizer.count(prompt);
        if prompt_tokens > self.token_limit {
            return Err(Error::PromptTooLong {
                tokens: prompt_tokens,
                limit: self.token_limit,
            });
        }
        let completion = self.model.complete(prompt, self.max_tokens)?;
        let completion_tokens = self.tokenizer.count(&completion.text);
        self.ledger
            .record(phase, prompt_tokens as u64, completion_tokens as u64);
        Ok(CompletionRecord {
            text: completion.text,
            prompt_tokens: prompt_tokens as u64,
            completion_tokens: completion_tokens as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRecord {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Everything the pipeline needs from the outside world.
#[derive(Clone)]
pub struct Providers {
    pub llm: LlmClient,
    pub embedder: Arc<dyn Embedder>,
    pub reranker: Arc<dyn Reranker>,
    pub ner: Arc<dyn EntityRecognizer>,
    pub tokenizer: Arc<dyn Tokenizer>,
    pub ledger: Arc<TokenLedger>,
    pub llm_concurrency: usize,
    pub query_entities: QueryEntityMode,
}

impl Providers {
    pub fn from_config(cfg: &ProvidersConfig) -> Result<Self> {
        for p in [&cfg.llm, &cfg.embed, &cfg.rerank] {
            p.validate()?;
        }
        let tokenizer: Arc<dyn Tokenizer> = tokenizer_by_name(&cfg.tokenizer)
            .map(Arc::from)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tokenizer `{}`", cfg.tokenizer)))?;
        let ledger = Arc::new(TokenLedger::new(tokenizer.name()));

        let model: Arc<dyn LanguageModel> = match endpoint_kind(&cfg.llm.endpoint) {
            Endpoint::Mock => Arc::new(MockLlm::new()),
            Endpoint::Fixture(path) => Arc::new(MockLlm::from_fixture(Path::new(path))?),
            Endpoint::Http => Arc::new(http::HttpLlm::new(&cfg.llm)?),
            Endpoint::Lexical | Endpoint::Unknown => return Err(bad_endpoint(&cfg.llm)),
        };
        let embedder: Arc<dyn Embedder> = match endpoint_kind(&cfg.embed.endpoint) {
            Endpoint::Mock => Arc::new(MockEmbedder::new(cfg.embedding_dim, cfg.seed)),
            Endpoint::Fixture(path) => {
                Arc::new(MockEmbedder::new(cfg.embedding_dim, cfg.seed).with_fixture_file(Path::new(path))?)
            }
            Endpoint::Http => Arc::new(http::HttpEmbedder::new(&cfg.embed, cfg.embedding_dim)?),
            Endpoint::Lexical | Endpoint::Unknown => return Err(bad_endpoint(&cfg.embed)),
        };
        let reranker: Arc<dyn Reranker> = match endpoint_kind(&cfg.rerank.endpoint) {
            Endpoint::Mock | Endpoint::Lexical => Arc::new(LexicalReranker),
            Endpoint::Fixture(path) => Arc::new(FixtureReranker::from_file(Path::new(path))?),
            Endpoint::Http => Arc::new(http::HttpReranker::new(&cfg.rerank)?),
            Endpoint::Unknown => return Err(bad_endpoint(&cfg.rerank)),
        };

        Ok(Self {
            llm: LlmClient::new(
                model,
                tokenizer.clone(),
                ledger.clone(),
                cfg.llm.token_limit,
                cfg.llm.max_tokens,
            ),
            embedder,
            reranker,
            ner: Arc::new(RuleNer),
            tokenizer,
            ledger,
            llm_concurrency: cfg.llm.concurrency_cap,
            query_entities: cfg.query_entities,
        })
    }

    /// Fully offline providers: mock LLM and embedder, lexical re-ranker.
    pub fn mock(seed: u64) -> Self {
        Self::from_config(&ProvidersConfig {
            seed,
            ..ProvidersConfig::default()
        })
        .expect("default mock configuration is valid")
    }

    /// Assembles providers from explicit parts with the default tokenizer,
    /// rule-based NER and a fresh ledger.
    pub fn from_parts(model: Arc<dyn LanguageModel>, embedder: Arc<dyn Embedder>, reranker: Arc<dyn Reranker>) -> Self {
        let tokenizer: Arc<dyn Tokenizer> = Arc::new(crate::corpus::WordTokenizer);
        let ledger = Arc::new(TokenLedger::new(tokenizer.name()));
        let defaults = ProviderConfig::default();
        Self {
            llm: LlmClient::new(
                model,
                tokenizer.clone(),
                ledger.clone(),
                defaults.token_limit,
                defaults.max_tokens,
            ),
            embedder,
            reranker,
            ner: Arc::new(RuleNer),
            tokenizer,
            ledger,
            llm_concurrency: defaults.concurrency_cap,
            query_entities: QueryEntityMode::Ner,
        }
    }

    /// Same services with a fresh ledger, e.g. to separate query-time costs
    /// from an index build.
    pub fn with_fresh_ledger(&self) -> Self {
        let ledger = Arc::new(TokenLedger::new(self.tokenizer.name()));
        let mut out = self.clone();
        out.llm.ledger = ledger.clone();
        out.ledger = ledger;
        out
    }
}

enum Endpoint<'a> {
    Mock,
    Lexical,
    Fixture(&'a str),
    Http,
    Unknown,
}

fn endpoint_kind(endpoint: &str) -> Endpoint<'_> {
    if let Some(path) = endpoint.strip_prefix("fixture:") {
        Endpoint::Fixture(path)
    } else if endpoint == "lexical" {
        Endpoint::Lexical
    } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        Endpoint::Http
    } else if endpoint.is_empty() || endpoint == "mock" {
        Endpoint::Mock
    } else {
        Endpoint::Unknown
    }
}

fn bad_endpoint(cfg: &ProviderConfig) -> Error {
    Error::InvalidArgument(format!(
        "endpoint `{}` is not valid for a {:?} provider",
        cfg.endpoint, cfg.kind
    ))
}
