//! Deterministic offline providers.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{Completion, Embedder, LanguageModel, Reranker};
use crate::corpus::{split_sentences, Tokenizer, WordTokenizer};
use crate::error::{Error, Result};
use crate::extraction::ner::RuleNer;
use crate::prompts;
use crate::vector::{validate, Embedding};

pub const MOCK_DIM: usize = 64;

fn between<'a>(haystack: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = haystack.rfind(open)? + open.len();
    let end = haystack[start..].rfind(close).map_or(haystack.len(), |e| start + e);
    Some(&haystack[start..end])
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

/// Completion stand-in.
///
/// Exact prompts found in the canned table get their stored reply. Otherwise
/// the reply is derived from the prompt: extraction prompts get the passage's
/// sentences as knowledge units, answer prompts echo their context, and
/// query-entity prompts get the rule-based entities of the question.
#[derive(Debug, Default)]
pub struct MockLlm {
    canned: HashMap<String, String>,
    calls: AtomicU64,
}

#[derive(Deserialize)]
struct LlmFixture {
    responses: HashMap<String, String>,
}

impl MockLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, prompt: impl Into<String>, reply: impl Into<String>) -> Self {
        self.canned.insert(prompt.into(), reply.into());
        self
    }

    pub fn from_fixture(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: LlmFixture = serde_json::from_str(&raw)?;
        Ok(Self {
            canned: f.responses,
            calls: AtomicU64::new(0),
        })
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn derive(prompt: &str) -> String {
        if first_line(prompt) == first_line(prompts::EXTRACT_UNITS_V1) {
            let passage = between(prompt, "\nInput: ", "\nOutput:").unwrap_or("");
            let units: Vec<&str> = split_sentences(passage);
            return serde_json::to_string_pretty(&serde_json::json!({ "knowledge units": units }))
                .expect("string list serializes");
        }
        if first_line(prompt) == first_line(prompts::QUERY_ENTITIES_V1) {
            let question = between(prompt, "\nQuestion: ", "\nOutput:").unwrap_or("");
            let entities = RuleNer.entities(question);
            return serde_json::json!({ "entities": entities }).to_string();
        }
        if let Some(ctx) = between(prompt, "Given Context: ", "\n\nGive the best full answer") {
            return ctx.to_string();
        }
        String::new()
    }
}

impl LanguageModel for MockLlm {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str, _max_tokens: usize) -> Result<Completion> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let text = match self.canned.get(prompt) {
            Some(t) => t.clone(),
            None => Self::derive(prompt),
        };
        Ok(Completion { text, usage: None })
    }
}

/// Hash-seeded embedder: every text maps to a fixed pseudo-random unit vector.
/// Explicit vectors can be pinned per text for scripted scenarios.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
    fixtures: HashMap<String, Embedding>,
}

#[derive(Deserialize)]
struct EmbedFixture {
    vectors: HashMap<String, Embedding>,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        Self {
            dim,
            seed,
            fixtures: HashMap::new(),
        }
    }

    pub fn with_vector(mut self, text: impl Into<String>, v: Embedding) -> Result<Self> {
        validate(&v, self.dim)?;
        self.fixtures.insert(text.into(), v);
        Ok(self)
    }

    pub fn with_fixture_file(mut self, path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: EmbedFixture = serde_json::from_str(&raw)?;
        for (text, v) in f.vectors {
            self = self.with_vector(text, v)?;
        }
        Ok(self)
    }

    pub fn hashed(&self, text: &str) -> Embedding {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(text.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                return v.iter().map(|x| (x / n) as f32).collect();
            }
        }
    }

    pub fn vector(&self, text: &str) -> Embedding {
        self.fixtures.get(text).cloned().unwrap_or_else(|| self.hashed(text))
    }
}

impl Embedder for MockEmbedder {
    fn name(&self) -> String {
        if self.fixtures.is_empty() {
            format!("mock-{}-seed{}", self.dim, self.seed)
        } else {
            format!("fixture-{}-seed{}", self.dim, self.seed)
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Jaccard overlap of lowercase word sets: `|q ∩ p| / |q ∪ p|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

impl LexicalReranker {
    fn bag(text: &str) -> std::collections::HashSet<String> {
        WordTokenizer
            .tokens(text)
            .into_iter()
            .filter(|t| t.chars().any(char::is_alphanumeric))
            .map(str::to_lowercase)
            .collect()
    }

    pub fn score(query: &str, passage: &str) -> f64 {
        let q = Self::bag(query);
        let p = Self::bag(passage);
        let union = q.union(&p).count();
        if union == 0 {
            return 0.0;
        }
        q.intersection(&p).count() as f64 / union as f64
    }
}

impl Reranker for LexicalReranker {
    fn name(&self) -> &str {
        "lexical"
    }

    fn rerank(&self, query: &str, passages: &[String]) -> Result<Vec<f64>> {
        Ok(passages.iter().map(|p| Self::score(query, p)).collect())
    }
}

/// Table-driven re-ranker; pairs missing from the table fall back to
/// [`LexicalReranker`].
#[derive(Debug, Clone, Default)]
pub struct FixtureReranker {
    table: HashMap<(String, String), f64>,
}

#[derive(Deserialize)]
struct RerankEntry {
    query: String,
    passage: String,
    score: f64,
}

#[derive(Deserialize)]
struct RerankFixture {
    scores: Vec<RerankEntry>,
}

impl FixtureReranker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_score(mut self, query: impl Into<String>, passage: impl Into<String>, score: f64) -> Self {
        self.table.insert((query.into(), passage.into()), score);
        self
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: RerankFixture = serde_json::from_str(&raw)?;
        Ok(f.scores
            .into_iter()
            .fold(Self::new(), |r, e| r.with_score(e.query, e.passage, e.score)))
    }
}

impl Reranker for FixtureReranker {
    fn name(&self) -> &str {
        "fixture"
    }

    fn rerank(&self, query: &str, passages: &[String]) -> Result<Vec<f64>> {
        Ok(passages
            .iter()
            .map(|p| {
                self.table
                    .get(&(query.to_string(), p.clone()))
                    .copied()
                    .unwrap_or_else(|| LexicalReranker::score(query, p))
            })
            .collect())
    }
}
