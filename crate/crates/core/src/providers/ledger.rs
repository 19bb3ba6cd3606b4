use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Indexing,
    Query,
}

#[derive(Debug, Default)]
struct Counters {
    prompt: AtomicU64,
    completion: AtomicU64,
    calls: AtomicU64,
}

/// Running LLM token totals for offline indexing and online queries.
///
/// Tokens are counted with the pipeline tokenizer, not the vendor's, so the
/// numbers are comparable only within one configuration.
#[derive(Debug)]
pub struct TokenLedger {
    tokenizer: String,
    indexing: Counters,
    query: Counters,
    queries: AtomicU64,
}

impl TokenLedger {
    pub fn new(tokenizer: impl Into<String>) -> Self {
        Self {
            tokenizer: tokenizer.into(),
            indexing: Counters::default(),
            query: Counters::default(),
            queries: AtomicU64::new(0),
        }
    }

    fn counters(&self, phase: Phase) -> &Counters {
        match phase {
            Phase::Indexing => &self.indexing,
            Phase::Query => &self.query,
        }
    }

    pub fn record(&self, phase: Phase, prompt_tokens: u64, completion_tokens: u64) {
        let c = self.counters(phase);
        c.prompt.fetch_add(prompt_tokens, Ordering::Relaxed);
        c.completion.fetch_add(completion_tokens, Ordering::Relaxed);
        c.calls.fetch_add(1, Ordering::Relaxed);
    }

    /// Counts one answered query for per-query averages.
    pub fn record_query(&self) {
        self.queries.fetch_add(1, Ordering::Relaxed);
    }

    pub fn calls(&self, phase: Phase) -> u64 {
        self.counters(phase).calls.load(Ordering::Relaxed)
    }

    pub fn report(&self) -> CostReport {
        let load = |a: &AtomicU64| a.load(Ordering::Relaxed);
        let queries = load(&self.queries);
        let avg = |total: u64| {
            if queries == 0 {
                0.0
            } else {
                total as f64 / queries as f64
            }
        };
        let qp = load(&self.query.prompt);
        let qc = load(&self.query.completion);
        CostReport {
            tokenizer: self.tokenizer.clone(),
            indexing_prompt_tokens: load(&self.indexing.prompt),
            indexing_completion_tokens: load(&self.indexing.completion),
            indexing_llm_calls: load(&self.indexing.calls),
            query_prompt_tokens: qp,
            query_completion_tokens: qc,
            query_llm_calls: load(&self.query.calls),
            queries,
            avg_query_prompt_tokens: avg(qp),
            avg_query_completion_tokens: avg(qc),
        }
    }
}

/// Contents of `cost-report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub tokenizer: String,
    pub indexing_prompt_tokens: u64,
    pub indexing_completion_tokens: u64,
    pub indexing_llm_calls: u64,
    pub query_prompt_tokens: u64,
    pub query_completion_tokens: u64,
    pub query_llm_calls: u64,
    pub queries: u64,
    pub avg_query_prompt_tokens: f64,
    pub avg_query_completion_tokens: f64,
}

impl CostReport {
    pub fn indexing_total(&self) -> u64 {
        self.indexing_prompt_tokens + self.indexing_completion_tokens
    }
}
