//! Core-chunk selection: score each chunk's corpus relevance, then choose the
//! most relevant subset that fits in a token budget.

pub mod bleu;
pub mod knapsack;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, Tokenizer};
use crate::error::{Error, Result};
use crate::vector::{cosine, Embedding};

pub use bleu::{BleuConfig, NgramIndex, Smoothing};
pub use knapsack::SolverMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    #[default]
    Bleu,
    Cosine,
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bleu" => Ok(SelectionMetric::Bleu),
            "cosine" => Ok(SelectionMetric::Cosine),
            other => Err(Error::InvalidArgument(format!(
                "unknown selection metric `{other}` (expected bleu or cosine)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkScore {
    pub chunk_id: String,
    pub weight: u64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub alpha: f64,
    pub w_total: u64,
    pub w_max: u64,
}

impl Budget {
    pub fn new(alpha: f64, w_total: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self {
            alpha,
            w_total,
            w_max: (alpha * w_total as f64).ceil() as u64,
        })
    }
}

/// BLEU of `candidate` against `references`, tokenized with `tok`.
pub fn bleu_score(candidate: &str, references: &[&str], cfg: &BleuConfig, tok: &dyn Tokenizer) -> Result<f64> {
    if cfg.max_order < 1 {
        return Err(Error::InvalidArgument("max_order must be at least 1".into()));
    }
    if references.is_empty() {
        return Err(Error::InvalidArgument("BLEU needs at least one reference".into()));
    }
    let refs: Vec<Vec<&str>> = references.iter().map(|r| tok.tokens(r)).collect();
    Ok(bleu::bleu_tokens(&tok.tokens(candidate), &refs, cfg))
}

/// Leave-one-out BLEU for every chunk, weight = token length.
pub fn score_chunks(chunks: &[Chunk], cfg: &BleuConfig, tok: &dyn Tokenizer) -> Vec<ChunkScore> {
    let values = if chunks.len() < 2 {
        if !chunks.is_empty() {
            log::warn!("a single chunk has no references; its BLEU value is 0");
        }
        vec![0.0; chunks.len()]
    } else {
        let docs: Vec<Vec<&str>> = chunks.iter().map(|c| tok.tokens(&c.text)).collect();
        NgramIndex::build(&docs, cfg.max_order).score_all(cfg.smoothing)
    };
    chunks
        .iter()
        .zip(values)
        .map(|(c, value)| ChunkScore {
            chunk_id: c.chunk_id.clone(),
            weight: c.token_len as u64,
            value,
        })
        .collect()
}

/// Cosine relevance: each chunk's best cosine against any other chunk,
/// clamped to `[0, 1]`.
pub fn score_chunks_cosine(chunks: &[Chunk], embeddings: &[Embedding]) -> Vec<ChunkScore> {
    assert_eq!(chunks.len(), embeddings.len());
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let best = embeddings
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, e)| cosine(&embeddings[i], e))
                .fold(0.0f64, f64::max);
            ChunkScore {
                chunk_id: c.chunk_id.clone(),
                weight: c.token_len as u64,
                value: best.clamp(0.0, 1.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackOutcome {
    pub selected: BTreeSet<String>,
    pub total_value: f64,
    pub total_weight: u64,
    pub mode: SolverMode,
}

/// 0-1 knapsack over chunk scores. Items are ordered by chunk id before
/// solving so ties resolve toward lower ids.
pub fn knapsack_select(scores: &[ChunkScore], w_max: u64) -> KnapsackOutcome {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].chunk_id.cmp(&scores[b].chunk_id));
    let items: Vec<knapsack::Item> = order
        .iter()
        .map(|&i| knapsack::Item {
            weight: scores[i].weight,
            value: scores[i].value,
        })
        .collect();
    let sol = knapsack::solve(&items, w_max);
    KnapsackOutcome {
        selected: sol.chosen.iter().map(|&k| scores[order[k]].chunk_id.clone()).collect(),
        total_value: sol.total_value,
        total_weight: sol.total_weight,
        mode: sol.mode,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub chunk_id: String,
    pub weight: u64,
    pub value: f64,
    pub selected: bool,
}

/// Contents of `selection-report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub alpha: f64,
    #[serde(rename = "W_total")]
    pub w_total: u64,
    #[serde(rename = "W_max")]
    pub w_max: u64,
    pub solver_mode: SolverMode,
    pub metric: SelectionMetric,
    pub total_value: f64,
    pub chunks: Vec<SelectionEntry>,
}

impl SelectionReport {
    pub fn core(&self) -> BTreeSet<String> {
        self.chunks
            .iter()
            .filter(|c| c.selected)
            .map(|c| c.chunk_id.clone())
            .collect()
    }
}

/// Budgeted selection over precomputed scores.
pub fn select_with_scores(scores: &[ChunkScore], alpha: f64, metric: SelectionMetric) -> Result<SelectionReport> {
    let budget = Budget::new(alpha, scores.iter().map(|s| s.weight).sum())?;
    let outcome = knapsack_select(scores, budget.w_max);
    Ok(SelectionReport {
        alpha,
        w_total: budget.w_total,
        w_max: budget.w_max,
        solver_mode: outcome.mode,
        metric,
        total_value: outcome.total_value,
        chunks: scores
            .iter()
            .map(|s| SelectionEntry {
                chunk_id: s.chunk_id.clone(),
                weight: s.weight,
                value: s.value,
                selected: outcome.selected.contains(&s.chunk_id),
            })
            .collect(),
    })
}

/// BLEU-valued core-chunk selection under the budget `ceil(alpha * W_total)`.
pub fn chunk_selection(chunks: &[Chunk], alpha: f64, cfg: &BleuConfig, tok: &dyn Tokenizer) -> Result<SelectionReport> {
    // validate before the scoring pass
    Budget::new(alpha, 0)?;
    select_with_scores(&score_chunks(chunks, cfg, tok), alpha, SelectionMetric::Bleu)
}
