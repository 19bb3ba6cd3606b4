use serde::{Deserialize, Serialize};

use super::{GraphBuilder, MultipartiteGraph};
use crate::corpus::{chunk_corpus, Chunk, Document, DEFAULT_CHUNK_TOKENS};
use crate::error::{Error, Result};
use crate::extraction::{hybrid_extract, ExtractionOptions, ExtractionRecord};
use crate::providers::Providers;
use crate::selection::{
    chunk_selection, score_chunks_cosine, select_with_scores, BleuConfig, SelectionMetric, SelectionReport,
};
use crate::vector::{embed_batch, Embedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub alpha: f64,
    /// Chunk size cap in tokens.
    pub chunk_tokens: usize,
    pub selection_metric: SelectionMetric,
    /// Expected embedder dimension; `None` accepts whatever the embedder
    /// reports.
    pub embedding_dim: Option<usize>,
    /// Texts per embedding request.
    pub embed_batch: usize,
    #[serde(skip)]
    pub bleu: BleuConfig,
    #[serde(skip)]
    pub extraction: ExtractionOptions,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            chunk_tokens: DEFAULT_CHUNK_TOKENS,
            selection_metric: SelectionMetric::Bleu,
            embedding_dim: None,
            embed_batch: 64,
            bleu: BleuConfig::default(),
            extraction: ExtractionOptions::default(),
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.chunk_tokens == 0 {
            return Err(Error::InvalidArgument("chunk size must be at least 1 token".into()));
        }
        if self.embedding_dim == Some(0) {
            return Err(Error::InvalidArgument("embedding dimension must be at least 1".into()));
        }
        if self.embed_batch == 0 {
            return Err(Error::InvalidArgument("embedding batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// A built graph with the build-time artifacts that explain it.
#[derive(Debug, Clone)]
pub struct IndexBuild {
    pub graph: MultipartiteGraph,
    pub selection: SelectionReport,
    pub extraction_log: Vec<ExtractionRecord>,
}

fn embed_all(texts: &[String], batch: usize, providers: &Providers) -> Result<Vec<Embedding>> {
    let mut out = Vec::with_capacity(texts.len());
    for part in texts.chunks(batch) {
        out.extend(embed_batch(part, providers.embedder.as_ref())?);
    }
    Ok(out)
}

/// Chunk, select, extract, assemble and embed.
pub fn build_index(corpus: &[Document], cfg: &IndexConfig, providers: &Providers) -> Result<IndexBuild> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("corpus is empty".into()));
    }
    let chunks = chunk_corpus(corpus, cfg.chunk_tokens, providers.tokenizer.as_ref())?;
    build_index_from_chunks(chunks, cfg, providers)
}

/// [`build_index`] for a corpus that is already chunked.
pub fn build_index_from_chunks(chunks: Vec<Chunk>, cfg: &IndexConfig, providers: &Providers) -> Result<IndexBuild> {
    cfg.validate()?;
    if chunks.is_empty() {
        return Err(Error::InvalidArgument("corpus is empty".into()));
    }
    let dim = providers.embedder.dim();
    if let Some(expected) = cfg.embedding_dim {
        if expected != dim {
            return Err(Error::DimensionMismatch { expected, actual: dim });
        }
    }

    let selection = match cfg.selection_metric {
        SelectionMetric::Bleu => chunk_selection(&chunks, cfg.alpha, &cfg.bleu, providers.tokenizer.as_ref())?,
        SelectionMetric::Cosine => {
            let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
            let vectors = embed_all(&texts, cfg.embed_batch, providers)?;
            select_with_scores(
                &score_chunks_cosine(&chunks, &vectors),
                cfg.alpha,
                SelectionMetric::Cosine,
            )?
        }
    };
    log::info!(
        "selected {} of {} chunks (W_max {} of {})",
        selection.chunks.iter().filter(|c| c.selected).count(),
        chunks.len(),
        selection.w_max,
        selection.w_total
    );

    let extraction = hybrid_extract(&chunks, &selection.core(), providers, &cfg.extraction)?;
    let unit_texts: Vec<String> = extraction.units.iter().map(|u| u.text.clone()).collect();
    let entity_texts: Vec<String> = extraction.entities.iter().map(|e| e.surface.clone()).collect();
    let unit_vectors = embed_all(&unit_texts, cfg.embed_batch, providers)?;
    let entity_vectors = embed_all(&entity_texts, cfg.embed_batch, providers)?;

    let mut b = GraphBuilder::new(dim);
    for c in chunks {
        b.add_chunk(c)?;
    }
    let mut unit_rows = Vec::with_capacity(extraction.units.len());
    for (u, v) in extraction.units.into_iter().zip(&unit_vectors) {
        unit_rows.push(b.add_unit(u, v)?);
    }
    for &(u, e) in &extraction.links {
        b.link_entity(unit_rows[u], extraction.entities[e].clone(), &entity_vectors[e])?;
    }
    let graph = b.finish(providers.embedder.name())?;

    Ok(IndexBuild {
        graph,
        selection,
        extraction_log: extraction.log,
    })
}
