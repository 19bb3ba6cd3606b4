//! Flat embedding storage with exact cosine top-K.
//!
//! Vectors are kept unnormalized; norms are cached and cosine is computed on
//! the fly. A zero-norm operand has cosine 0.0 with everything.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::providers::Embedder;

pub type Embedding = Vec<f32>;

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine_with_norms(a: &[f32], na: f64, b: &[f32], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "cosine of vectors with different dimensions");
    cosine_with_norms(a, norm(a), b, norm(b))
}

/// Checks dimension and finiteness.
pub fn validate(v: &[f32], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite embedding component {x}")));
    }
    Ok(())
}

/// One namespace of embeddings (units or entities) in a row-major matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorSet {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl VectorSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, v: &[f32]) -> Result<usize> {
        validate(v, self.dim)?;
        let id = id.into();
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let row = self.ids.len();
        self.index.insert(id.clone(), row);
        self.ids.push(id);
        self.data.extend_from_slice(v);
        self.norms.push(norm(v));
        Ok(row)
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.row_of(id).map(|r| self.vector(r))
    }

    /// Row-major matrix of all vectors.
    pub fn as_matrix(&self) -> &[f32] {
        &self.data
    }

    pub fn cosine_row(&self, row: usize, query: &[f32], query_norm: f64) -> f64 {
        cosine_with_norms(self.vector(row), self.norms[row], query, query_norm)
    }

    /// Exact top-K rows among `rows` (or every row), by descending cosine
    /// with ties broken by ascending id.
    pub fn top_k_rows(&self, query: &[f32], k: usize, rows: Option<&[usize]>) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let qn = norm(query);
        let mut scored: Vec<(usize, f64)> = match rows {
            Some(rows) => rows.iter().map(|&r| (r, self.cosine_row(r, query, qn))).collect(),
            None => (0..self.len()).map(|r| (r, self.cosine_row(r, query, qn))).collect(),
        };
        let cmp =
            |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0]));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored
    }

    /// Exact top-K by id, over `candidates` when given. Unknown candidate ids
    /// are ignored.
    pub fn top_k(&self, query: &[f32], k: usize, candidates: Option<&HashSet<String>>) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        validate(query, self.dim)?;
        let rows: Option<Vec<usize>> = candidates.map(|c| c.iter().filter_map(|id| self.row_of(id)).collect());
        Ok(self
            .top_k_rows(query, k, rows.as_deref())
            .into_iter()
            .map(|(r, s)| (self.ids[r].clone(), s))
            .collect())
    }
}

/// Embeds `texts` in order and checks every vector against `dim`.
pub fn embed_batch(texts: &[String], embedder: &dyn Embedder) -> Result<Vec<Embedding>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let out = embedder.embed(texts)?;
    if out.len() != texts.len() {
        return Err(Error::Protocol {
            provider: "embed",
            message: format!("expected {} vectors, got {}", texts.len(), out.len()),
        });
    }
    for v in &out {
        validate(v, embedder.dim())?;
    }
    Ok(out)
}
