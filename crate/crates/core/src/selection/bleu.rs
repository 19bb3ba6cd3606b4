//! Multi-reference BLEU and a corpus-level leave-one-out scorer.

use std::collections::HashMap;

use rayon::prelude::*;

/// How zero n-gram precisions are treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// A zero precision makes the whole score zero.
    None,
    /// A zero precision is replaced by `epsilon / total`.
    Epsilon(f64),
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Epsilon(1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuConfig {
    pub max_order: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_order: 4,
            smoothing: Smoothing::default(),
        }
    }
}

fn ngram_counts<T: Eq + std::hash::Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Closest reference length to `cand_len`; ties go to the shorter reference.
fn closest_ref_len(cand_len: usize, ref_lens: impl IntoIterator<Item = usize>) -> Option<usize> {
    ref_lens.into_iter().min_by_key(|&r| (r.abs_diff(cand_len), r))
}

/// Combines clipped match counts into a BLEU score.
///
/// `matched[n-1]` / `totals[n-1]` are the clipped matches and candidate
/// n-gram counts for order `n`. Orders the candidate is too short to contain
/// are left out of the geometric mean.
pub(crate) fn combine(
    matched: &[usize],
    totals: &[usize],
    cand_len: usize,
    ref_len: usize,
    smoothing: Smoothing,
) -> f64 {
    if cand_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for (&m, &t) in matched.iter().zip(totals) {
        if t == 0 {
            continue;
        }
        let p = if m > 0 {
            m as f64 / t as f64
        } else {
            match smoothing {
                Smoothing::None => return 0.0,
                Smoothing::Epsilon(eps) => eps / t as f64,
            }
        };
        log_sum += p.ln();
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let geo = (log_sum / orders as f64).exp();
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    (geo * bp).clamp(0.0, 1.0)
}

/// BLEU of a tokenized candidate against tokenized references.
pub fn bleu_tokens<T: AsRef<str>>(candidate: &[T], references: &[Vec<T>], cfg: &BleuConfig) -> f64 {
    assert!(cfg.max_order >= 1, "max_order must be at least 1");
    if candidate.is_empty() || references.is_empty() {
        return 0.0;
    }
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refs: Vec<Vec<&str>> = references
        .iter()
        .map(|r| r.iter().map(AsRef::as_ref).collect())
        .collect();

    let mut matched = vec![0usize; cfg.max_order];
    let mut totals = vec![0usize; cfg.max_order];
    for n in 1..=cfg.max_order {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        totals[n - 1] = cand.len().saturating_sub(n - 1);
        matched[n - 1] = cand_counts
            .iter()
            .map(|(g, &c)| {
                let max_ref = ref_counts
                    .iter()
                    .map(|rc| rc.get(g).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                c.min(max_ref)
            })
            .sum();
    }
    let ref_len = closest_ref_len(cand.len(), refs.iter().map(Vec::len)).unwrap_or(0);
    combine(&matched, &totals, cand.len(), ref_len, cfg.smoothing)
}

/// Leave-one-out BLEU over a corpus of token sequences, backed by an n-gram
/// inverted index.
///
/// For every n-gram the index keeps the largest and second-largest count over
/// all documents, plus the owner of the largest. The clipping count of a
/// candidate against "every other document" is therefore the top count
/// unless the candidate owns it, in which case it is the runner-up.
pub struct NgramIndex {
    docs: Vec<Vec<u32>>,
    max_order: usize,
    table: HashMap<Box<[u32]>, TopTwo>,
    sorted_lens: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
struct TopTwo {
    best: usize,
    owner: usize,
    second: usize,
}

impl TopTwo {
    fn offer(&mut self, count: usize, doc: usize) {
        if count > self.best {
            self.second = self.best;
            self.best = count;
            self.owner = doc;
        } else if count > self.second {
            self.second = count;
        }
    }

    fn excluding(&self, doc: usize) -> usize {
        if self.owner == doc {
            self.second
        } else {
            self.best
        }
    }
}

impl NgramIndex {
    pub fn build<S: AsRef<str> + Sync>(docs: &[Vec<S>], max_order: usize) -> Self {
        assert!(max_order >= 1, "max_order must be at least 1");
        let mut vocab: HashMap<&str, u32> = HashMap::new();
        let interned: Vec<Vec<u32>> = docs
            .iter()
            .map(|d| {
                d.iter()
                    .map(|t| {
                        let next = vocab.len() as u32;
                        *vocab.entry(t.as_ref()).or_insert(next)
                    })
                    .collect()
            })
            .collect();

        let mut table: HashMap<Box<[u32]>, TopTwo> = HashMap::new();
        for (doc, toks) in interned.iter().enumerate() {
            for n in 1..=max_order {
                for (g, c) in ngram_counts(toks, n) {
                    match table.get_mut(g) {
                        Some(t) => t.offer(c, doc),
                        None => {
                            let mut t = TopTwo::default();
                            t.offer(c, doc);
                            table.insert(g.into(), t);
                        }
                    }
                }
            }
        }
        let mut sorted_lens: Vec<usize> = interned.iter().map(Vec::len).collect();
        sorted_lens.sort_unstable();
        Self {
            docs: interned,
            max_order,
            table,
            sorted_lens,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Closest length among all documents except one copy of `own`.
    fn closest_other_len(&self, own: usize) -> Option<usize> {
        if self.sorted_lens.len() < 2 {
            return None;
        }
        let lo = self.sorted_lens.partition_point(|&l| l < own);
        let hi = self.sorted_lens.partition_point(|&l| l <= own);
        if hi - lo >= 2 {
            return Some(own);
        }
        let below = lo.checked_sub(1).map(|i| self.sorted_lens[i]);
        let above = self.sorted_lens.get(hi).copied();
        closest_ref_len(own, below.into_iter().chain(above))
    }

    /// BLEU of document `doc` against every other document.
    pub fn score(&self, doc: usize, smoothing: Smoothing) -> f64 {
        let toks = &self.docs[doc];
        let Some(ref_len) = self.closest_other_len(toks.len()) else {
            return 0.0;
        };
        let mut matched = vec![0usize; self.max_order];
        let mut totals = vec![0usize; self.max_order];
        for n in 1..=self.max_order {
            totals[n - 1] = toks.len().saturating_sub(n - 1);
            matched[n - 1] = ngram_counts(toks, n)
                .into_iter()
                .map(|(g, c)| c.min(self.table.get(g).map_or(0, |t| t.excluding(doc))))
                .sum();
        }
        combine(&matched, &totals, toks.len(), ref_len, smoothing)
    }

    /// Leave-one-out scores for every document, computed in parallel.
    pub fn score_all(&self, smoothing: Smoothing) -> Vec<f64> {
        (0..self.docs.len())
            .into_par_iter()
            .map(|i| self.score(i, smoothing))
            .collect()
    }
}
