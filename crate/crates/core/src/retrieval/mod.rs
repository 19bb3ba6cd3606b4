//! Query-time search: entity anchoring, beam expansion over the
//! entity–unit graph with a shrinking query vector, and final chunk ranking.

mod anchor;
mod answer;

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ChunkIx, EntityIx, MultipartiteGraph, UnitIx};
use crate::providers::{rerank_checked, Embedder, Providers, QueryEntityMode, Reranker};
use crate::vector::{embed_batch, Embedding};

pub use anchor::{
    entity_anchoring, parse_entities_reply, Anchors, LlmQueryExtractor, MentionMatch, NerQueryExtractor,
    QueryEntityExtractor,
};
pub use answer::{generate_answer, Answer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalParams {
    /// Units taken per frontier entity, and seeds per mention.
    pub k: usize,
    pub depth: usize,
    pub beam: usize,
    pub top_n: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            k: 3,
            depth: 3,
            beam: 5,
            top_n: 5,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k", self.k),
            ("depth", self.depth),
            ("beam", self.beam),
            ("top_n", self.top_n),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    pub frontier: Vec<EntityIx>,
    pub residual: Embedding,
    /// Canonical order: unit text, then unit id.
    pub units: Vec<UnitIx>,
    pub score: f64,
    pub depth: usize,
}

impl BeamState {
    pub fn seed(frontier: Vec<EntityIx>, query: Embedding) -> Self {
        Self {
            frontier,
            residual: query,
            units: Vec::new(),
            score: 0.0,
            depth: 0,
        }
    }

    /// Unit texts joined by single spaces, in canonical order.
    pub fn concatenation(&self, g: &MultipartiteGraph) -> String {
        concatenate(g, &self.units)
    }
}

fn concatenate(g: &MultipartiteGraph, units: &[UnitIx]) -> String {
    units
        .iter()
        .map(|&u| g.unit(u).text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn canonical_sort(g: &MultipartiteGraph, units: &mut [UnitIx]) {
    units.sort_by(|&a, &b| {
        let (a, b) = (g.unit(a), g.unit(b));
        a.text.cmp(&b.text).then_with(|| a.unit_id.cmp(&b.unit_id))
    });
}

/// An unscored successor of a beam state.
#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub via: EntityIx,
    pub unit: UnitIx,
    pub state: BeamState,
}

/// For every frontier entity, the `k` adjacent units not yet in the state
/// that are closest to its residual, each as a successor state. Scores are
/// left at zero.
pub fn successors(g: &MultipartiteGraph, state: &BeamState, k: usize) -> Vec<Successor> {
    let taken: BTreeSet<UnitIx> = state.units.iter().copied().collect();
    let mut out = Vec::new();
    for &v in &state.frontier {
        let open: Vec<usize> = g
            .unit_neighbors(v)
            .filter(|u| !taken.contains(u))
            .map(|u| u.0 as usize)
            .collect();
        if open.is_empty() {
            continue;
        }
        for (row, _) in g.unit_vectors().top_k_rows(&state.residual, k, Some(&open)) {
            let unit = UnitIx(row as u32);
            let residual = state
                .residual
                .iter()
                .zip(g.unit_vectors().vector(row))
                .map(|(a, b)| a - b)
                .collect();
            let mut units = state.units.clone();
            units.push(unit);
            canonical_sort(g, &mut units);
            out.push(Successor {
                via: v,
                unit,
                state: BeamState {
                    frontier: g.entity_neighbors(unit).collect(),
                    residual,
                    units,
                    score: 0.0,
                    depth: state.depth + 1,
                },
            });
        }
    }
    out
}

/// [`successors`] scored by the re-ranker on each concatenation.
pub fn expand_state(
    g: &MultipartiteGraph,
    state: &BeamState,
    reranker: &dyn Reranker,
    question: &str,
    k: usize,
) -> Result<Vec<BeamState>> {
    let mut next: Vec<BeamState> = successors(g, state, k).into_iter().map(|s| s.state).collect();
    let passages: Vec<String> = next.iter().map(|s| s.concatenation(g)).collect();
    for (s, score) in next.iter_mut().zip(rerank_checked(reranker, question, &passages)?) {
        s.score = score;
    }
    Ok(next)
}

/// One expansion, as written to the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub depth: usize,
    /// Generation order within the depth.
    pub candidate: usize,
    /// Position of the parent in the previous depth's beam.
    pub parent: usize,
    pub via_entity: String,
    pub unit: String,
    pub units: Vec<String>,
    pub frontier: Vec<String>,
    pub score: f64,
    /// Earlier candidate at this depth with the same unit set, if any.
    pub duplicate_of: Option<usize>,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectedState {
    pub depth: usize,
    pub units: Vec<String>,
    pub frontier: Vec<String>,
    pub score: f64,
    pub residual: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedChunk {
    pub chunk_id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    pub entities: Vec<String>,
    pub mentions: Vec<MentionMatch>,
    pub units: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub question: String,
    pub anchors: AnchorReport,
    pub chunks: Vec<RankedChunk>,
    pub collected: Vec<CollectedState>,
    pub trace: Vec<TraceRecord>,
    /// Why the result is empty, when it is.
    pub diagnostic: Option<String>,
}

impl RetrievalResult {
    fn empty(question: &str, diagnostic: &str) -> Self {
        Self {
            question: question.to_string(),
            anchors: AnchorReport {
                entities: Vec::new(),
                mentions: Vec::new(),
                units: Vec::new(),
            },
            chunks: Vec::new(),
            collected: Vec::new(),
            trace: Vec::new(),
            diagnostic: Some(diagnostic.to_string()),
        }
    }

    pub fn write_trace(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.trace {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// The services a search needs.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub graph: &'a MultipartiteGraph,
    pub embedder: &'a dyn Embedder,
    pub reranker: &'a dyn Reranker,
    pub extractor: &'a dyn QueryEntityExtractor,
}

pub fn query_extractor(providers: &Providers) -> Box<dyn QueryEntityExtractor> {
    match providers.query_entities {
        QueryEntityMode::Ner => Box::new(NerQueryExtractor(providers.ner.clone())),
        QueryEntityMode::Llm => Box::new(LlmQueryExtractor {
            llm: providers.llm.clone(),
            fallback: providers.ner.clone(),
        }),
    }
}

/// [`q_iter`] with the configured providers; counts the query in the ledger.
pub fn retrieve(
    g: &MultipartiteGraph,
    providers: &Providers,
    question: &str,
    params: &RetrievalParams,
) -> Result<RetrievalResult> {
    let extractor = query_extractor(providers);
    let ctx = SearchContext {
        graph: g,
        embedder: providers.embedder.as_ref(),
        reranker: providers.reranker.as_ref(),
        extractor: extractor.as_ref(),
    };
    providers.ledger.record_query();
    q_iter(&ctx, question, params)
}

fn ids<T>(xs: impl Iterator<Item = T>, f: impl Fn(T) -> String) -> Vec<String> {
    xs.map(f).collect()
}

/// Iterative beam search from the anchored entities, then a re-rank of the
/// parent chunks of every collected state.
pub fn q_iter(ctx: &SearchContext<'_>, question: &str, params: &RetrievalParams) -> Result<RetrievalResult> {
    params.validate()?;
    let g = ctx.graph;
    if g.is_empty() {
        return Ok(RetrievalResult::empty(question, "the index is empty"));
    }
    if g.unit_vectors().dim() != ctx.embedder.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.unit_vectors().dim(),
            actual: ctx.embedder.dim(),
        });
    }
    let query_vec = embed_batch(&[question.to_string()], ctx.embedder)?
        .pop()
        .expect("one vector per text");
    let anchors = entity_anchoring(g, ctx.embedder, ctx.extractor, question, &query_vec, params.k)?;
    let entity_id = |e: EntityIx| g.entity(e).entity_id.clone();
    let unit_id = |u: UnitIx| g.unit(u).unit_id.clone();
    let anchor_report = AnchorReport {
        entities: ids(anchors.entities.iter().copied(), entity_id),
        mentions: anchors.mentions.clone(),
        units: anchors.units.iter().map(|&(u, s)| (unit_id(u), s)).collect(),
    };
    if anchors.entities.is_empty() {
        let mut r = RetrievalResult::empty(question, "no anchor entities for the query");
        r.anchors = anchor_report;
        return Ok(r);
    }

    let mut beam = vec![BeamState::seed(anchors.entities, query_vec)];
    let mut collected: Vec<BeamState> = Vec::new();
    let mut trace: Vec<TraceRecord> = Vec::new();

    for depth in 1..=params.depth {
        let mut candidates: Vec<(usize, Successor)> = Vec::new();
        for (parent, state) in beam.iter().enumerate() {
            candidates.extend(successors(g, state, params.k).into_iter().map(|s| (parent, s)));
        }
        if candidates.is_empty() {
            log::debug!("search exhausted before depth {depth}");
            break;
        }

        let mut first_of: HashMap<&[UnitIx], usize> = HashMap::new();
        let mut duplicate_of = vec![None; candidates.len()];
        let mut distinct = Vec::new();
        for (i, (_, s)) in candidates.iter().enumerate() {
            match first_of.get(s.state.units.as_slice()) {
                Some(&j) => duplicate_of[i] = Some(j),
                None => {
                    first_of.insert(&s.state.units, i);
                    distinct.push(i);
                }
            }
        }
        let texts: Vec<String> = distinct
            .iter()
            .map(|&i| candidates[i].1.state.concatenation(g))
            .collect();
        let scores = match rerank_checked(ctx.reranker, question, &texts) {
            Ok(s) => s,
            Err(cause) => {
                return Err(Error::SearchAborted {
                    depth,
                    partial_trace: trace,
                    cause: Box::new(cause),
                })
            }
        };
        let mut score_of = vec![0.0; candidates.len()];
        let mut text_of: Vec<&str> = vec![""; candidates.len()];
        for ((&i, s), t) in distinct.iter().zip(&scores).zip(&texts) {
            score_of[i] = *s;
            text_of[i] = t;
        }
        for i in 0..candidates.len() {
            if let Some(j) = duplicate_of[i] {
                score_of[i] = score_of[j];
            }
        }

        let mut ranked = distinct.clone();
        ranked.sort_by(|&a, &b| {
            score_of[b]
                .total_cmp(&score_of[a])
                .then_with(|| text_of[a].cmp(text_of[b]))
                .then_with(|| a.cmp(&b))
        });
        ranked.truncate(params.beam);
        let kept: BTreeSet<usize> = ranked.iter().copied().collect();

        for (i, (parent, s)) in candidates.iter().enumerate() {
            trace.push(TraceRecord {
                depth,
                candidate: i,
                parent: *parent,
                via_entity: entity_id(s.via),
                unit: unit_id(s.unit),
                units: ids(s.state.units.iter().copied(), unit_id),
                frontier: ids(s.state.frontier.iter().copied(), entity_id),
                score: score_of[i],
                duplicate_of: duplicate_of[i],
                pruned: !kept.contains(&i),
            });
        }

        let mut slots: Vec<Option<(usize, Successor)>> = candidates.into_iter().map(Some).collect();
        beam = ranked
            .iter()
            .map(|&i| {
                let (_, s) = slots[i].take().expect("each survivor taken once");
                BeamState {
                    score: score_of[i],
                    ..s.state
                }
            })
            .collect();
        collected.extend(beam.iter().cloned());
    }

    let parents: BTreeSet<ChunkIx> = collected
        .iter()
        .flat_map(|s| s.units.iter().map(|&u| g.parent(u)))
        .collect();
    let mut pool: Vec<ChunkIx> = parents.into_iter().collect();
    pool.sort_by(|&a, &b| g.chunk(a).chunk_id.cmp(&g.chunk(b).chunk_id));
    let chunk_texts: Vec<String> = pool.iter().map(|&c| g.chunk(c).text.clone()).collect();
    let scores = rerank_checked(ctx.reranker, question, &chunk_texts).map_err(|cause| Error::SearchAborted {
        depth: params.depth,
        partial_trace: trace.clone(),
        cause: Box::new(cause),
    })?;
    let mut chunks: Vec<RankedChunk> = pool
        .iter()
        .zip(scores)
        .map(|(&c, score)| RankedChunk {
            chunk_id: g.chunk(c).chunk_id.clone(),
            score,
            text: g.chunk(c).text.clone(),
        })
        .collect();
    chunks.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
    chunks.truncate(params.top_n);

    let diagnostic = collected
        .is_empty()
        .then(|| "anchor entities have no adjacent units".to_string());
    Ok(RetrievalResult {
        question: question.to_string(),
        anchors: anchor_report,
        chunks,
        collected: collected
            .into_iter()
            .map(|s| CollectedState {
                depth: s.depth,
                units: ids(s.units.iter().copied(), unit_id),
                frontier: ids(s.frontier.iter().copied(), entity_id),
                score: s.score,
                residual: s.residual,
            })
            .collect(),
        trace,
        diagnostic,
    })
}
