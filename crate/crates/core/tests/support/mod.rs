//! Generators and brute-force oracles shared by the property tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::hash::{Hash, Hasher};

use trirag::corpus::{Chunk, Document};
use trirag::extraction::{unit_id, Entity, KnowledgeUnit, UnitSource};
use trirag::graph::{build_index, load, persist, EntityIx, GraphBuilder, IndexConfig, MultipartiteGraph, UnitIx};
use trirag::providers::{Embedder, MockEmbedder, Providers, Reranker};
use trirag::retrieval::{q_iter, QueryEntityExtractor, RetrievalParams, SearchContext};
use trirag::Result;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const NAMES: &[&str] = &[
    "Nottingham Forest",
    "Chelsea F.C.",
    "Madrid",
    "Ada Lovelace",
    "Rome",
    "Berlin",
    "Oxford",
    "Amazon River",
    "FA Cup",
    "European Cup",
    "Marie Curie",
    "Lake Geneva",
];
const VERBS: &[&str] = &["won", "visited", "described", "hosted", "crossed", "founded", "praised"];
const NOUNS: &[&str] = &[
    "the trophy",
    "a bridge",
    "the final",
    "its river",
    "the museum",
    "a treaty",
    "the season",
];

fn sentence(r: &mut ChaCha8Rng) -> String {
    let subject = NAMES.choose(r).unwrap();
    let verb = VERBS.choose(r).unwrap();
    let noun = NOUNS.choose(r).unwrap();
    match r.random_range(0..3) {
        0 => format!("{subject} {verb} {noun} in {}.", r.random_range(1850..2020)),
        1 => format!("{subject} {verb} {}.", NAMES.choose(r).unwrap()),
        _ => format!("Later, {subject} {verb} {noun} near {}.", NAMES.choose(r).unwrap()),
    }
}

/// `n_docs` documents of 1..=`max_sentences` generated sentences each.
pub fn random_corpus(r: &mut ChaCha8Rng, n_docs: usize, max_sentences: usize) -> Vec<Document> {
    (0..n_docs)
        .map(|i| Document {
            doc_id: format!("doc{i:03}"),
            title: String::new(),
            body: (0..r.random_range(1..=max_sentences))
                .map(|_| sentence(r))
                .collect::<Vec<_>>()
                .join(" "),
        })
        .collect()
}

/// Best total scaled value over every subset within `capacity`, visiting
/// subsets in Gray-code order so each step flips one item.
pub fn brute_knapsack(weights: &[u64], values: &[u64], capacity: u64) -> u64 {
    let n = weights.len();
    assert!(n <= 24);
    let (mut w, mut v, mut best) = (0u64, 0u64, 0u64);
    let mut inside = vec![false; n];
    for step in 1u32..(1 << n) {
        let i = step.trailing_zeros() as usize;
        inside[i] = !inside[i];
        if inside[i] {
            w += weights[i];
            v += values[i];
        } else {
            w -= weights[i];
            v -= values[i];
        }
        if w <= capacity && v > best {
            best = v;
        }
    }
    best
}

/// Textbook multi-reference BLEU with epsilon smoothing; orders longer than
/// the candidate are skipped.
pub fn naive_bleu(cand: &[&str], refs: &[Vec<&str>], max_order: usize, eps: f64) -> f64 {
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let grams = |toks: &[&str], n: usize| {
        let mut m: HashMap<Vec<String>, usize> = HashMap::new();
        if toks.len() >= n {
            for i in 0..=toks.len() - n {
                *m.entry(toks[i..i + n].iter().map(|s| s.to_string()).collect())
                    .or_default() += 1;
            }
        }
        m
    };
    let mut logs = Vec::new();
    for n in 1..=max_order {
        if cand.len() < n {
            continue;
        }
        let c = grams(cand, n);
        let rs: Vec<_> = refs.iter().map(|r| grams(r, n)).collect();
        let total = cand.len() + 1 - n;
        let mut hit = 0;
        for (g, k) in &c {
            let best = rs.iter().map(|m| *m.get(g).unwrap_or(&0)).max().unwrap();
            hit += (*k).min(best);
        }
        let p = if hit == 0 {
            eps / total as f64
        } else {
            hit as f64 / total as f64
        };
        logs.push(p.ln());
    }
    let mut ref_len = refs[0].len();
    for r in refs {
        let (d, best) = (r.len().abs_diff(cand.len()), ref_len.abs_diff(cand.len()));
        if d < best || (d == best && r.len() < ref_len) {
            ref_len = r.len();
        }
    }
    let geo = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
    let bp = if cand.len() > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand.len() as f64).exp()
    };
    (geo * bp).min(1.0)
}

pub fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Exhaustive top-k: sort everything by (score desc, id asc).
pub fn scan_top_k(ids: &[String], vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = ids
        .iter()
        .zip(vectors)
        .map(|(id, v)| (id.clone(), naive_cosine(v, query)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn random_vector(r: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| r.random_range(-1.0f32..1.0)).collect()
}

/// Every structural rule of the three-layer graph, checked from the raw edge
/// lists.
pub fn check_graph(g: &MultipartiteGraph) -> std::result::Result<(), String> {
    let chunk_ids: HashSet<&str> = g.chunks().iter().map(|c| c.chunk_id.as_str()).collect();
    let unit_ids: HashSet<&str> = g.units().iter().map(|u| u.unit_id.as_str()).collect();
    let entity_ids: HashSet<&str> = g.entities().iter().map(|e| e.entity_id.as_str()).collect();
    if !chunk_ids.is_disjoint(&unit_ids) || !unit_ids.is_disjoint(&entity_ids) || !chunk_ids.is_disjoint(&entity_ids) {
        return Err("node id shared between layers".into());
    }
    let mut parents = vec![0usize; g.units().len()];
    for &(c, u) in g.chunk_edges() {
        let (c, u) = (c as usize, u as usize);
        if c >= g.chunks().len() || u >= g.units().len() {
            return Err(format!("chunk edge ({c}, {u}) leaves its layers"));
        }
        if g.units()[u].chunk_id != g.chunks()[c].chunk_id {
            return Err(format!("unit {u} linked to a chunk it does not name"));
        }
        parents[u] += 1;
    }
    if g.chunk_edges().len() != g.units().len() {
        return Err(format!(
            "|E_c| = {} but {} units",
            g.chunk_edges().len(),
            g.units().len()
        ));
    }
    if let Some(u) = parents.iter().position(|&p| p != 1) {
        return Err(format!("unit {u} has {} parents", parents[u]));
    }
    let mut degree = vec![0usize; g.entities().len()];
    for &(e, u) in g.entity_edges() {
        let (e, u) = (e as usize, u as usize);
        if e >= g.entities().len() || u >= g.units().len() {
            return Err(format!("entity edge ({e}, {u}) leaves its layers"));
        }
        degree[e] += 1;
    }
    if let Some(e) = degree.iter().position(|&d| d == 0) {
        return Err(format!("entity {e} is an orphan"));
    }
    for u in g.units() {
        for e in g.entities_of_unit(&u.unit_id).map_err(|e| e.to_string())? {
            if !g.units_of_entity(&e).map_err(|e| e.to_string())?.contains(&u.unit_id) {
                return Err("adjacency is not symmetric".into());
            }
        }
        let c = g.chunk_of_unit(&u.unit_id).map_err(|e| e.to_string())?;
        if !g.units_of_chunk(&c).map_err(|e| e.to_string())?.contains(&u.unit_id) {
            return Err("chunk adjacency is not symmetric".into());
        }
    }
    Ok(())
}

/// Node lists, edge lists and the raw bits of every embedding.
pub fn same_graph_bitwise(a: &MultipartiteGraph, b: &MultipartiteGraph) -> bool {
    let bits = |g: &MultipartiteGraph| {
        (
            g.unit_vectors()
                .as_matrix()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>(),
            g.entity_vectors()
                .as_matrix()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>(),
        )
    };
    a.chunks() == b.chunks()
        && a.units() == b.units()
        && a.entities() == b.entities()
        && a.chunk_edges() == b.chunk_edges()
        && a.entity_edges() == b.entity_edges()
        && a.embedder() == b.embedder()
        && bits(a) == bits(b)
}

/// Deterministic pseudo-random relevance in [0, 1).
pub struct HashReranker;

impl HashReranker {
    pub fn score(query: &str, passage: &str) -> f64 {
        let mut h = DefaultHasher::new();
        query.hash(&mut h);
        passage.hash(&mut h);
        (h.finish() >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl Reranker for HashReranker {
    fn name(&self) -> &str {
        "hash"
    }

    fn rerank(&self, query: &str, passages: &[String]) -> Result<Vec<f64>> {
        Ok(passages.iter().map(|p| Self::score(query, p)).collect())
    }
}

/// Returns a fixed mention list for every question.
pub struct FixedMentions(pub Vec<String>);

impl QueryEntityExtractor for FixedMentions {
    fn name(&self) -> &str {
        "fixed"
    }

    fn extract(&self, _question: &str) -> Result<Vec<String>> {
        Ok(self.0.clone())
    }
}

/// A random graph: `n_chunks` chunks with 1..=3 units each, unit vectors
/// random, entities drawn from a pool with hashed vectors from `embedder`.
pub fn random_graph(r: &mut ChaCha8Rng, n_chunks: usize, pool: usize, embedder: &MockEmbedder) -> MultipartiteGraph {
    let dim = embedder.dim();
    let mut b = GraphBuilder::new(dim);
    for c in 0..n_chunks {
        let chunk_id = format!("c{c:02}");
        let n_units = r.random_range(1..=3);
        let texts: Vec<String> = (0..n_units)
            .map(|_| {
                format!(
                    "w{} w{} w{}",
                    r.random_range(0..20),
                    r.random_range(0..20),
                    r.random_range(0..20)
                )
            })
            .collect();
        b.add_chunk(Chunk {
            chunk_id: chunk_id.clone(),
            doc_id: "d".into(),
            text: texts.join(". "),
            token_len: 3 * n_units,
        })
        .unwrap();
        for (i, t) in texts.iter().enumerate() {
            let u = b
                .add_unit(
                    KnowledgeUnit {
                        unit_id: unit_id(&chunk_id, i, t),
                        chunk_id: chunk_id.clone(),
                        text: t.clone(),
                        source: UnitSource::Nlp,
                    },
                    &random_vector(r, dim),
                )
                .unwrap();
            let links: BTreeSet<usize> = (0..r.random_range(0..=3)).map(|_| r.random_range(0..pool)).collect();
            for e in links {
                let surface = format!("Ent{e}");
                b.link_entity(u, Entity::from_surface(&surface), &embedder.vector(&surface))
                    .unwrap();
            }
        }
    }
    b.finish(embedder.name()).unwrap()
}

/// Result of [`oracle_search`].
#[derive(Debug, PartialEq)]
pub struct OracleRun {
    /// Collected unit-id sets, in collection order, each in canonical order.
    pub collected: Vec<Vec<String>>,
    pub residuals: Vec<Vec<f32>>,
    pub chunks: Vec<String>,
}

/// Straightforward re-implementation of the beam search over the raw edge
/// lists, seeded with the given anchors.
pub fn oracle_search(
    g: &MultipartiteGraph,
    question: &str,
    query: &[f32],
    anchors: &[String],
    reranker: &dyn Reranker,
    p: &RetrievalParams,
) -> OracleRun {
    let unit_text = |u: usize| g.units()[u].text.clone();
    let unit_key = |u: usize| (g.units()[u].text.clone(), g.units()[u].unit_id.clone());
    let adj_units = |e: usize| -> Vec<usize> {
        g.entity_edges()
            .iter()
            .filter(|&&(x, _)| x as usize == e)
            .map(|&(_, u)| u as usize)
            .collect()
    };
    let adj_entities = |u: usize| -> Vec<usize> {
        let mut v: Vec<usize> = g
            .entity_edges()
            .iter()
            .filter(|&&(_, y)| y as usize == u)
            .map(|&(e, _)| e as usize)
            .collect();
        v.sort();
        v
    };
    let entity_row = |id: &str| g.entities().iter().position(|e| e.entity_id == id).unwrap();

    struct S {
        frontier: Vec<usize>,
        residual: Vec<f32>,
        units: Vec<usize>,
    }
    let mut beam = vec![S {
        frontier: anchors.iter().map(|a| entity_row(a)).collect(),
        residual: query.to_vec(),
        units: vec![],
    }];
    let mut out = OracleRun {
        collected: vec![],
        residuals: vec![],
        chunks: vec![],
    };
    let mut all_units: BTreeSet<usize> = BTreeSet::new();
    for _ in 0..p.depth {
        let mut cands: Vec<S> = vec![];
        for s in &beam {
            for &v in &s.frontier {
                let mut open: Vec<(usize, f64)> = adj_units(v)
                    .into_iter()
                    .filter(|u| !s.units.contains(u))
                    .map(|u| (u, naive_cosine(g.unit_vectors().vector(u), &s.residual)))
                    .collect();
                open.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .unwrap()
                        .then_with(|| g.units()[a.0].unit_id.cmp(&g.units()[b.0].unit_id))
                });
                for &(u, _) in open.iter().take(p.k) {
                    let mut units = s.units.clone();
                    units.push(u);
                    units.sort_by_key(|&x| unit_key(x));
                    cands.push(S {
                        frontier: adj_entities(u),
                        residual: s
                            .residual
                            .iter()
                            .zip(g.unit_vectors().vector(u))
                            .map(|(a, b)| a - b)
                            .collect(),
                        units,
                    });
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut distinct: Vec<(usize, String, f64)> = vec![];
        for (i, c) in cands.iter().enumerate() {
            if seen.insert(c.units.clone()) {
                let text = c.units.iter().map(|&u| unit_text(u)).collect::<Vec<_>>().join(" ");
                let score = reranker.rerank(question, std::slice::from_ref(&text)).unwrap()[0];
                distinct.push((i, text, score));
            }
        }
        distinct.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap()
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.0.cmp(&b.0))
        });
        distinct.truncate(p.beam);
        let mut taken: Vec<Option<S>> = cands.into_iter().map(Some).collect();
        beam = distinct.iter().map(|(i, _, _)| taken[*i].take().unwrap()).collect();
        for s in &beam {
            out.collected
                .push(s.units.iter().map(|&u| g.units()[u].unit_id.clone()).collect());
            out.residuals.push(s.residual.clone());
            all_units.extend(s.units.iter().copied());
        }
    }
    let chunk_ids: BTreeSet<String> = all_units.iter().map(|&u| g.units()[u].chunk_id.clone()).collect();
    let mut ranked: Vec<(String, f64)> = chunk_ids
        .into_iter()
        .map(|c| {
            let text = g.chunk(g.chunk_ix(&c).unwrap()).text.clone();
            let s = reranker.rerank(question, &[text]).unwrap()[0];
            (c, s)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out.chunks = ranked.into_iter().take(p.top_n).map(|(c, _)| c).collect();
    out
}

/// Anchors by exhaustive scan: top-k entities per mention plus the entities
/// of the top-k units for the query vector.
pub fn oracle_anchors(
    g: &MultipartiteGraph,
    embedder: &dyn Embedder,
    mentions: &[String],
    query: &[f32],
    k: usize,
) -> BTreeSet<String> {
    let entity_ids: Vec<String> = g.entities().iter().map(|e| e.entity_id.clone()).collect();
    let entity_vecs: Vec<Vec<f32>> = (0..entity_ids.len())
        .map(|i| g.entity_vectors().vector(i).to_vec())
        .collect();
    let unit_ids: Vec<String> = g.units().iter().map(|u| u.unit_id.clone()).collect();
    let unit_vecs: Vec<Vec<f32>> = (0..unit_ids.len())
        .map(|i| g.unit_vectors().vector(i).to_vec())
        .collect();
    let mut out = BTreeSet::new();
    for m in mentions {
        let v = embedder.embed(std::slice::from_ref(m)).unwrap().remove(0);
        out.extend(
            scan_top_k(&entity_ids, &entity_vecs, &v, k)
                .into_iter()
                .map(|(id, _)| id),
        );
    }
    for (u, _) in scan_top_k(&unit_ids, &unit_vecs, query, k) {
        out.extend(g.entities_of_unit(&u).unwrap());
    }
    out
}

pub fn unit_ix(g: &MultipartiteGraph, id: &str) -> UnitIx {
    g.unit_ix(id).unwrap()
}

pub fn entity_ix(g: &MultipartiteGraph, id: &str) -> EntityIx {
    g.entity_ix(id).unwrap()
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)*));
        }
    };
}

/// Builds a random corpus twice with mock providers, checks the structural
/// rules, and round-trips the graph through disk.
pub fn check_build(seed: u64, docs: usize, alpha: f64) -> std::result::Result<(), String> {
    let corpus = random_corpus(&mut rng(seed), docs, 4);
    let cfg = IndexConfig {
        alpha,
        ..IndexConfig::default()
    };
    let g = build_index(&corpus, &cfg, &Providers::mock(seed))
        .map_err(|e| e.to_string())?
        .graph;
    check_graph(&g)?;
    let again = build_index(&corpus, &cfg, &Providers::mock(seed))
        .map_err(|e| e.to_string())?
        .graph;
    ensure!(same_graph_bitwise(&g, &again), "rebuild differs (seed {seed})");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    persist(&g, dir.path()).map_err(|e| e.to_string())?;
    let back = load(dir.path()).map_err(|e| e.to_string())?;
    ensure!(same_graph_bitwise(&g, &back), "persist/load differs (seed {seed})");
    Ok(())
}

/// Runs the search on a random graph and checks its structural properties
/// and its agreement with [`oracle_search`].
pub fn check_q_iter(seed: u64, chunks: usize, pool: usize, p: &RetrievalParams) -> std::result::Result<(), String> {
    let mut r = rng(seed);
    let embedder = MockEmbedder::new(8, seed);
    let g = random_graph(&mut r, chunks, pool, &embedder);
    let mentions = vec![
        format!("Ent{}", seed as usize % pool),
        format!("Ent{}", (seed as usize / 7) % pool),
    ];
    let question = format!("how is {} related to {}?", mentions[0], mentions[1]);
    let extractor = FixedMentions(mentions.clone());
    let ctx = SearchContext {
        graph: &g,
        embedder: &embedder,
        reranker: &HashReranker,
        extractor: &extractor,
    };
    let res = q_iter(&ctx, &question, p).map_err(|e| e.to_string())?;
    let q = embedder
        .embed(std::slice::from_ref(&question))
        .map_err(|e| e.to_string())?
        .remove(0);

    let anchors: BTreeSet<String> = res.anchors.entities.iter().cloned().collect();
    ensure!(
        anchors == oracle_anchors(&g, &embedder, &mentions, &q, p.k),
        "anchors differ (seed {seed})"
    );

    ensure!(
        res.collected.len() <= p.beam * p.depth,
        "{} states collected",
        res.collected.len()
    );
    for d in 1..=p.depth {
        let n = res.collected.iter().filter(|s| s.depth == d).count();
        ensure!(n <= p.beam, "{n} states at depth {d} with beam {}", p.beam);
    }
    for s in &res.collected {
        let set: HashSet<&String> = s.units.iter().collect();
        ensure!(set.len() == s.units.len(), "repeated unit in a state (seed {seed})");
        ensure!(s.units.len() <= s.depth, "state holds more units than its depth");
        for (i, q0) in q.iter().enumerate() {
            let mut want = *q0 as f64;
            let mut mag = q0.abs() as f64;
            for u in &s.units {
                let x = g.unit_vectors().vector(unit_ix(&g, u).0 as usize)[i] as f64;
                want -= x;
                mag += x.abs();
            }
            ensure!(
                (s.residual[i] as f64 - want).abs() <= 1e-6 * mag.max(1.0),
                "residual component {i} is {} but telescopes to {want}",
                s.residual[i]
            );
        }
    }
    ensure!(res.chunks.len() <= p.top_n, "{} chunks returned", res.chunks.len());
    for w in res.chunks.windows(2) {
        ensure!(w[0].score >= w[1].score, "chunk scores out of order");
    }
    for c in &res.chunks {
        let reachable = res.collected.iter().any(|s| {
            s.units
                .iter()
                .any(|u| g.chunk_of_unit(u).map(|x| x == c.chunk_id).unwrap_or(false))
        });
        ensure!(reachable, "chunk {} is not a parent of a collected unit", c.chunk_id);
    }

    let oracle = oracle_search(&g, &question, &q, &res.anchors.entities, &HashReranker, p);
    let got: Vec<Vec<String>> = res.collected.iter().map(|s| s.units.clone()).collect();
    ensure!(
        got == oracle.collected,
        "collected states differ from the oracle (seed {seed})"
    );
    let residuals: Vec<Vec<f32>> = res.collected.iter().map(|s| s.residual.clone()).collect();
    ensure!(
        residuals == oracle.residuals,
        "residuals differ from the oracle (seed {seed})"
    );
    let ids: Vec<String> = res.chunks.iter().map(|c| c.chunk_id.clone()).collect();
    ensure!(
        ids == oracle.chunks,
        "chunk ranking differs from the oracle (seed {seed})"
    );
    Ok(())
}
