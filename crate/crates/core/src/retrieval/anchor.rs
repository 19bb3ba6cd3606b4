use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::extraction::ner::EntityRecognizer;
use crate::graph::{EntityIx, MultipartiteGraph, UnitIx};
use crate::prompts::query_entities_prompt;
use crate::providers::{Embedder, LlmClient, Phase};
use crate::vector::embed_batch;

/// Finds entity mentions in a question.
pub trait QueryEntityExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn extract(&self, question: &str) -> Result<Vec<String>>;
}

/// Mentions from a named-entity recognizer; no model calls.
pub struct NerQueryExtractor(pub Arc<dyn EntityRecognizer>);

impl QueryEntityExtractor for NerQueryExtractor {
    fn name(&self) -> &str {
        "ner"
    }

    fn extract(&self, question: &str) -> Result<Vec<String>> {
        self.0.recognize(question)
    }
}

/// Mentions listed by the LLM. Unparseable replies fall back to the
/// recognizer.
pub struct LlmQueryExtractor {
    pub llm: LlmClient,
    pub fallback: Arc<dyn EntityRecognizer>,
}

/// Reads `{"entities": [...]}` or a bare JSON list of strings.
pub fn parse_entities_reply(reply: &str) -> Option<Vec<String>> {
    let slice = |open: char, close: char| {
        let a = reply.find(open)?;
        let b = reply.rfind(close)?;
        (a < b).then(|| &reply[a..=b])
    };
    let value: serde_json::Value = match slice('{', '}') {
        Some(obj) => serde_json::from_str::<serde_json::Value>(obj)
            .ok()?
            .get("entities")?
            .clone(),
        None => serde_json::from_str(slice('[', ']')?).ok()?,
    };
    value
        .as_array()?
        .iter()
        .map(|v| v.as_str().map(|s| s.trim().to_string()))
        .filter(|s| !matches!(s, Some(t) if t.is_empty()))
        .collect()
}

impl QueryEntityExtractor for LlmQueryExtractor {
    fn name(&self) -> &str {
        "llm"
    }

    fn extract(&self, question: &str) -> Result<Vec<String>> {
        let reply = self.llm.complete(&query_entities_prompt(question), Phase::Query)?;
        match parse_entities_reply(&reply.text) {
            Some(entities) => Ok(entities),
            None => {
                log::warn!("query entity reply did not parse; using the recognizer instead");
                self.fallback.recognize(question)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionMatch {
    pub mention: String,
    /// (entity_id, cosine), best first
    pub entities: Vec<(String, f64)>,
}

/// Seed entities for a query and how each was reached.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Anchors {
    /// Sorted by entity id.
    pub entities: Vec<EntityIx>,
    pub mentions: Vec<MentionMatch>,
    /// Query-similar units whose entities were added, best first.
    pub units: Vec<(UnitIx, f64)>,
}

/// Union of the top-`k` entity nodes for every mention in `question` and the
/// entities of the top-`k` units closest to `query_vec`.
pub fn entity_anchoring(
    g: &MultipartiteGraph,
    embedder: &dyn Embedder,
    extractor: &dyn QueryEntityExtractor,
    question: &str,
    query_vec: &[f32],
    k: usize,
) -> Result<Anchors> {
    let mut out = Anchors::default();
    if g.entities().is_empty() && g.units().is_empty() {
        return Ok(out);
    }
    let mut seeds: BTreeSet<EntityIx> = BTreeSet::new();

    let mut mentions: Vec<String> = Vec::new();
    for m in extractor.extract(question)? {
        if !m.trim().is_empty() && !mentions.contains(&m) {
            mentions.push(m);
        }
    }
    if mentions.is_empty() {
        log::debug!("no entity mentions found in the query");
    } else if !g.entities().is_empty() {
        let vectors = embed_batch(&mentions, embedder)?;
        for (mention, v) in mentions.into_iter().zip(vectors) {
            let hits = g.entity_vectors().top_k_rows(&v, k, None);
            seeds.extend(hits.iter().map(|&(r, _)| EntityIx(r as u32)));
            out.mentions.push(MentionMatch {
                mention,
                entities: hits
                    .into_iter()
                    .map(|(r, s)| (g.entity(EntityIx(r as u32)).entity_id.clone(), s))
                    .collect(),
            });
        }
    }

    for (r, s) in g.unit_vectors().top_k_rows(query_vec, k, None) {
        let u = UnitIx(r as u32);
        seeds.extend(g.entity_neighbors(u));
        out.units.push((u, s));
    }

    out.entities = seeds.into_iter().collect();
    out.entities
        .sort_by(|a, b| g.entity(*a).entity_id.cmp(&g.entity(*b).entity_id));
    Ok(out)
}
