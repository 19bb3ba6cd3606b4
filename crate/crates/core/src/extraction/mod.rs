//! Knowledge-unit and entity extraction.
//!
//! Core chunks are decomposed by the LLM; every other chunk is split into
//! sentences. Entities are then recognized in every unit regardless of how
//! the unit was produced.

pub mod ner;

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{split_sentences, Chunk};
use crate::error::{Error, Result};
use crate::prompts;
use crate::providers::{LlmClient, Phase, Providers};

use ner::EntityRecognizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitSource {
    Llm,
    Nlp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeUnit {
    pub unit_id: String,
    pub chunk_id: String,
    pub text: String,
    pub source: UnitSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: String,
    pub surface: String,
    pub normalized: String,
}

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

/// Content-addressed unit id from parent chunk, ordinal and text.
pub fn unit_id(chunk_id: &str, ordinal: usize, text: &str) -> String {
    format!(
        "u{}",
        short_hash(&[chunk_id.as_bytes(), &(ordinal as u64).to_le_bytes(), text.as_bytes()])
    )
}

/// Lowercased, trimmed, whitespace-collapsed form used as the entity key.
pub fn normalize_entity(surface: &str) -> String {
    surface.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Entity {
    pub fn from_surface(surface: &str) -> Self {
        let normalized = normalize_entity(surface);
        Self {
            entity_id: format!("e{}", short_hash(&[normalized.as_bytes()])),
            surface: surface.split_whitespace().collect::<Vec<_>>().join(" "),
            normalized,
        }
    }
}

fn make_units(chunk: &Chunk, texts: impl IntoIterator<Item = String>, source: UnitSource) -> Vec<KnowledgeUnit> {
    texts
        .into_iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(i, text)| KnowledgeUnit {
            unit_id: unit_id(&chunk.chunk_id, i, &text),
            chunk_id: chunk.chunk_id.clone(),
            text,
            source,
        })
        .collect()
}

/// One unit per sentence, in order.
pub fn extract_units_nlp(chunk: &Chunk) -> Vec<KnowledgeUnit> {
    make_units(
        chunk,
        split_sentences(&chunk.text).into_iter().map(str::to_string),
        UnitSource::Nlp,
    )
}

/// Removes a comma that directly precedes a closing bracket, outside strings.
fn strip_trailing_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some(']') | Some('}')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Parses an extraction reply: a JSON object with a `"knowledge units"`
/// string list, possibly inside code fences and with trailing commas. A bare
/// JSON list is accepted too. Returns `None` when nothing usable is found.
pub fn parse_units_reply(reply: &str) -> Option<Vec<String>> {
    let cleaned: String = reply
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    let obj = cleaned
        .find('{')
        .and_then(|s| cleaned.rfind('}').filter(|&e| e > s).map(|e| &cleaned[s..=e]));
    let list = cleaned
        .find('[')
        .and_then(|s| cleaned.rfind(']').filter(|&e| e > s).map(|e| &cleaned[s..=e]));

    let value: serde_json::Value = obj
        .or(list)
        .and_then(|body| serde_json::from_str(&strip_trailing_commas(body)).ok())?;
    let items = match &value {
        serde_json::Value::Object(map) => ["knowledge units", "knowledge_units", "units"]
            .iter()
            .find_map(|k| map.get(*k))?
            .as_array()?,
        serde_json::Value::Array(items) => items,
        _ => return None,
    };
    items
        .iter()
        .map(|v| v.as_str().map(|s| s.trim().to_string()))
        .filter(|s| !matches!(s, Some(t) if t.is_empty()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Llm,
    /// The LLM reply never parsed; units came from sentence splitting.
    LlmFallback,
    Nlp,
}

/// One line of `extraction-log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub chunk_id: String,
    pub route: Route,
    pub unit_count: usize,
    pub llm_calls: u64,
    pub llm_tokens_in: u64,
    pub llm_tokens_out: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractionOptions {
    /// Extra attempts, with the JSON reminder appended, after an unparseable
    /// reply.
    pub parse_retries: usize,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        Self { parse_retries: 1 }
    }
}

/// LLM decomposition of one chunk. Transport failures propagate; replies that
/// never parse fall back to sentence splitting.
pub fn extract_units_llm(
    chunk: &Chunk,
    llm: &LlmClient,
    opts: &ExtractionOptions,
) -> Result<(Vec<KnowledgeUnit>, ExtractionRecord)> {
    let mut record = ExtractionRecord {
        chunk_id: chunk.chunk_id.clone(),
        route: Route::Llm,
        unit_count: 0,
        llm_calls: 0,
        llm_tokens_in: 0,
        llm_tokens_out: 0,
    };
    let base = prompts::extraction_prompt(&chunk.text);
    for attempt in 0..=opts.parse_retries {
        let prompt = if attempt == 0 {
            base.clone()
        } else {
            format!("{base}\n{}", prompts::JSON_REMINDER)
        };
        let reply = llm.complete(&prompt, Phase::Indexing)?;
        record.llm_calls += 1;
        record.llm_tokens_in += reply.prompt_tokens;
        record.llm_tokens_out += reply.completion_tokens;
        if let Some(texts) = parse_units_reply(&reply.text) {
            if texts.is_empty() {
                log::warn!("LLM returned no knowledge units for chunk `{}`", chunk.chunk_id);
            }
            let units = make_units(chunk, texts, UnitSource::Llm);
            record.unit_count = units.len();
            return Ok((units, record));
        }
        log::warn!(
            "unparseable extraction reply for chunk `{}` (attempt {})",
            chunk.chunk_id,
            attempt + 1
        );
    }
    log::warn!("falling back to sentence splitting for chunk `{}`", chunk.chunk_id);
    let units = extract_units_nlp(chunk);
    record.route = Route::LlmFallback;
    record.unit_count = units.len();
    Ok((units, record))
}

/// Entities of one unit, deduplicated by normalized form. Recognizer errors
/// are logged and yield no entities.
pub fn extract_entities(unit: &KnowledgeUnit, ner: &dyn EntityRecognizer) -> Vec<Entity> {
    let surfaces = match ner.recognize(&unit.text) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("NER failed for unit `{}`: {e}", unit.unit_id);
            return Vec::new();
        }
    };
    let mut seen = BTreeSet::new();
    surfaces
        .iter()
        .map(|s| Entity::from_surface(s))
        .filter(|e| !e.normalized.is_empty() && seen.insert(e.normalized.clone()))
        .collect()
}

/// Output of [`hybrid_extract`]. `links` pairs indices into `units` and
/// `entities`.
#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub units: Vec<KnowledgeUnit>,
    pub entities: Vec<Entity>,
    pub links: Vec<(usize, usize)>,
    pub log: Vec<ExtractionRecord>,
}

/// Routes each chunk by membership in `core`, then recognizes entities in
/// every unit. Chunks are processed in parallel (at most
/// `providers.llm_concurrency` at once); the merge is sequential, in chunk
/// order.
pub fn hybrid_extract(
    chunks: &[Chunk],
    core: &BTreeSet<String>,
    providers: &Providers,
    opts: &ExtractionOptions,
) -> Result<Extraction> {
    let known: BTreeSet<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
    if let Some(stray) = core.iter().find(|id| !known.contains(id.as_str())) {
        return Err(Error::UnknownId {
            kind: "chunk",
            id: stray.clone(),
        });
    }

    let per_chunk = |chunk: &Chunk| -> Result<(Vec<KnowledgeUnit>, ExtractionRecord, Vec<Vec<Entity>>)> {
        let (units, record) = if core.contains(&chunk.chunk_id) {
            extract_units_llm(chunk, &providers.llm, opts)?
        } else {
            let units = extract_units_nlp(chunk);
            let record = ExtractionRecord {
                chunk_id: chunk.chunk_id.clone(),
                route: Route::Nlp,
                unit_count: units.len(),
                llm_calls: 0,
                llm_tokens_in: 0,
                llm_tokens_out: 0,
            };
            (units, record)
        };
        let entities = units
            .iter()
            .map(|u| extract_entities(u, providers.ner.as_ref()))
            .collect();
        Ok((units, record, entities))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(providers.llm_concurrency.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start extraction workers: {e}")))?;
    let results: Vec<_> = pool.install(|| chunks.par_iter().map(per_chunk).collect());

    let mut out = Extraction::default();
    let mut entity_index: HashMap<String, usize> = HashMap::new();
    for (done, result) in results.into_iter().enumerate() {
        let (units, record, entities) = result.map_err(|cause| Error::BuildAborted {
            chunks_done: done,
            chunks_total: chunks.len(),
            cause: Box::new(cause),
        })?;
        out.log.push(record);
        for (unit, ents) in units.into_iter().zip(entities) {
            let u = out.units.len();
            out.units.push(unit);
            for e in ents {
                let idx = *entity_index.entry(e.normalized.clone()).or_insert_with(|| {
                    out.entities.push(e);
                    out.entities.len() - 1
                });
                out.links.push((u, idx));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Tokenizer, WordTokenizer};
    use crate::providers::{LanguageModel, LexicalReranker, MockEmbedder, MockLlm};
    use std::sync::Arc;

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: "d".into(),
            text: text.into(),
            token_len: WordTokenizer.count(text),
        }
    }

    fn providers_with(llm: MockLlm) -> (Providers, Arc<MockLlm>) {
        let llm = Arc::new(llm);
        let p = Providers::from_parts(
            llm.clone() as Arc<dyn LanguageModel>,
            Arc::new(MockEmbedder::new(8, 0)),
            Arc::new(LexicalReranker),
        );
        (p, llm)
    }

    const ARANGUREN: &str = "Jesús Aranguren. His 13-year professional career was solely associated with Athletic Bilbao, with which he played in nearly 400 official games, winning two Copa del Rey trophies.";

    const ARANGUREN_REPLY: &str = r#"{
    "knowledge units": [
        "Jesús Aranguren had a 13-year professional career.",
        "Jesús Aranguren's professional career was solely associated with Athletic Bilbao.",
        "Athletic Bilbao is a football club.",
        "Jesús Aranguren played for Athletic Bilbao in nearly 400 official games.",
        "Jesús Aranguren won two Copa del Rey trophies with Athletic Bilbao.",
    ]
}"#;

    #[test]
    fn nlp_units_are_sentences() {
        let u = extract_units_nlp(&chunk("c", "A. B."));
        assert_eq!(u.iter().map(|u| u.text.as_str()).collect::<Vec<_>>(), vec!["A.", "B."]);
        assert!(u.iter().all(|u| u.source == UnitSource::Nlp && u.chunk_id == "c"));
        let u = extract_units_nlp(&chunk("c", "Only one sentence here"));
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].text, "Only one sentence here");
    }

    #[test]
    fn nlp_keeps_ambiguous_final_sentence() {
        let text = "Lionel Messi joined the club in 2004. He scored an amazing goal.";
        let u = extract_units_nlp(&chunk("c", text));
        assert_eq!(u.last().unwrap().text, "He scored an amazing goal.");
    }

    #[test]
    fn parse_reply_with_trailing_commas_and_fences() {
        let units = parse_units_reply(ARANGUREN_REPLY).unwrap();
        assert_eq!(units.len(), 5);
        assert_eq!(units[0], "Jesús Aranguren had a 13-year professional career.");
        let fenced = "```json\n{\"knowledge units\": [\"a\", \"b\",]}\n```";
        assert_eq!(parse_units_reply(fenced).unwrap(), vec!["a", "b"]);
        assert_eq!(parse_units_reply("[\"x\"]").unwrap(), vec!["x"]);
        assert_eq!(
            parse_units_reply("{\"knowledge units\": []}").unwrap(),
            Vec::<String>::new()
        );
        assert!(parse_units_reply("no json here").is_none());
        assert!(parse_units_reply("{\"other\": [\"x\"]}").is_none());
        assert!(parse_units_reply("{\"knowledge units\": [1, 2]}").is_none());
    }

    #[test]
    fn trailing_comma_inside_string_is_kept() {
        assert_eq!(
            parse_units_reply(r#"{"knowledge units": ["a ,]", "b"]}"#).unwrap(),
            vec!["a ,]", "b"]
        );
    }

    #[test]
    fn llm_example_one() {
        let c = chunk("c", ARANGUREN);
        let prompt = prompts::extraction_prompt(ARANGUREN);
        let (p, _) = providers_with(MockLlm::new().with_response(prompt, ARANGUREN_REPLY));
        let (units, record) = extract_units_llm(&c, &p.llm, &ExtractionOptions::default()).unwrap();
        assert_eq!(units.len(), 5);
        assert!(units
            .iter()
            .any(|u| u.text == "Jesús Aranguren had a 13-year professional career."));
        assert!(units.iter().all(|u| u.source == UnitSource::Llm));
        assert_eq!(record.route, Route::Llm);
        assert_eq!(record.llm_calls, 1);
        assert!(record.llm_tokens_in > 0 && record.llm_tokens_out > 0);
    }

    #[test]
    fn llm_two_unit_passthrough() {
        let c = chunk("c", "whatever");
        let prompt = prompts::extraction_prompt("whatever");
        let (p, _) = providers_with(MockLlm::new().with_response(prompt, r#"{"knowledge units": ["One.", "Two."]}"#));
        let (units, _) = extract_units_llm(&c, &p.llm, &ExtractionOptions::default()).unwrap();
        assert_eq!(units.len(), 2);
        assert!(units.iter().all(|u| u.source == UnitSource::Llm));
    }

    #[test]
    fn malformed_reply_retries_then_falls_back() {
        let c = chunk("c", "First. Second.");
        let prompt = prompts::extraction_prompt("First. Second.");
        let retry = format!("{prompt}\n{}", prompts::JSON_REMINDER);
        let (p, llm) = providers_with(
            MockLlm::new()
                .with_response(prompt, "sorry, no")
                .with_response(retry, "still no"),
        );
        let (units, record) = extract_units_llm(&c, &p.llm, &ExtractionOptions::default()).unwrap();
        assert_eq!(llm.calls(), 2);
        assert_eq!(record.route, Route::LlmFallback);
        assert_eq!(units.len(), 2);
        assert!(units.iter().all(|u| u.source == UnitSource::Nlp));
    }

    #[test]
    fn retry_succeeds_with_reminder() {
        let c = chunk("c", "X.");
        let prompt = prompts::extraction_prompt("X.");
        let retry = format!("{prompt}\n{}", prompts::JSON_REMINDER);
        let (p, _) = providers_with(
            MockLlm::new()
                .with_response(prompt, "garbage")
                .with_response(retry, r#"["X is a thing."]"#),
        );
        let (units, record) = extract_units_llm(&c, &p.llm, &ExtractionOptions::default()).unwrap();
        assert_eq!(record.route, Route::Llm);
        assert_eq!(record.llm_calls, 2);
        assert_eq!(units[0].text, "X is a thing.");
    }

    #[test]
    fn entities_deduplicate() {
        let u = KnowledgeUnit {
            unit_id: "u".into(),
            chunk_id: "c".into(),
            text: "FA Cup, FA Cup".into(),
            source: UnitSource::Nlp,
        };
        let e = extract_entities(&u, &ner::RuleNer);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].surface, "FA Cup");
        assert_eq!(e[0].normalized, "fa cup");
    }

    #[test]
    fn entities_from_aranguren_unit() {
        let u = KnowledgeUnit {
            unit_id: "u".into(),
            chunk_id: "c".into(),
            text: "Jesús Aranguren played for Athletic Bilbao in nearly 400 official games.".into(),
            source: UnitSource::Llm,
        };
        let surfaces: Vec<_> = extract_entities(&u, &ner::RuleNer)
            .into_iter()
            .map(|e| e.surface)
            .collect();
        assert_eq!(surfaces, vec!["Jesús Aranguren", "Athletic Bilbao"]);
    }

    struct FailingNer;
    impl EntityRecognizer for FailingNer {
        fn name(&self) -> &str {
            "failing"
        }
        fn recognize(&self, _: &str) -> Result<Vec<String>> {
            Err(Error::Transport {
                provider: "ner",
                attempts: 1,
                message: "down".into(),
            })
        }
    }

    #[test]
    fn ner_failure_yields_no_entities() {
        let u = KnowledgeUnit {
            unit_id: "u".into(),
            chunk_id: "c".into(),
            text: "Paris".into(),
            source: UnitSource::Nlp,
        };
        assert!(extract_entities(&u, &FailingNer).is_empty());
    }

    #[test]
    fn normalization_is_idempotent() {
        for s in ["  FA   Cup ", "Jesús\tAranguren", "x"] {
            let n = normalize_entity(s);
            assert_eq!(normalize_entity(&n), n);
        }
        assert_eq!(normalize_entity("  FA   Cup "), "fa cup");
    }

    #[test]
    fn routing() {
        let chunks = vec![
            chunk("a", "Alpha Beta met Gamma. Delta left."),
            chunk("b", "Epsilon stayed home."),
        ];
        let (p, llm) = providers_with(MockLlm::new());
        let none = hybrid_extract(&chunks, &BTreeSet::new(), &p, &ExtractionOptions::default()).unwrap();
        assert!(none.units.iter().all(|u| u.source == UnitSource::Nlp));
        assert_eq!(llm.calls(), 0);

        let all: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let out = hybrid_extract(&chunks, &all, &p, &ExtractionOptions::default()).unwrap();
        assert!(out.units.iter().all(|u| u.source == UnitSource::Llm));
        assert_eq!(llm.calls(), 2);

        let one: BTreeSet<String> = ["a".to_string()].into();
        let out = hybrid_extract(&chunks, &one, &p, &ExtractionOptions::default()).unwrap();
        for u in &out.units {
            assert_eq!(u.source == UnitSource::Llm, u.chunk_id == "a");
        }
        assert_eq!(out.log[0].route, Route::Llm);
        assert_eq!(out.log[1].route, Route::Nlp);
        for &(u, e) in &out.links {
            assert!(u < out.units.len() && e < out.entities.len());
        }
    }

    #[test]
    fn unknown_core_chunk_rejected() {
        let (p, _) = providers_with(MockLlm::new());
        let core: BTreeSet<String> = ["zzz".to_string()].into();
        assert!(hybrid_extract(&[chunk("a", "x")], &core, &p, &ExtractionOptions::default()).is_err());
    }
}
