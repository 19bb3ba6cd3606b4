//! Document ingestion, chunking, tokenization and sentence segmentation.

mod sentences;
mod tokenizer;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sentences::split_sentences;
pub use tokenizer::{tokenizer_by_name, Tokenizer, WhitespaceTokenizer, WordTokenizer};

/// Default chunk cap in tokens.
pub const DEFAULT_CHUNK_TOKENS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub token_len: usize,
}

/// On-disk corpus layouts accepted by [`load_corpus`] and [`load_chunks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `{id, title?, text}` per line; chunked on ingestion.
    JsonlDocs,
    /// `{id, doc_id, text}` per line; already chunked.
    JsonlChunks,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl-docs" => Ok(CorpusFormat::JsonlDocs),
            "jsonl-chunks" => Ok(CorpusFormat::JsonlChunks),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Deserialize)]
struct DocRecord {
    #[serde(alias = "doc_id")]
    id: String,
    #[serde(default)]
    title: String,
    #[serde(alias = "body")]
    text: String,
}

#[derive(Deserialize)]
struct ChunkRecord {
    #[serde(alias = "chunk_id")]
    id: String,
    doc_id: String,
    text: String,
}

fn read_jsonl<T, F>(path: &Path, mut each: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(usize, T) -> Result<()>,
{
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        each(i + 1, record)?;
    }
    Ok(())
}

/// Reads a `jsonl-docs` corpus, preserving file order.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Document>> {
    if format != CorpusFormat::JsonlDocs {
        return Err(Error::UnsupportedFormat(
            "jsonl-chunks records are loaded with load_chunks".into(),
        ));
    }
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    read_jsonl::<DocRecord, _>(path, |line, r| {
        if r.text.trim().is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line,
                message: format!("document `{}` has an empty body", r.id),
            });
        }
        if !seen.insert(r.id.clone()) {
            return Err(Error::DuplicateId(r.id));
        }
        docs.push(Document {
            doc_id: r.id,
            title: r.title,
            body: r.text,
        });
        Ok(())
    })?;
    Ok(docs)
}

/// Reads a `jsonl-chunks` corpus. Records over `max_tokens` are re-split with
/// [`chunk_document`] and their pieces get `#n` suffixed ids.
pub fn load_chunks(path: &Path, max_tokens: usize, tok: &dyn Tokenizer) -> Result<Vec<Chunk>> {
    if max_tokens < 1 {
        return Err(Error::InvalidArgument("chunk cap must be at least 1".into()));
    }
    let mut chunks = Vec::new();
    let mut seen = HashSet::new();
    read_jsonl::<ChunkRecord, _>(path, |line, r| {
        if r.text.trim().is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line,
                message: format!("chunk `{}` is empty", r.id),
            });
        }
        let token_len = tok.count(&r.text);
        let pieces = if token_len <= max_tokens {
            vec![Chunk {
                chunk_id: r.id,
                doc_id: r.doc_id,
                text: r.text,
                token_len,
            }]
        } else {
            log::warn!("chunk `{}` has {token_len} tokens; re-splitting", r.id);
            let doc = Document {
                doc_id: r.doc_id,
                title: String::new(),
                body: r.text,
            };
            chunk_document(&doc, max_tokens, tok)?
                .into_iter()
                .enumerate()
                .map(|(n, mut c)| {
                    c.chunk_id = format!("{}#{n}", r.id);
                    c
                })
                .collect()
        };
        for c in pieces {
            if !seen.insert(c.chunk_id.clone()) {
                return Err(Error::DuplicateId(c.chunk_id));
            }
            chunks.push(c);
        }
        Ok(())
    })?;
    Ok(chunks)
}

/// Sentence-greedy packing of `doc.body` into chunks of at most `max_tokens`.
///
/// Whole sentences are appended (joined by one space) until the next would
/// overflow the cap. A sentence longer than the cap is cut at token
/// boundaries.
pub fn chunk_document(doc: &Document, max_tokens: usize, tok: &dyn Tokenizer) -> Result<Vec<Chunk>> {
    if max_tokens < 1 {
        return Err(Error::InvalidArgument("chunk cap must be at least 1".into()));
    }
    let mut pieces: Vec<(String, usize)> = Vec::new();
    let mut current = String::new();
    let mut current_len = 0usize;

    let flush = |current: &mut String, current_len: &mut usize, pieces: &mut Vec<(String, usize)>| {
        if *current_len > 0 {
            pieces.push((std::mem::take(current), *current_len));
            *current_len = 0;
        } else {
            current.clear();
        }
    };

    for sentence in split_sentences(&doc.body) {
        let spans = tok.spans(sentence);
        let n = spans.len();
        if n == 0 {
            continue;
        }
        if n > max_tokens {
            flush(&mut current, &mut current_len, &mut pieces);
            for window in spans.chunks(max_tokens) {
                let from = window[0].start;
                let to = window[window.len() - 1].end;
                pieces.push((sentence[from..to].to_string(), window.len()));
            }
            continue;
        }
        if current_len + n > max_tokens {
            flush(&mut current, &mut current_len, &mut pieces);
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(sentence);
        current_len += n;
    }
    flush(&mut current, &mut current_len, &mut pieces);

    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(i, (text, token_len))| Chunk {
            chunk_id: format!("{}#{i}", doc.doc_id),
            doc_id: doc.doc_id.clone(),
            text,
            token_len,
        })
        .collect())
}

/// Chunks every document in order.
pub fn chunk_corpus(docs: &[Document], max_tokens: usize, tok: &dyn Tokenizer) -> Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for d in docs {
        out.extend(chunk_document(d, max_tokens, tok)?);
    }
    Ok(out)
}
