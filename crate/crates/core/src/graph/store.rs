//! Index directory format.
//!
//! ```text
//! manifest.json    format_version, embedding_dim, counts, sha256 per file
//! chunks.jsonl     one Chunk per line, row order
//! units.jsonl      one KnowledgeUnit per line, row order
//! entities.jsonl   one Entity per line, row order
//! edges_c.bin      (chunk_row: u32 LE, unit_row: u32 LE) records
//! edges_e.bin      (entity_row: u32 LE, unit_row: u32 LE) records
//! embeddings.f32   unit rows then entity rows, f32 LE, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MultipartiteGraph;
use crate::error::{Error, Result};
use crate::vector::VectorSet;

pub const FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const CHUNKS: &str = "chunks.jsonl";
const UNITS: &str = "units.jsonl";
const ENTITIES: &str = "entities.jsonl";
const EDGES_C: &str = "edges_c.bin";
const EDGES_E: &str = "edges_e.bin";
const EMBEDDINGS: &str = "embeddings.f32";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub chunks: usize,
    pub units: usize,
    pub entities: usize,
    pub edges_c: usize,
    pub edges_e: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub embedding_dim: usize,
    pub counts: Counts,
    pub checksums: BTreeMap<String, String>,
    #[serde(default)]
    pub embedder: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn pairs(edges: &[(u32, u32)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(edges.len() * 8);
    for &(a, b) in edges {
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    out
}

/// Writes `g` into `dir`, creating it if needed. Existing index files are
/// overwritten.
pub fn persist(g: &MultipartiteGraph, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut embeddings =
        Vec::with_capacity(4 * (g.unit_vectors.as_matrix().len() + g.entity_vectors.as_matrix().len()));
    for x in g.unit_vectors.as_matrix().iter().chain(g.entity_vectors.as_matrix()) {
        embeddings.extend_from_slice(&x.to_le_bytes());
    }
    let files: Vec<(&str, Vec<u8>)> = vec![
        (CHUNKS, jsonl(&g.chunks)?),
        (UNITS, jsonl(&g.units)?),
        (ENTITIES, jsonl(&g.entities)?),
        (EDGES_C, pairs(&g.edges_c)),
        (EDGES_E, pairs(&g.edges_e)),
        (EMBEDDINGS, embeddings),
    ];

    let mut checksums = BTreeMap::new();
    for (name, bytes) in &files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        checksums.insert(name.to_string(), sha256_hex(bytes));
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        embedding_dim: g.unit_vectors.dim(),
        counts: Counts {
            chunks: g.chunks.len(),
            units: g.units.len(),
            entities: g.entities.len(),
            edges_c: g.edges_c.len(),
            edges_e: g.edges_e.len(),
        },
        checksums,
        embedder: g.embedder.clone(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::MalformedRecord {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

fn read_checked(dir: &Path, name: &str, manifest: &Manifest) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    match manifest.checksums.get(name) {
        Some(sum) if *sum == sha256_hex(&bytes) => Ok(bytes),
        _ => Err(Error::Checksum { file: name.to_string() }),
    }
}

fn parse_jsonl<T: DeserializeOwned>(dir: &Path, name: &str, bytes: &[u8], expected: usize) -> Result<Vec<T>> {
    let path = dir.join(name);
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedRecord {
        path: path.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let items = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<T>>>()?;
    if items.len() != expected {
        return Err(Error::Invariant(format!(
            "{name} has {} records, manifest says {expected}",
            items.len()
        )));
    }
    Ok(items)
}

fn parse_pairs(name: &str, bytes: &[u8], expected: usize) -> Result<Vec<(u32, u32)>> {
    if bytes.len() != expected * 8 {
        return Err(Error::Invariant(format!(
            "{name} is {} bytes, expected {} records of 8 bytes",
            bytes.len(),
            expected
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|r| {
            (
                u32::from_le_bytes(r[..4].try_into().unwrap()),
                u32::from_le_bytes(r[4..].try_into().unwrap()),
            )
        })
        .collect())
}

/// Reads an index directory written by [`persist`], verifying the format
/// version and every file checksum.
pub fn load(dir: &Path) -> Result<MultipartiteGraph> {
    let m = read_manifest(dir)?;
    let chunks = parse_jsonl(dir, CHUNKS, &read_checked(dir, CHUNKS, &m)?, m.counts.chunks)?;
    let units: Vec<crate::extraction::KnowledgeUnit> =
        parse_jsonl(dir, UNITS, &read_checked(dir, UNITS, &m)?, m.counts.units)?;
    let entities: Vec<crate::extraction::Entity> =
        parse_jsonl(dir, ENTITIES, &read_checked(dir, ENTITIES, &m)?, m.counts.entities)?;
    let edges_c = parse_pairs(EDGES_C, &read_checked(dir, EDGES_C, &m)?, m.counts.edges_c)?;
    let edges_e = parse_pairs(EDGES_E, &read_checked(dir, EDGES_E, &m)?, m.counts.edges_e)?;

    let raw = read_checked(dir, EMBEDDINGS, &m)?;
    let dim = m.embedding_dim;
    let rows = units.len() + entities.len();
    if raw.len() != rows * dim * 4 {
        return Err(Error::Invariant(format!(
            "{EMBEDDINGS} is {} bytes, expected {rows} rows of dimension {dim}",
            raw.len()
        )));
    }
    let floats: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut unit_vectors = VectorSet::new(dim);
    let mut entity_vectors = VectorSet::new(dim);
    let mut rows_iter = floats.chunks(dim.max(1));
    for u in &units {
        unit_vectors.insert(
            u.unit_id.clone(),
            if dim == 0 { &[] } else { rows_iter.next().unwrap() },
        )?;
    }
    for e in &entities {
        entity_vectors.insert(
            e.entity_id.clone(),
            if dim == 0 { &[] } else { rows_iter.next().unwrap() },
        )?;
    }

    MultipartiteGraph::from_parts(
        chunks,
        units,
        entities,
        edges_c,
        edges_e,
        unit_vectors,
        entity_vectors,
        m.embedder,
    )
}
