//! The three-layer graph: chunks, knowledge units and entities, joined only by
//! chunk–unit and entity–unit edges.
//!
//! Node ids are content-addressed strings; internally every layer is a dense
//! array and edges are pairs of row numbers. Adjacency is materialized in both
//! directions when the graph is assembled.

mod build;
mod store;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::extraction::{Entity, KnowledgeUnit, UnitSource};
use crate::vector::VectorSet;

pub use build::{build_index, build_index_from_chunks, IndexBuild, IndexConfig};
pub use store::{load, persist, Manifest, FORMAT_VERSION};

/// Row of a chunk node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChunkIx(pub u32);

/// Row of a knowledge-unit node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitIx(pub u32);

/// Row of an entity node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityIx(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct MultipartiteGraph {
    chunks: Vec<Chunk>,
    units: Vec<KnowledgeUnit>,
    entities: Vec<Entity>,
    /// (chunk, unit), sorted
    edges_c: Vec<(u32, u32)>,
    /// (entity, unit), sorted
    edges_e: Vec<(u32, u32)>,
    unit_vectors: VectorSet,
    entity_vectors: VectorSet,
    embedder: String,

    chunk_rows: HashMap<String, u32>,
    unit_rows: HashMap<String, u32>,
    entity_rows: HashMap<String, u32>,
    unit_parent: Vec<u32>,
    chunk_units: Vec<Vec<u32>>,
    entity_units: Vec<Vec<u32>>,
    unit_entities: Vec<Vec<u32>>,
}

fn row_map<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<HashMap<String, u32>> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id.to_string(), i as u32).is_some() {
            return Err(Error::Invariant(format!("duplicate {kind} id `{id}`")));
        }
    }
    Ok(map)
}

impl MultipartiteGraph {
    /// Assembles a graph from its node and edge lists and checks every
    /// structural invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        chunks: Vec<Chunk>,
        units: Vec<KnowledgeUnit>,
        entities: Vec<Entity>,
        mut edges_c: Vec<(u32, u32)>,
        mut edges_e: Vec<(u32, u32)>,
        unit_vectors: VectorSet,
        entity_vectors: VectorSet,
        embedder: String,
    ) -> Result<Self> {
        let chunk_rows = row_map("chunk", chunks.iter().map(|c| c.chunk_id.as_str()))?;
        let unit_rows = row_map("unit", units.iter().map(|u| u.unit_id.as_str()))?;
        let entity_rows = row_map("entity", entities.iter().map(|e| e.entity_id.as_str()))?;

        edges_c.sort_unstable();
        edges_c.dedup();
        edges_e.sort_unstable();
        edges_e.dedup();

        let (nc, nu, ne) = (chunks.len(), units.len(), entities.len());
        let mut unit_parent = vec![u32::MAX; nu];
        let mut chunk_units = vec![Vec::new(); nc];
        for &(c, u) in &edges_c {
            if c as usize >= nc || u as usize >= nu {
                return Err(Error::Invariant(format!("chunk edge ({c}, {u}) out of range")));
            }
            if unit_parent[u as usize] != u32::MAX {
                return Err(Error::Invariant(format!(
                    "unit `{}` has more than one parent chunk",
                    units[u as usize].unit_id
                )));
            }
            if units[u as usize].chunk_id != chunks[c as usize].chunk_id {
                return Err(Error::Invariant(format!(
                    "unit `{}` is linked to chunk `{}` but names `{}`",
                    units[u as usize].unit_id, chunks[c as usize].chunk_id, units[u as usize].chunk_id
                )));
            }
            unit_parent[u as usize] = c;
            chunk_units[c as usize].push(u);
        }
        if let Some(u) = unit_parent.iter().position(|&p| p == u32::MAX) {
            return Err(Error::Invariant(format!(
                "unit `{}` has no parent chunk",
                units[u].unit_id
            )));
        }

        let mut entity_units = vec![Vec::new(); ne];
        let mut unit_entities = vec![Vec::new(); nu];
        for &(e, u) in &edges_e {
            if e as usize >= ne || u as usize >= nu {
                return Err(Error::Invariant(format!("entity edge ({e}, {u}) out of range")));
            }
            entity_units[e as usize].push(u);
            unit_entities[u as usize].push(e);
        }
        if let Some(e) = entity_units.iter().position(Vec::is_empty) {
            return Err(Error::Invariant(format!(
                "entity `{}` is not referenced by any unit",
                entities[e].entity_id
            )));
        }

        for (kind, set, n) in [("unit", &unit_vectors, nu), ("entity", &entity_vectors, ne)] {
            if set.len() != n {
                return Err(Error::Invariant(format!(
                    "{n} {kind} nodes but {} {kind} embeddings",
                    set.len()
                )));
            }
        }
        if unit_vectors.dim() != entity_vectors.dim() {
            return Err(Error::Invariant(
                "unit and entity embeddings differ in dimension".into(),
            ));
        }
        for (i, u) in units.iter().enumerate() {
            if unit_vectors.id(i) != u.unit_id {
                return Err(Error::Invariant(format!(
                    "embedding row {i} is not unit `{}`",
                    u.unit_id
                )));
            }
        }
        for (i, e) in entities.iter().enumerate() {
            if entity_vectors.id(i) != e.entity_id {
                return Err(Error::Invariant(format!(
                    "embedding row {i} is not entity `{}`",
                    e.entity_id
                )));
            }
        }

        Ok(Self {
            chunks,
            units,
            entities,
            edges_c,
            edges_e,
            unit_vectors,
            entity_vectors,
            embedder,
            chunk_rows,
            unit_rows,
            entity_rows,
            unit_parent,
            chunk_units,
            entity_units,
            unit_entities,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self::from_parts(
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            VectorSet::new(dim),
            VectorSet::new(dim),
            String::new(),
        )
        .expect("empty graph is valid")
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn units(&self) -> &[KnowledgeUnit] {
        &self.units
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn chunk_edges(&self) -> &[(u32, u32)] {
        &self.edges_c
    }

    pub fn entity_edges(&self) -> &[(u32, u32)] {
        &self.edges_e
    }

    pub fn unit_vectors(&self) -> &VectorSet {
        &self.unit_vectors
    }

    pub fn entity_vectors(&self) -> &VectorSet {
        &self.entity_vectors
    }

    /// Name of the embedder that produced the stored vectors.
    pub fn embedder(&self) -> &str {
        &self.embedder
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk(&self, ix: ChunkIx) -> &Chunk {
        &self.chunks[ix.0 as usize]
    }

    pub fn unit(&self, ix: UnitIx) -> &KnowledgeUnit {
        &self.units[ix.0 as usize]
    }

    pub fn entity(&self, ix: EntityIx) -> &Entity {
        &self.entities[ix.0 as usize]
    }

    pub fn chunk_ix(&self, id: &str) -> Result<ChunkIx> {
        self.chunk_rows
            .get(id)
            .map(|&r| ChunkIx(r))
            .ok_or_else(|| Error::UnknownId {
                kind: "chunk",
                id: id.into(),
            })
    }

    pub fn unit_ix(&self, id: &str) -> Result<UnitIx> {
        self.unit_rows
            .get(id)
            .map(|&r| UnitIx(r))
            .ok_or_else(|| Error::UnknownId {
                kind: "unit",
                id: id.into(),
            })
    }

    pub fn entity_ix(&self, id: &str) -> Result<EntityIx> {
        self.entity_rows
            .get(id)
            .map(|&r| EntityIx(r))
            .ok_or_else(|| Error::UnknownId {
                kind: "entity",
                id: id.into(),
            })
    }

    /// Entity node whose normalized form matches `surface`, if any.
    pub fn find_entity(&self, surface: &str) -> Option<EntityIx> {
        self.entity_ix(&Entity::from_surface(surface).entity_id).ok()
    }

    pub fn parent(&self, unit: UnitIx) -> ChunkIx {
        ChunkIx(self.unit_parent[unit.0 as usize])
    }

    pub fn children(&self, chunk: ChunkIx) -> impl Iterator<Item = UnitIx> + '_ {
        self.chunk_units[chunk.0 as usize].iter().map(|&u| UnitIx(u))
    }

    pub fn unit_neighbors(&self, entity: EntityIx) -> impl Iterator<Item = UnitIx> + '_ {
        self.entity_units[entity.0 as usize].iter().map(|&u| UnitIx(u))
    }

    pub fn entity_neighbors(&self, unit: UnitIx) -> impl Iterator<Item = EntityIx> + '_ {
        self.unit_entities[unit.0 as usize].iter().map(|&e| EntityIx(e))
    }

    pub fn units_of_entity(&self, entity_id: &str) -> Result<HashSet<String>> {
        let e = self.entity_ix(entity_id)?;
        Ok(self.unit_neighbors(e).map(|u| self.unit(u).unit_id.clone()).collect())
    }

    pub fn entities_of_unit(&self, unit_id: &str) -> Result<HashSet<String>> {
        let u = self.unit_ix(unit_id)?;
        Ok(self
            .entity_neighbors(u)
            .map(|e| self.entity(e).entity_id.clone())
            .collect())
    }

    pub fn chunk_of_unit(&self, unit_id: &str) -> Result<String> {
        let u = self.unit_ix(unit_id)?;
        Ok(self.chunk(self.parent(u)).chunk_id.clone())
    }

    pub fn units_of_chunk(&self, chunk_id: &str) -> Result<HashSet<String>> {
        let c = self.chunk_ix(chunk_id)?;
        Ok(self.children(c).map(|u| self.unit(u).unit_id.clone()).collect())
    }

    pub fn stats(&self) -> GraphStats {
        let mut unit_sources = BTreeMap::new();
        for u in &self.units {
            *unit_sources.entry(u.source).or_insert(0) += 1;
        }
        let histogram = |degrees: &mut dyn Iterator<Item = usize>| {
            let mut h = BTreeMap::new();
            for d in degrees {
                *h.entry(d).or_insert(0usize) += 1;
            }
            h
        };
        GraphStats {
            chunks: self.chunks.len(),
            units: self.units.len(),
            entities: self.entities.len(),
            chunk_edges: self.edges_c.len(),
            entity_edges: self.edges_e.len(),
            llm_units: unit_sources.get(&UnitSource::Llm).copied().unwrap_or(0),
            nlp_units: unit_sources.get(&UnitSource::Nlp).copied().unwrap_or(0),
            units_per_chunk: histogram(&mut self.chunk_units.iter().map(Vec::len)),
            entities_per_unit: histogram(&mut self.unit_entities.iter().map(Vec::len)),
            units_per_entity: histogram(&mut self.entity_units.iter().map(Vec::len)),
        }
    }
}

/// Node and edge counts with degree histograms (degree → node count).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub chunks: usize,
    pub units: usize,
    pub entities: usize,
    pub chunk_edges: usize,
    pub entity_edges: usize,
    pub llm_units: usize,
    pub nlp_units: usize,
    pub units_per_chunk: BTreeMap<usize, usize>,
    pub entities_per_unit: BTreeMap<usize, usize>,
    pub units_per_entity: BTreeMap<usize, usize>,
}

/// Incremental assembly of a graph; ids are validated when [`finish`] runs.
///
/// [`finish`]: GraphBuilder::finish
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    chunks: Vec<Chunk>,
    units: Vec<KnowledgeUnit>,
    entities: Vec<Entity>,
    entity_rows: HashMap<String, u32>,
    edges_c: Vec<(u32, u32)>,
    edges_e: Vec<(u32, u32)>,
    unit_vectors: VectorSet,
    entity_vectors: VectorSet,
    chunk_rows: HashMap<String, u32>,
}

impl GraphBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            chunks: Vec::new(),
            units: Vec::new(),
            entities: Vec::new(),
            entity_rows: HashMap::new(),
            edges_c: Vec::new(),
            edges_e: Vec::new(),
            unit_vectors: VectorSet::new(dim),
            entity_vectors: VectorSet::new(dim),
            chunk_rows: HashMap::new(),
        }
    }

    pub fn add_chunk(&mut self, chunk: Chunk) -> Result<ChunkIx> {
        let row = self.chunks.len() as u32;
        if self.chunk_rows.insert(chunk.chunk_id.clone(), row).is_some() {
            return Err(Error::DuplicateId(chunk.chunk_id));
        }
        self.chunks.push(chunk);
        Ok(ChunkIx(row))
    }

    /// Adds a unit under its parent chunk (named by `unit.chunk_id`).
    pub fn add_unit(&mut self, unit: KnowledgeUnit, embedding: &[f32]) -> Result<UnitIx> {
        let parent = *self.chunk_rows.get(&unit.chunk_id).ok_or_else(|| Error::UnknownId {
            kind: "chunk",
            id: unit.chunk_id.clone(),
        })?;
        let row = self.units.len() as u32;
        self.unit_vectors.insert(unit.unit_id.clone(), embedding)?;
        self.units.push(unit);
        self.edges_c.push((parent, row));
        Ok(UnitIx(row))
    }

    /// Links `unit` to `entity`, creating the entity node on first sight.
    /// `embedding` is only used when the node is new.
    pub fn link_entity(&mut self, unit: UnitIx, entity: Entity, embedding: &[f32]) -> Result<EntityIx> {
        if unit.0 as usize >= self.units.len() {
            return Err(Error::UnknownId {
                kind: "unit",
                id: format!("#{}", unit.0),
            });
        }
        let row = match self.entity_rows.get(&entity.entity_id) {
            Some(&r) => r,
            None => {
                let r = self.entities.len() as u32;
                self.entity_vectors.insert(entity.entity_id.clone(), embedding)?;
                self.entity_rows.insert(entity.entity_id.clone(), r);
                self.entities.push(entity);
                r
            }
        };
        self.edges_e.push((row, unit.0));
        Ok(EntityIx(row))
    }

    pub fn finish(self, embedder: impl Into<String>) -> Result<MultipartiteGraph> {
        MultipartiteGraph::from_parts(
            self.chunks,
            self.units,
            self.entities,
            self.edges_c,
            self.edges_e,
            self.unit_vectors,
            self.entity_vectors,
            embedder.into(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::unit_id;

    fn chunk(id: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: "d".into(),
            text: format!("text of {id}"),
            token_len: 3,
        }
    }

    fn unit(chunk: &str, i: usize, text: &str) -> KnowledgeUnit {
        KnowledgeUnit {
            unit_id: unit_id(chunk, i, text),
            chunk_id: chunk.into(),
            text: text.into(),
            source: UnitSource::Nlp,
        }
    }

    fn small() -> MultipartiteGraph {
        let mut b = GraphBuilder::new(2);
        b.add_chunk(chunk("c1")).unwrap();
        b.add_chunk(chunk("c2")).unwrap();
        let u0 = b
            .add_unit(unit("c1", 0, "Chelsea F.C. won the FA Cup in 1970"), &[1.0, 0.0])
            .unwrap();
        let u1 = b
            .add_unit(unit("c2", 0, "Forest won the FA Cup in 1898"), &[0.0, 1.0])
            .unwrap();
        b.add_unit(unit("c2", 1, "nothing here"), &[1.0, 1.0]).unwrap();
        for s in ["Chelsea F.C.", "FA Cup", "1970"] {
            b.link_entity(u0, Entity::from_surface(s), &[1.0, 0.0]).unwrap();
        }
        for s in ["Forest", "FA Cup", "1898"] {
            b.link_entity(u1, Entity::from_surface(s), &[0.0, 1.0]).unwrap();
        }
        b.finish("test").unwrap()
    }

    #[test]
    fn adjacency_queries() {
        let g = small();
        let fa = Entity::from_surface("FA Cup").entity_id;
        let u0 = unit_id("c1", 0, "Chelsea F.C. won the FA Cup in 1970");
        assert_eq!(g.units_of_entity(&fa).unwrap().len(), 2);
        assert!(g.units_of_entity(&fa).unwrap().contains(&u0));
        let ents: HashSet<String> = g
            .entities_of_unit(&u0)
            .unwrap()
            .into_iter()
            .map(|id| g.entity(g.entity_ix(&id).unwrap()).surface.clone())
            .collect();
        assert_eq!(
            ents,
            ["Chelsea F.C.", "FA Cup", "1970"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        );
        let lonely = unit_id("c2", 1, "nothing here");
        assert!(g.entities_of_unit(&lonely).unwrap().is_empty());
        assert_eq!(g.chunk_of_unit(&u0).unwrap(), "c1");
        assert_eq!(g.units_of_chunk("c2").unwrap().len(), 2);
        assert!(g.units_of_entity("nope").is_err());
        assert!(g.chunk_of_unit("nope").is_err());
    }

    #[test]
    fn adjacency_symmetry_and_round_trip() {
        let g = small();
        for u in g.units() {
            for e in g.entities_of_unit(&u.unit_id).unwrap() {
                assert!(g.units_of_entity(&e).unwrap().contains(&u.unit_id));
            }
            let c = g.chunk_of_unit(&u.unit_id).unwrap();
            assert!(g.units_of_chunk(&c).unwrap().contains(&u.unit_id));
        }
    }

    #[test]
    fn single_link_write_read() {
        let mut b = GraphBuilder::new(1);
        b.add_chunk(chunk("c")).unwrap();
        let u = b.add_unit(unit("c", 0, "Paris"), &[1.0]).unwrap();
        let e = Entity::from_surface("Paris");
        b.link_entity(u, e.clone(), &[1.0]).unwrap();
        let g = b.finish("t").unwrap();
        let units = g.units_of_entity(&e.entity_id).unwrap();
        assert_eq!(units, [unit_id("c", 0, "Paris")].into_iter().collect());
    }

    #[test]
    fn stats_counts() {
        let s = small().stats();
        assert_eq!(
            (s.chunks, s.units, s.entities, s.chunk_edges, s.entity_edges),
            (2, 3, 5, 3, 6)
        );
        assert_eq!(s.nlp_units, 3);
        assert_eq!(s.units_per_entity[&2], 1);
        assert_eq!(s.entities_per_unit[&0], 1);
        let empty = MultipartiteGraph::empty(4).stats();
        assert_eq!(
            (
                empty.chunks,
                empty.units,
                empty.entities,
                empty.chunk_edges,
                empty.entity_edges
            ),
            (0, 0, 0, 0, 0)
        );
    }

    #[test]
    fn orphan_entity_rejected() {
        let mut vs = VectorSet::new(1);
        vs.insert("e1", &[1.0]).unwrap();
        let err = MultipartiteGraph::from_parts(
            vec![],
            vec![],
            vec![Entity {
                entity_id: "e1".into(),
                surface: "X".into(),
                normalized: "x".into(),
            }],
            vec![],
            vec![],
            VectorSet::new(1),
            vs,
            String::new(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn second_parent_rejected() {
        let g = small();
        let mut edges = g.chunk_edges().to_vec();
        edges.push((1, 0));
        let err = MultipartiteGraph::from_parts(
            g.chunks.clone(),
            g.units.clone(),
            g.entities.clone(),
            edges,
            g.edges_e.clone(),
            g.unit_vectors.clone(),
            g.entity_vectors.clone(),
            String::new(),
        );
        assert!(matches!(err, Err(Error::Invariant(_))));
    }

    #[test]
    fn unit_for_unknown_chunk_rejected() {
        let mut b = GraphBuilder::new(1);
        assert!(b.add_unit(unit("missing", 0, "x"), &[1.0]).is_err());
    }
}
