use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Graph-unique entity identifier. Ids are assigned densely in build order
/// (files sorted by path, declarations in source pre-order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    File,
    Class,
    Function,
    Method,
    Variable,
    Struct,
}

impl EntityKind {
    /// Tie-break priority used by the fallback ranker; lower sorts first.
    pub fn rank_priority(self) -> u8 {
        match self {
            EntityKind::Function | EntityKind::Method => 0,
            EntityKind::Class | EntityKind::Struct => 1,
            EntityKind::Variable => 2,
            EntityKind::File => 3,
        }
    }

    pub fn is_callable(self) -> bool {
        matches!(self, EntityKind::Function | EntityKind::Method)
    }

    pub fn is_type(self) -> bool {
        matches!(self, EntityKind::Class | EntityKind::Struct)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityKind::File => "file",
            EntityKind::Class => "class",
            EntityKind::Function => "function",
            EntityKind::Method => "method",
            EntityKind::Variable => "variable",
            EntityKind::Struct => "struct",
        };
        f.write_str(s)
    }
}

/// Source span of an entity, 1-based inclusive lines. Paths are relative to
/// the indexed root with `/` separators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    pub path: String,
    pub start_line: usize,
    pub end_line: usize,
}

impl Location {
    pub fn contains_line(&self, line: usize) -> bool {
        self.start_line <= line && line <= self.end_line
    }
}

/// 1-based line and column (in characters) of an entity's name token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NamePosition {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeEntity {
    pub id: EntityId,
    pub kind: EntityKind,
    pub name: String,
    pub location: Location,
    pub name_position: NamePosition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Contains,
    Calls,
    References,
    Imports,
    Inherits,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::Contains,
        RelationKind::Calls,
        RelationKind::References,
        RelationKind::Imports,
        RelationKind::Inherits,
    ];
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RelationKind::Contains => "contains",
            RelationKind::Calls => "calls",
            RelationKind::References => "references",
            RelationKind::Imports => "imports",
            RelationKind::Inherits => "inherits",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub path: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeRelation {
    pub src: EntityId,
    pub dst: EntityId,
    pub kind: RelationKind,
    pub site: Site,
}

/// Immutable code knowledge graph. Entities are stored densely by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub(crate) entities: Vec<CodeEntity>,
    pub(crate) relations: Vec<CodeRelation>,
    pub(crate) snapshot_id: String,
    pub(crate) by_name: BTreeMap<String, Vec<EntityId>>,
    pub(crate) outgoing: Vec<Vec<usize>>,
    pub(crate) incoming: Vec<Vec<usize>>,
}

impl KnowledgeGraph {
    /// Assembles a graph, checking referential integrity and id density.
    pub fn from_parts(
        entities: Vec<CodeEntity>,
        relations: Vec<CodeRelation>,
        snapshot_id: String,
    ) -> Result<Self, IntegrityError> {
        for (i, e) in entities.iter().enumerate() {
            if e.id.0 as usize != i {
                return Err(IntegrityError::NonDenseId(e.id));
            }
            if e.location.start_line < 1 || e.location.start_line > e.location.end_line {
                return Err(IntegrityError::BadSpan(e.id));
            }
        }
        let n = entities.len();
        let mut outgoing = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        for (i, r) in relations.iter().enumerate() {
            for end in [r.src, r.dst] {
                if end.0 as usize >= n {
                    return Err(IntegrityError::DanglingEndpoint(end));
                }
            }
            outgoing[r.src.0 as usize].push(i);
            incoming[r.dst.0 as usize].push(i);
        }
        let mut by_name: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
        for e in &entities {
            by_name.entry(e.name.clone()).or_default().push(e.id);
        }
        let graph = KnowledgeGraph {
            entities,
            relations,
            snapshot_id,
            by_name,
            outgoing,
            incoming,
        };
        graph.check_contains_forest()?;
        Ok(graph)
    }

    fn check_contains_forest(&self) -> Result<(), IntegrityError> {
        let mut parent: Vec<Option<EntityId>> = vec![None; self.entities.len()];
        for r in self.relations.iter().filter(|r| r.kind == RelationKind::Contains) {
            let slot = &mut parent[r.dst.0 as usize];
            if slot.is_some() {
                return Err(IntegrityError::ContainsNotForest(r.dst));
            }
            *slot = Some(r.src);
        }
        for e in &self.entities {
            // Walk up; a path longer than the entity count means a cycle.
            let mut cur = e.id;
            let mut steps = 0;
            while let Some(p) = parent[cur.0 as usize] {
                cur = p;
                steps += 1;
                if steps > self.entities.len() {
                    return Err(IntegrityError::ContainsNotForest(e.id));
                }
            }
            if self.entities[cur.0 as usize].kind != EntityKind::File && cur != e.id {
                return Err(IntegrityError::ContainsNotForest(e.id));
            }
        }
        Ok(())
    }

    pub fn entities(&self) -> &[CodeEntity] {
        &self.entities
    }

    pub fn relations(&self) -> &[CodeRelation] {
        &self.relations
    }

    pub fn snapshot_id(&self) -> &str {
        &self.snapshot_id
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity(&self, id: EntityId) -> Option<&CodeEntity> {
        self.entities.get(id.0 as usize)
    }

    pub fn by_name(&self, name: &str) -> &[EntityId] {
        self.by_name.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find(&self, name: &str, kind: EntityKind) -> Option<&CodeEntity> {
        self.by_name(name)
            .iter()
            .filter_map(|id| self.entity(*id))
            .find(|e| e.kind == kind)
    }

    pub fn file_entity(&self, path: &str) -> Option<&CodeEntity> {
        self.entities
            .iter()
            .find(|e| e.kind == EntityKind::File && e.location.path == path)
    }

    pub fn files(&self) -> impl Iterator<Item = &CodeEntity> {
        self.entities.iter().filter(|e| e.kind == EntityKind::File)
    }

    pub(crate) fn outgoing(&self, id: EntityId) -> impl Iterator<Item = &CodeRelation> {
        self.outgoing[id.0 as usize].iter().map(|&i| &self.relations[i])
    }

    pub(crate) fn incoming(&self, id: EntityId) -> impl Iterator<Item = &CodeRelation> {
        self.incoming[id.0 as usize].iter().map(|&i| &self.relations[i])
    }

    /// The entity that directly contains `id`, if any.
    pub fn container_of(&self, id: EntityId) -> Option<&CodeEntity> {
        self.incoming(id)
            .find(|r| r.kind == RelationKind::Contains)
            .and_then(|r| self.entity(r.src))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntegrityError {
    #[error("entity ids must be dense and ordered, found {0} out of place")]
    NonDenseId(EntityId),
    #[error("entity {0} has an invalid line span")]
    BadSpan(EntityId),
    #[error("relation endpoint {0} does not resolve to an entity")]
    DanglingEndpoint(EntityId),
    #[error("contains edges are not a forest rooted at files (at {0})")]
    ContainsNotForest(EntityId),
}

/// Ranked query output. Items are sorted by non-increasing score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntityList {
    pub items: Vec<RankedEntity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub id: EntityId,
    pub score: f64,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    EntityRecognition,
    Similarity,
    Keyword,
}

impl RankedEntityList {
    pub fn ids(&self) -> Vec<EntityId> {
        self.items.iter().map(|i| i.id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }
}
