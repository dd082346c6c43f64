//! Line-delimited graph file.
//!
//! The first line is a header record, followed by one record per entity and
//! one per relation, each a single JSON object:
//!
//! ```text
//! {"record":"header","format":"bugsmith-ckg","version":1,"snapshot_id":"<sha256>","entities":N,"relations":M}
//! {"record":"entity","id":0,"kind":"file","name":"fileA.go","location":{...},"name_position":{...}}
//! {"record":"relation","src":0,"dst":1,"kind":"contains","site":{"path":"main/fileA.go","line":8}}
//! ```

use super::model::*;
use super::CkgError;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const FORMAT_NAME: &str = "bugsmith-ckg";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        format: String,
        version: u32,
        snapshot_id: String,
        entities: usize,
        relations: usize,
    },
    Entity(CodeEntity),
    Relation(CodeRelation),
}

pub fn write_graph<W: Write>(graph: &KnowledgeGraph, mut out: W) -> Result<(), CkgError> {
    let header = Record::Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        snapshot_id: graph.snapshot_id().to_string(),
        entities: graph.entities().len(),
        relations: graph.relations().len(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for e in graph.entities() {
        writeln!(out, "{}", serde_json::to_string(&Record::Entity(e.clone()))?)?;
    }
    for r in graph.relations() {
        writeln!(out, "{}", serde_json::to_string(&Record::Relation(r.clone()))?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_graph<R: BufRead>(input: R) -> Result<KnowledgeGraph, CkgError> {
    let mut lines = input.lines().enumerate();
    let bad = |line: usize, message: String| CkgError::GraphFormat { line, message };
    let (expected_entities, expected_relations, snapshot_id) = match lines.next() {
        Some((_, line)) => match serde_json::from_str::<Record>(&line?) {
            Ok(Record::Header {
                format,
                version,
                snapshot_id,
                entities,
                relations,
            }) => {
                if format != FORMAT_NAME {
                    return Err(bad(1, format!("unknown format `{format}`")));
                }
                if version != FORMAT_VERSION {
                    return Err(bad(1, format!("unsupported version {version}")));
                }
                (entities, relations, snapshot_id)
            }
            Ok(_) => return Err(bad(1, "missing header record".into())),
            Err(e) => return Err(bad(1, e.to_string())),
        },
        None => return Err(bad(1, "empty graph file".into())),
    };
    let mut entities = Vec::with_capacity(expected_entities);
    let mut relations = Vec::with_capacity(expected_relations);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(&line).map_err(|e| bad(i + 1, e.to_string()))? {
            Record::Entity(e) => entities.push(e),
            Record::Relation(r) => relations.push(r),
            Record::Header { .. } => return Err(bad(i + 1, "duplicate header".into())),
        }
    }
    if entities.len() != expected_entities || relations.len() != expected_relations {
        return Err(bad(
            0,
            format!(
                "header promises {expected_entities} entities and {expected_relations} relations, found {} and {}",
                entities.len(),
                relations.len()
            ),
        ));
    }
    Ok(KnowledgeGraph::from_parts(entities, relations, snapshot_id)?)
}
