//! Three-strategy entity retrieval: mention recognition, similarity and
//! keyword lookup, merged and re-ranked.

use super::model::*;
use super::CkgError;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{scorer} failed: {message}")]
pub struct ScorerError {
    pub scorer: String,
    pub message: String,
}

/// An entity mention recognized in query text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub name: String,
    pub kind: Option<EntityKind>,
}

pub trait MentionRecognizer: Send + Sync {
    fn recognize(&self, query: &str) -> Result<Vec<Mention>, ScorerError>;
}

pub trait SimilarityScorer: Send + Sync {
    /// Scores in `[0, 1]`; zero-scored entities may be omitted.
    fn score_all(
        &self,
        query: &str,
        graph: &KnowledgeGraph,
    ) -> Result<Vec<(EntityId, f64)>, ScorerError>;
}

/// Candidate carried into re-ranking with its per-strategy scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: EntityId,
    pub scores: BTreeMap<Provenance, f64>,
}

pub trait Reranker: Send + Sync {
    fn rerank(
        &self,
        query: &str,
        graph: &KnowledgeGraph,
        candidates: Vec<Candidate>,
    ) -> Result<Vec<RankedEntity>, ScorerError>;
}

/// Splits identifiers on case changes, digits boundaries are kept with the
/// preceding word, and `_`/non-alphanumerics separate tokens. Lowercases.
///
/// `NewStructB` -> `new struct b`, `XFunction` -> `x function`,
/// `HTTPServer` -> `http server`, `parse_edit_blocks` -> `parse edit blocks`.
pub fn split_identifier(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = word.chars().collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            let boundary = match prev {
                None => false,
                Some(p) => {
                    c.is_uppercase()
                        && (p.is_lowercase()
                            || p.is_ascii_digit()
                            || (p.is_uppercase() && next.is_some_and(|n| n.is_lowercase())))
                }
            };
            if boundary && !cur.is_empty() {
                out.push(std::mem::take(&mut cur).to_lowercase());
            }
            cur.push(c);
        }
        if !cur.is_empty() {
            out.push(cur.to_lowercase());
        }
    }
    out
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "call", "called", "calls", "can",
    "code", "do", "does", "for", "from", "get", "has", "have", "how", "i", "if", "in", "into",
    "is", "it", "its", "me", "of", "on", "or", "return", "returns", "should", "so", "that",
    "the", "then", "there", "this", "to", "use", "used", "was", "we", "what", "when", "where",
    "which", "while", "why", "will", "with", "wrong",
];

fn is_stopword(tok: &str) -> bool {
    STOPWORDS.binary_search(&tok).is_ok()
}

fn query_tokens(query: &str) -> BTreeSet<String> {
    split_identifier(query)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .collect()
}

fn name_tokens(name: &str) -> BTreeSet<String> {
    split_identifier(name).into_iter().collect()
}

/// Deterministic recognizer: every identifier-shaped token of the query
/// (dotted names split into parts) is a candidate mention.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentifierTokenRecognizer;

impl MentionRecognizer for IdentifierTokenRecognizer {
    fn recognize(&self, query: &str) -> Result<Vec<Mention>, ScorerError> {
        let re = regex::Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").expect("static regex");
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for m in re.find_iter(query) {
            let tok = m.as_str();
            if tok.len() < 2 || is_stopword(&tok.to_lowercase()) {
                continue;
            }
            if seen.insert(tok.to_string()) {
                out.push(Mention {
                    name: tok.to_string(),
                    kind: None,
                });
            }
        }
        Ok(out)
    }
}

/// Jaccard overlap between the query's split tokens and an entity name's.
#[derive(Debug, Default, Clone, Copy)]
pub struct TokenJaccard;

impl SimilarityScorer for TokenJaccard {
    fn score_all(
        &self,
        query: &str,
        graph: &KnowledgeGraph,
    ) -> Result<Vec<(EntityId, f64)>, ScorerError> {
        let q = query_tokens(query);
        if q.is_empty() {
            return Ok(Vec::new());
        }
        Ok(graph
            .entities()
            .iter()
            .filter_map(|e| {
                let n = name_tokens(&e.name);
                let inter = q.intersection(&n).count();
                if inter == 0 {
                    return None;
                }
                let union = q.union(&n).count();
                Some((e.id, inter as f64 / union as f64))
            })
            .collect())
    }
}

/// Fallback ranking: best strategy score, then kind priority
/// (function > class > variable > file), then name, then id.
#[derive(Debug, Default, Clone, Copy)]
pub struct MaxScoreRanker;

impl Reranker for MaxScoreRanker {
    fn rerank(
        &self,
        _query: &str,
        graph: &KnowledgeGraph,
        candidates: Vec<Candidate>,
    ) -> Result<Vec<RankedEntity>, ScorerError> {
        let mut items: Vec<RankedEntity> = candidates
            .into_iter()
            .map(|c| RankedEntity {
                id: c.id,
                score: c.scores.values().copied().fold(0.0, f64::max),
                provenance: c.scores.keys().copied().collect(),
            })
            .collect();
        items.sort_by(|a, b| {
            let ea = graph.entity(a.id).expect("candidate in graph");
            let eb = graph.entity(b.id).expect("candidate in graph");
            b.score
                .total_cmp(&a.score)
                .then(ea.kind.rank_priority().cmp(&eb.kind.rank_priority()))
                .then(ea.name.cmp(&eb.name))
                .then(a.id.cmp(&b.id))
        });
        Ok(items)
    }
}

/// Pluggable providers for the three candidate lists and the final ranking.
pub struct QueryScorers<'a> {
    pub recognizer: &'a dyn MentionRecognizer,
    pub similarity: &'a dyn SimilarityScorer,
    pub reranker: &'a dyn Reranker,
}

impl Default for QueryScorers<'static> {
    fn default() -> Self {
        QueryScorers {
            recognizer: &IdentifierTokenRecognizer,
            similarity: &TokenJaccard,
            reranker: &MaxScoreRanker,
        }
    }
}

/// Candidate lists produced by each strategy, before merging.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateLists {
    pub recognized: Option<Vec<(EntityId, f64)>>,
    pub similar: Option<Vec<(EntityId, f64)>>,
    pub keyword: Option<Vec<(EntityId, f64)>>,
    pub failures: Vec<ScorerError>,
}

impl CandidateLists {
    pub fn union_ids(&self) -> BTreeSet<EntityId> {
        [&self.recognized, &self.similar, &self.keyword]
            .into_iter()
            .flatten()
            .flat_map(|l| l.iter().map(|(id, _)| *id))
            .collect()
    }
}

/// List 1: exact-name lookup of recognized mentions.
pub fn recognized_candidates(
    graph: &KnowledgeGraph,
    mentions: &[Mention],
) -> Vec<(EntityId, f64)> {
    let mut out = Vec::new();
    for m in mentions {
        for id in graph.by_name(&m.name) {
            let e = graph.entity(*id).expect("indexed id");
            if m.kind.is_none_or(|k| k == e.kind) {
                out.push((*id, 1.0));
            }
        }
    }
    out
}

/// List 3: keywords from the query matched against split name tokens;
/// score is the fraction of query keywords the name contains.
pub fn keyword_candidates(graph: &KnowledgeGraph, query: &str) -> Vec<(EntityId, f64)> {
    let keywords = query_tokens(query);
    if keywords.is_empty() {
        return Vec::new();
    }
    graph
        .entities()
        .iter()
        .filter_map(|e| {
            let n = name_tokens(&e.name);
            let hit = keywords.iter().filter(|k| n.contains(*k)).count();
            (hit > 0).then(|| (e.id, hit as f64 / keywords.len() as f64))
        })
        .collect()
}

pub fn candidate_lists(
    graph: &KnowledgeGraph,
    query: &str,
    scorers: &QueryScorers<'_>,
) -> CandidateLists {
    let mut lists = CandidateLists::default();
    match scorers.recognizer.recognize(query) {
        Ok(mentions) => lists.recognized = Some(recognized_candidates(graph, &mentions)),
        Err(e) => lists.failures.push(e),
    }
    match scorers.similarity.score_all(query, graph) {
        Ok(mut scored) => {
            scored.retain(|(_, s)| *s > 0.0);
            for (_, s) in &mut scored {
                *s = s.clamp(0.0, 1.0);
            }
            lists.similar = Some(scored);
        }
        Err(e) => lists.failures.push(e),
    }
    lists.keyword = Some(keyword_candidates(graph, query));
    lists
}

/// Runs the three strategies, merges their candidates without duplicates and
/// re-ranks. A failing scorer only removes its own list; a failing reranker
/// falls back to [`MaxScoreRanker`].
pub fn query_entities(
    graph: &KnowledgeGraph,
    query: &str,
    scorers: &QueryScorers<'_>,
) -> Result<RankedEntityList, CkgError> {
    if query.trim().is_empty() {
        return Err(CkgError::EmptyQuery);
    }
    if graph.is_empty() {
        return Err(CkgError::EmptyGraph);
    }
    let lists = candidate_lists(graph, query, scorers);
    for f in &lists.failures {
        tracing::warn!(scorer = %f.scorer, "candidate list dropped: {}", f.message);
    }
    let mut merged: BTreeMap<EntityId, BTreeMap<Provenance, f64>> = BTreeMap::new();
    let tagged = [
        (Provenance::EntityRecognition, &lists.recognized),
        (Provenance::Similarity, &lists.similar),
        (Provenance::Keyword, &lists.keyword),
    ];
    for (tag, list) in tagged {
        for (id, score) in list.iter().flatten() {
            let slot = merged.entry(*id).or_default().entry(tag).or_insert(0.0);
            *slot = slot.max(*score);
        }
    }
    let candidates: Vec<Candidate> = merged
        .into_iter()
        .map(|(id, scores)| Candidate { id, scores })
        .collect();
    let items = match scorers.reranker.rerank(query, graph, candidates.clone()) {
        Ok(items) if well_formed(&items, &candidates) => items,
        Ok(_) => {
            tracing::warn!("reranker output rejected; using fallback order");
            MaxScoreRanker.rerank(query, graph, candidates)?
        }
        Err(e) => {
            tracing::warn!("reranker failed: {e}; using fallback order");
            MaxScoreRanker.rerank(query, graph, candidates)?
        }
    };
    Ok(RankedEntityList { items })
}

fn well_formed(items: &[RankedEntity], candidates: &[Candidate]) -> bool {
    let ids: BTreeSet<EntityId> = items.iter().map(|i| i.id).collect();
    ids.len() == items.len()
        && ids == candidates.iter().map(|c| c.id).collect()
        && items.iter().all(|i| (0.0..=1.0).contains(&i.score))
        && items.windows(2).all(|w| w[0].score >= w[1].score)
}

/// Relations touching `id` in either direction, paired with the far end,
/// sorted by relation kind and then site.
pub fn neighbors<'g>(
    graph: &'g KnowledgeGraph,
    id: EntityId,
    kinds: Option<&[RelationKind]>,
) -> Result<Vec<(&'g CodeRelation, &'g CodeEntity)>, CkgError> {
    if graph.entity(id).is_none() {
        return Err(CkgError::UnknownEntity(id));
    }
    let keep = |r: &CodeRelation| kinds.is_none_or(|k| k.contains(&r.kind));
    let mut out: Vec<(&CodeRelation, &CodeEntity)> = Vec::new();
    for r in graph.outgoing(id).filter(|r| keep(r)) {
        out.push((r, graph.entity(r.dst).expect("integrity")));
    }
    for r in graph.incoming(id).filter(|r| keep(r) && r.src != r.dst) {
        out.push((r, graph.entity(r.src).expect("integrity")));
    }
    out.sort_by(|a, b| {
        (a.0.kind, &a.0.site, a.1.id, a.0.src).cmp(&(b.0.kind, &b.0.site, b.1.id, b.0.src))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_are_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn identifier_splitting() {
        assert_eq!(split_identifier("NewStructB"), ["new", "struct", "b"]);
        assert_eq!(split_identifier("XFunction"), ["x", "function"]);
        assert_eq!(split_identifier("HTTPServer"), ["http", "server"]);
        assert_eq!(split_identifier("parse_edit_blocks"), ["parse", "edit", "blocks"]);
        assert_eq!(split_identifier("struct b constructor"), ["struct", "b", "constructor"]);
        assert_eq!(split_identifier("utf8Decode"), ["utf8", "decode"]);
        assert!(split_identifier("  ").is_empty());
    }
}
