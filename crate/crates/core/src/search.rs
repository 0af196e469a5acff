//! Keyword and embedding search over agent memories.

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, Operation, OperationKind, OperationRef, TimePoint, Timeline};
use crate::summarize::{EmbedError, Embedder};

/// Default cosine threshold for semantic hits.
pub const DEFAULT_SEMANTIC_THRESHOLD: f64 = 0.80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    #[default]
    Lexical,
    Semantic,
}

impl std::str::FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(SearchMode::Lexical),
            "semantic" => Ok(SearchMode::Semantic),
            _ => Err(format!("unknown search mode `{s}` (expected lexical or semantic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub mode: SearchMode,
    pub threshold: f64,
    /// Search every operation, not only memories.
    pub all_operations: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            mode: SearchMode::Lexical,
            threshold: DEFAULT_SEMANTIC_THRESHOLD,
            all_operations: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchHit {
    pub agent: AgentId,
    pub time: TimePoint,
    pub op_index: u32,
    pub score: f64,
    pub mode: SearchMode,
}

impl SearchHit {
    pub fn op_ref(&self) -> OperationRef {
        OperationRef {
            t: self.time,
            agent: self.agent.clone(),
            op_index: self.op_index,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("no embeddings for {missing} operations; run the summarize stage (`agentlens summarize`) to embed them first")]
    EmbeddingsMissing { missing: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

fn searchable(op: &Operation, opts: &SearchOptions) -> bool {
    opts.all_operations || op.kind == OperationKind::Memory
}

fn hit(op: &Operation, score: f64, mode: SearchMode) -> SearchHit {
    SearchHit {
        agent: op.agent.clone(),
        time: op.time,
        op_index: op.op_index,
        score,
        mode,
    }
}

/// Memory operations matching `query`, ordered by `(time, agent, opIndex)`.
///
/// Semantic mode compares against embeddings already in the cache and
/// fails if any searched operation has not been embedded yet.
pub fn memory_search(
    timeline: &Timeline,
    embedder: Option<&Embedder>,
    query: &str,
    opts: &SearchOptions,
) -> Result<Vec<SearchHit>, SearchError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    let ops = timeline.all_operations().filter(|op| searchable(op, opts));
    let hits: Vec<SearchHit> = match opts.mode {
        SearchMode::Lexical => {
            let needle = query.to_lowercase();
            ops.filter(|op| op.text.to_lowercase().contains(&needle))
                .map(|op| hit(op, 1.0, SearchMode::Lexical))
                .collect()
        }
        SearchMode::Semantic => {
            let ops: Vec<&Operation> = ops.collect();
            let embedder = embedder.ok_or(SearchError::EmbeddingsMissing { missing: ops.len() })?;
            let vectors: Vec<_> = ops.iter().map(|op| embedder.cached(&op.text)).collect();
            let missing = vectors.iter().filter(|v| v.is_none()).count();
            if missing > 0 {
                return Err(SearchError::EmbeddingsMissing { missing });
            }
            let q = embedder.embed_text(query)?;
            if q.is_degenerate() {
                return Ok(Vec::new());
            }
            ops.iter()
                .zip(vectors)
                .filter_map(|(op, v)| {
                    let v = v.expect("checked");
                    if v.is_degenerate() {
                        return None;
                    }
                    let score = q.dot(&v).clamp(-1.0, 1.0);
                    (score >= opts.threshold).then(|| hit(op, score, SearchMode::Semantic))
                })
                .collect()
        }
    };
    // Operations are already stored in (time, agent, opIndex) order.
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use std::collections::BTreeMap;

    fn tl() -> Timeline {
        let mk = |t: u64, agent: &str, idx: u32, kind: OperationKind, text: &str| Operation {
            time: TimePoint(t),
            agent: agent.into(),
            task: "x".into(),
            task_kind: TaskKind::Think,
            op_index: idx,
            kind,
            text: text.into(),
            prompt: None,
            response: None,
            explicit_causes: vec![],
            extra: Extra::new(),
        };
        let mut cells: BTreeMap<(TimePoint, AgentId), Vec<Operation>> = BTreeMap::new();
        for op in [
            mk(3, "b", 0, OperationKind::Memory, "The Party is on Friday"),
            mk(3, "a", 0, OperationKind::Memory, "party planning"),
            mk(1, "a", 0, OperationKind::Environment, "party decorations"),
            mk(5, "a", 1, OperationKind::Memory, "quiet evening"),
        ] {
            cells.entry((op.time, op.agent.clone())).or_default().push(op);
        }
        Timeline::from_parts(ProjectMeta::default(), BTreeMap::new(), BTreeMap::new(), cells)
    }

    #[test]
    fn lexical_is_case_insensitive_and_memory_only() {
        let t = tl();
        let hits = memory_search(&t, None, "PARTY", &SearchOptions::default()).unwrap();
        let keys: Vec<(u64, &str)> = hits.iter().map(|h| (h.time.0, h.agent.as_str())).collect();
        assert_eq!(keys, vec![(3, "a"), (3, "b")]);
        let all = SearchOptions {
            all_operations: true,
            ..Default::default()
        };
        assert_eq!(memory_search(&t, None, "party", &all).unwrap().len(), 3);
        assert!(memory_search(&t, None, "zebra", &SearchOptions::default()).unwrap().is_empty());
        assert!(matches!(memory_search(&t, None, "  ", &SearchOptions::default()), Err(SearchError::EmptyQuery)));
    }

    #[test]
    fn semantic_requires_embeddings() {
        let t = tl();
        let opts = SearchOptions {
            mode: SearchMode::Semantic,
            ..Default::default()
        };
        let e = Embedder::offline();
        assert!(matches!(
            memory_search(&t, Some(&e), "party", &opts),
            Err(SearchError::EmbeddingsMissing { missing: 3 })
        ));
        for op in t.all_operations() {
            e.embed_text(&op.text).unwrap();
        }
        let hits = memory_search(&t, Some(&e), "party planning", &opts).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].agent.as_str(), "a");
        assert!(hits[0].score > 0.99);
    }
}
