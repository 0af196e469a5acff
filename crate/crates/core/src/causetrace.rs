//! Cause edges between operations, and their lift to behavior segments.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::model::{AgentId, Operation, OperationRef, TimeInterval, Timeline};
use crate::segment::SegmentationResult;
use crate::summarize::{EmbedError, Embedder};

/// Default similarity threshold for implicit edges.
pub const DEFAULT_DELTA: f64 = 0.85;

/// Default cap on implicit edges per query.
pub const DEFAULT_MAX_EDGES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CauseKind {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CauseEdge {
    pub src: OperationRef,
    pub dst: OperationRef,
    pub kind: CauseKind,
    /// Cosine similarity of the two operation texts; 1 for explicit edges.
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Scope {
    #[default]
    SameAgent,
    AllAgents,
}

impl std::str::FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sameAgent" | "same-agent" | "same_agent" => Ok(Scope::SameAgent),
            "allAgents" | "all-agents" | "all_agents" => Ok(Scope::AllAgents),
            _ => Err(format!("unknown scope `{s}` (expected sameAgent or allAgents)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitOptions {
    pub delta: f64,
    pub scope: Scope,
    /// `None` disables the cap.
    pub max_edges: Option<usize>,
}

impl Default for ImplicitOptions {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            scope: Scope::SameAgent,
            max_edges: Some(DEFAULT_MAX_EDGES),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CauseError {
    #[error("unknown operation {0}")]
    UnknownOperation(OperationRef),
    #[error("similarity threshold must lie in (0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("edge endpoint {0} is not covered by any segmentation")]
    EndpointOutsideRange(OperationRef),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CauseSet {
    pub explicit: Vec<CauseEdge>,
    pub implicit: Vec<CauseEdge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn lookup<'a>(timeline: &'a Timeline, r: &OperationRef) -> Result<&'a Operation, CauseError> {
    timeline
        .operation(r)
        .ok_or_else(|| CauseError::UnknownOperation(r.clone()))
}

/// Causes recorded in the log for `r`, in log order.
pub fn explicit_causes(timeline: &Timeline, r: &OperationRef) -> Result<Vec<CauseEdge>, CauseError> {
    let op = lookup(timeline, r)?;
    Ok(op
        .explicit_causes
        .iter()
        .map(|src| CauseEdge {
            src: src.clone(),
            dst: r.clone(),
            kind: CauseKind::Explicit,
            similarity: 1.0,
        })
        .collect())
}

/// Whether `src` may cause `dst` under `scope`.
pub fn in_scope(src: &OperationRef, dst: &OperationRef, scope: Scope) -> bool {
    if src.agent == dst.agent {
        src.strictly_precedes(dst)
    } else {
        scope == Scope::AllAgents && src.t < dst.t
    }
}

/// Earlier operations whose text embedding is within `delta` of `r`'s.
pub fn implicit_causes(
    timeline: &Timeline,
    embedder: &Embedder,
    r: &OperationRef,
    opts: &ImplicitOptions,
) -> Result<(Vec<CauseEdge>, Vec<String>), CauseError> {
    if !(opts.delta > 0.0 && opts.delta <= 1.0) {
        return Err(CauseError::InvalidDelta(opts.delta));
    }
    let target = lookup(timeline, r)?;
    let target_vec = embedder.embed_text(&target.text)?;
    if target_vec.is_degenerate() {
        return Ok((Vec::new(), vec![format!("operation {r} has an empty embedding; no implicit causes")]));
    }
    let explicit: HashSet<&OperationRef> = target.explicit_causes.iter().collect();
    let candidates: Vec<&Operation> = timeline
        .all_operations()
        .take_while(|op| op.time <= r.t)
        .filter(|op| {
            let src = op.op_ref();
            in_scope(&src, r, opts.scope) && !explicit.contains(&src)
        })
        .collect();
    let texts: Vec<&str> = candidates.iter().map(|op| op.text.as_str()).collect();
    let vectors = embedder
        .embed_all(&texts)
        .into_iter()
        .collect::<Result<Vec<Arc<EmbeddingVector>>, _>>()?;
    let mut edges: Vec<CauseEdge> = candidates
        .iter()
        .zip(&vectors)
        .filter_map(|(op, v)| {
            let sim = text_similarity(&op.text, v, &target.text, &target_vec)?;
            (sim >= opts.delta).then(|| CauseEdge {
                src: op.op_ref(),
                dst: r.clone(),
                kind: CauseKind::Implicit,
                similarity: sim,
            })
        })
        .collect();
    edges.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.src.cmp(&b.src)));
    if let Some(cap) = opts.max_edges {
        edges.truncate(cap);
    }
    Ok((edges, Vec::new()))
}

/// Cosine similarity clamped to [-1, 1]; identical texts score exactly 1.
fn text_similarity(a: &str, va: &EmbeddingVector, b: &str, vb: &EmbeddingVector) -> Option<f64> {
    if va.is_degenerate() || vb.is_degenerate() {
        return None;
    }
    if a == b {
        return Some(1.0);
    }
    Some(va.dot(vb).clamp(-1.0, 1.0))
}

/// Explicit and implicit causes of one operation.
pub fn trace_causes(
    timeline: &Timeline,
    embedder: &Embedder,
    r: &OperationRef,
    opts: &ImplicitOptions,
) -> Result<CauseSet, CauseError> {
    let explicit = explicit_causes(timeline, r)?;
    let (implicit, warnings) = implicit_causes(timeline, embedder, r, opts)?;
    Ok(CauseSet {
        explicit,
        implicit,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentRef {
    pub agent: AgentId,
    pub index: usize,
    pub range: TimeInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BehaviorEdge {
    pub src_segment: SegmentRef,
    pub dst_segment: SegmentRef,
    pub supporting_edges: Vec<CauseEdge>,
    pub weight: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LiftedEdges {
    pub edges: Vec<BehaviorEdge>,
    pub dropped_self_loops: usize,
}

fn locate(segmentations: &[&SegmentationResult], r: &OperationRef) -> Result<SegmentRef, CauseError> {
    segmentations
        .iter()
        .filter(|s| s.agent == r.agent)
        .find_map(|s| {
            s.segment_index(r.t).map(|index| SegmentRef {
                agent: s.agent.clone(),
                index,
                range: s.segments[index].range,
            })
        })
        .ok_or_else(|| CauseError::EndpointOutsideRange(r.clone()))
}

/// Groups operation edges by the segments holding their endpoints.
/// Segmentations are looked up by agent; edges within one segment are
/// dropped (and counted) unless `include_self_loops` is set.
pub fn lift_to_behaviors(
    edges: &[CauseEdge],
    segmentations: &[&SegmentationResult],
    include_self_loops: bool,
) -> Result<LiftedEdges, CauseError> {
    let mut groups: BTreeMap<(SegmentRef, SegmentRef), Vec<CauseEdge>> = BTreeMap::new();
    let mut dropped = 0;
    for e in edges {
        let src = locate(segmentations, &e.src)?;
        let dst = locate(segmentations, &e.dst)?;
        if src == dst && !include_self_loops {
            dropped += 1;
            continue;
        }
        groups.entry((src, dst)).or_default().push(e.clone());
    }
    Ok(LiftedEdges {
        edges: groups
            .into_iter()
            .map(|((src_segment, dst_segment), supporting_edges)| BehaviorEdge {
                src_segment,
                dst_segment,
                weight: supporting_edges.len(),
                supporting_edges,
            })
            .collect(),
        dropped_self_loops: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use crate::segment::ResolvedParams;

    fn seg(agent: &str, bounds: &[u64]) -> SegmentationResult {
        SegmentationResult {
            agent: agent.into(),
            range: TimeInterval::new(bounds[0], *bounds.last().unwrap()),
            params: ResolvedParams {
                target_segments: bounds.len() - 1,
                window_width: 4,
                min_separation: 4,
            },
            sequence_len: 0,
            change_points: bounds[1..bounds.len() - 1].iter().map(|&t| TimePoint(t)).collect(),
            segments: bounds
                .windows(2)
                .map(|b| Behavior {
                    agent: agent.into(),
                    range: TimeInterval::new(b[0], b[1]),
                    operations: vec![],
                    description: None,
                    emoji: None,
                    embedding: None,
                })
                .collect(),
            discrepancy_curve: vec![],
            warnings: vec![],
        }
    }

    fn edge(a: u64, b: u64) -> CauseEdge {
        CauseEdge {
            src: OperationRef::new(a, "x", 0),
            dst: OperationRef::new(b, "x", 0),
            kind: CauseKind::Implicit,
            similarity: 0.9,
        }
    }

    #[test]
    fn lifting_groups_and_drops_self_loops() {
        let s = seg("x", &[0, 10, 20, 30]);
        let one = lift_to_behaviors(&[edge(1, 15)], &[&s], false).unwrap();
        assert_eq!(one.edges.len(), 1);
        assert_eq!(one.edges[0].weight, 1);
        assert_eq!((one.edges[0].src_segment.index, one.edges[0].dst_segment.index), (0, 1));

        let three = lift_to_behaviors(&[edge(1, 15), edge(2, 16), edge(9, 10)], &[&s], false).unwrap();
        assert_eq!(three.edges.len(), 1);
        assert_eq!(three.edges[0].weight, 3);

        let inner = lift_to_behaviors(&[edge(21, 25)], &[&s], false).unwrap();
        assert!(inner.edges.is_empty());
        assert_eq!(inner.dropped_self_loops, 1);
        let kept = lift_to_behaviors(&[edge(21, 25)], &[&s], true).unwrap();
        assert_eq!(kept.edges[0].weight, 1);

        assert!(matches!(
            lift_to_behaviors(&[edge(1, 31)], &[&s], false),
            Err(CauseError::EndpointOutsideRange(_))
        ));
    }

    #[test]
    fn scope_rules() {
        let a0 = OperationRef::new(5, "a", 0);
        let a1 = OperationRef::new(5, "a", 1);
        let b0 = OperationRef::new(5, "b", 0);
        let b_late = OperationRef::new(6, "b", 0);
        assert!(in_scope(&a0, &a1, Scope::SameAgent));
        assert!(!in_scope(&a1, &a0, Scope::AllAgents));
        assert!(!in_scope(&a0, &b0, Scope::AllAgents));
        assert!(!in_scope(&a0, &b_late, Scope::SameAgent));
        assert!(in_scope(&a0, &b_late, Scope::AllAgents));
    }

    #[test]
    fn scope_parses() {
        assert_eq!("allAgents".parse::<Scope>().unwrap(), Scope::AllAgents);
        assert!("everyone".parse::<Scope>().is_err());
    }
}
