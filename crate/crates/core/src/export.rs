//! The whole behavior structure of a project as one JSON document.

use serde::{Deserialize, Serialize};

use crate::causetrace::{explicit_causes, implicit_causes, lift_to_behaviors, CauseEdge, ImplicitOptions, LiftedEdges};
use crate::layout::OutlineLayout;
use crate::model::{AgentState, EnvironmentState, Operation, ProjectMeta, TimeInterval, Timeline};
use crate::project::{OutlineRequest, Project, ProjectError, ProjectInfo};
use crate::segment::{SegmentError, SegmentationParams, SegmentationResult};

pub const EXPORT_FORMAT: &str = "agentlens-export/1";

/// Segments per agent in an export.
pub const EXPORT_SEGMENTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExportDocument {
    pub format: String,
    pub project: ProjectInfo,
    pub meta: ProjectMeta,
    pub bounds: TimeInterval,
    pub env_states: Vec<EnvironmentState>,
    pub agent_states: Vec<AgentState>,
    pub operations: Vec<Operation>,
    /// One segmentation per agent over the full bounds.
    pub segmentations: Vec<SegmentationResult>,
    /// Explicit and implicit (same-agent, default threshold) edges of every
    /// operation, ordered by destination.
    pub cause_edges: Vec<CauseEdge>,
    pub behavior_edges: LiftedEdges,
    pub outline: OutlineLayout,
}

impl ExportDocument {
    /// Pretty JSON with a trailing newline. Equal documents give equal bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("export serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Rebuilds the indexed timeline the document was exported from.
    pub fn timeline(&self) -> Timeline {
        let env = self.env_states.iter().map(|e| (e.time, e.clone())).collect();
        let states = self
            .agent_states
            .iter()
            .map(|s| ((s.time, s.agent.clone()), s.clone()))
            .collect();
        let mut ops: std::collections::BTreeMap<_, Vec<Operation>> = Default::default();
        for op in &self.operations {
            ops.entry((op.time, op.agent.clone())).or_default().push(op.clone());
        }
        Timeline::from_parts(self.meta.clone(), env, states, ops)
    }
}

/// Segments every agent with `n` segments, traces every operation and lays
/// out the full range. Uses (and fills) the project caches.
pub fn export_project(project: &Project, n: usize) -> Result<ExportDocument, ProjectError> {
    let tl = project.timeline();
    let bounds = tl.bounds();
    let params = SegmentationParams::with_target(n);
    let mut segmentations = Vec::new();
    for agent in tl.agent_ids() {
        match project.segmentation(agent.as_str(), bounds, &params) {
            Ok(s) => segmentations.push(s),
            Err(ProjectError::Segment(SegmentError::NoOperations { .. })) => {}
            Err(e) => return Err(e),
        }
    }
    let opts = ImplicitOptions::default();
    let mut cause_edges = Vec::new();
    for op in tl.all_operations() {
        let r = op.op_ref();
        cause_edges.extend(explicit_causes(tl, &r)?);
        cause_edges.extend(implicit_causes(tl, project.embedder(), &r, &opts)?.0);
    }
    let refs: Vec<&SegmentationResult> = segmentations.iter().collect();
    let behavior_edges = lift_to_behaviors(&cause_edges, &refs, false)?;
    let outline = project.outline(&OutlineRequest {
        range: bounds,
        agents: Vec::new(),
        target_segments: n,
        query: None,
    })?;
    Ok(ExportDocument {
        format: EXPORT_FORMAT.into(),
        project: project.info().clone(),
        meta: tl.meta.clone(),
        bounds,
        env_states: tl.env_states.values().cloned().collect(),
        agent_states: tl.agent_states.values().cloned().collect(),
        operations: tl.all_operations().cloned().collect(),
        segmentations,
        cause_edges,
        behavior_edges,
        outline,
    })
}
