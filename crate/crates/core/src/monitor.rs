//! Map replay frames: where every agent is at a given tick.

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, Bounds, Location, LocationId, Position, TimeInterval, TimePoint, Timeline};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentPlacement {
    pub agent: AgentId,
    pub location: LocationId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    /// Tick of the state record this placement was carried from.
    pub since: TimePoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Focus {
    pub agent: AgentId,
    pub location: LocationId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MapMeta {
    pub locations: Vec<Location>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MonitorFrame {
    pub time: TimePoint,
    pub agents: Vec<AgentPlacement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<Focus>,
    pub map_meta: MapMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MonitorError {
    #[error("t={time} is outside project bounds {bounds}")]
    OutOfBounds { time: TimePoint, bounds: TimeInterval },
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("agent `{0}` has no state at or before the requested time")]
    NoState(AgentId),
}

pub fn map_meta(timeline: &Timeline) -> MapMeta {
    MapMeta {
        locations: timeline.meta.locations.clone(),
        bounds: timeline.meta.map_bounds(),
    }
}

/// Last known state of every agent at `time`, optionally centred on one.
pub fn monitor_frame(
    timeline: &Timeline,
    time: TimePoint,
    focus: Option<&AgentId>,
) -> Result<MonitorFrame, MonitorError> {
    let bounds = timeline.bounds();
    if !bounds.contains(time) {
        return Err(MonitorError::OutOfBounds { time, bounds });
    }
    let agents: Vec<AgentPlacement> = timeline
        .agent_ids()
        .filter_map(|a| timeline.state_at(a, time))
        .map(|s| AgentPlacement {
            agent: s.agent.clone(),
            location: s.location.clone(),
            position: s.position,
            since: s.time,
        })
        .collect();
    let focus = match focus {
        None => None,
        Some(a) => {
            if !timeline.has_agent(a.as_str()) {
                return Err(MonitorError::UnknownAgent(a.clone()));
            }
            let placed = agents
                .iter()
                .find(|p| &p.agent == a)
                .ok_or_else(|| MonitorError::NoState(a.clone()))?;
            Some(Focus {
                agent: a.clone(),
                location: placed.location.clone(),
                position: placed.position,
                bounds: timeline.meta.location(placed.location.as_str()).map(|l| l.bounds),
            })
        }
    };
    Ok(MonitorFrame {
        time,
        agents,
        focus,
        map_meta: map_meta(timeline),
    })
}
