//! Domain model: system state, agents, tasks, operations and behaviors.
//!
//! A [`Timeline`] is built once by the ingest module and never mutated
//! afterwards. Every other module reads from it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;

/// Abstract tick on the system timeline.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimePoint(pub u64);

impl TimePoint {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for TimePoint {
    fn from(v: u64) -> Self {
        Self(v)
    }
}

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Agent identifier, unique within a project.
    AgentId
);
string_id!(
    /// Location identifier, unique within a project.
    LocationId
);
string_id!(
    /// Task identifier. Scoped to the agent that performs the task.
    TaskId
);

/// Half-open interval `[start, end)` of time points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: TimePoint,
    pub end: TimePoint,
}

impl TimeInterval {
    pub fn new(start: u64, end: u64) -> Self {
        Self {
            start: TimePoint(start),
            end: TimePoint(end),
        }
    }

    pub fn len(&self) -> u64 {
        self.end.0.saturating_sub(self.start.0)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: TimePoint) -> bool {
        self.start <= t && t < self.end
    }

    pub fn contains_interval(&self, other: &TimeInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = TimePoint> {
        (self.start.0..self.end.0).map(TimePoint)
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Which stage of the agent loop a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Perceive,
    Think,
    Act,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Perceive, TaskKind::Think, TaskKind::Act];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Perceive => "perceive",
            TaskKind::Think => "think",
            TaskKind::Act => "act",
        }
    }
}

impl FromStr for TaskKind {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perceive" => Ok(TaskKind::Perceive),
            "think" => Ok(TaskKind::Think),
            "act" => Ok(TaskKind::Act),
            other => Err(UnknownToken(other.to_owned())),
        }
    }
}

/// What an operation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationKind {
    Environment,
    Memory,
    Decision,
}

impl OperationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperationKind::Environment => "environment",
            OperationKind::Memory => "memory",
            OperationKind::Decision => "decision",
        }
    }
}

impl FromStr for OperationKind {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "environment" => Ok(OperationKind::Environment),
            "memory" => Ok(OperationKind::Memory),
            "decision" => Ok(OperationKind::Decision),
            other => Err(UnknownToken(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownToken(pub String);

impl fmt::Display for UnknownToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown token `{}`", self.0)
    }
}

impl std::error::Error for UnknownToken {}

/// Canonical reference to an operation: `(time, agent, op_index)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperationRef {
    pub t: TimePoint,
    pub agent: AgentId,
    pub op_index: u32,
}

impl OperationRef {
    pub fn new(t: u64, agent: impl Into<String>, op_index: u32) -> Self {
        Self {
            t: TimePoint(t),
            agent: AgentId(agent.into()),
            op_index,
        }
    }

    /// Whether `self` may be a cause of `later`: earlier `(t, op_index)` for
    /// the same agent, strictly earlier time for a different agent.
    pub fn strictly_precedes(&self, later: &OperationRef) -> bool {
        if self.agent == later.agent {
            (self.t, self.op_index) < (later.t, later.op_index)
        } else {
            self.t < later.t
        }
    }
}

impl fmt::Display for OperationRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.t, self.agent, self.op_index)
    }
}

impl FromStr for OperationRef {
    type Err = String;

    /// Parses the `t,agent,op_index` form used on the command line.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 || parts[1].is_empty() {
            return Err(format!("expected `t,agent,op_index`, got `{s}`"));
        }
        let t = parts[0]
            .parse::<u64>()
            .map_err(|e| format!("bad time `{}`: {e}", parts[0]))?;
        let idx = parts[2]
            .parse::<u32>()
            .map_err(|e| format!("bad op index `{}`: {e}", parts[2]))?;
        Ok(OperationRef::new(t, parts[1], idx))
    }
}

/// Inclusive rectangle on the map grid: `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct Bounds {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Bounds {
    pub fn contains(&self, p: Position) -> bool {
        self.x0 <= p.x && p.x <= self.x1 && self.y0 <= p.y && p.y <= self.y1
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1
    }
}

impl From<[i64; 4]> for Bounds {
    fn from([x0, y0, x1, y1]: [i64; 4]) -> Self {
        Bounds { x0, y0, x1, y1 }
    }
}

impl From<Bounds> for [i64; 4] {
    fn from(b: Bounds) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Map-grid position `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct Position {
    pub x: i64,
    pub y: i64,
}

impl From<[i64; 2]> for Position {
    fn from([x, y]: [i64; 2]) -> Self {
        Position { x, y }
    }
}

impl From<Position> for [i64; 2] {
    fn from(p: Position) -> Self {
        [p.x, p.y]
    }
}

/// Free-form JSON object carried through from the log unchanged.
pub type Extra = serde_json::Map<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentCharacteristic {
    pub agent: AgentId,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: LocationId,
    pub name: String,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectMeta {
    pub version: u32,
    pub agents: Vec<AgentCharacteristic>,
    pub locations: Vec<Location>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_unit: Option<String>,
    #[serde(default, skip_serializing_if = "Extra::is_empty")]
    pub extra: Extra,
}

impl ProjectMeta {
    pub fn agent(&self, id: &str) -> Option<&AgentCharacteristic> {
        self.agents.iter().find(|a| a.agent.as_str() == id)
    }

    pub fn location(&self, id: &str) -> Option<&Location> {
        self.locations.iter().find(|l| l.id.as_str() == id)
    }

    /// Smallest rectangle covering every declared location.
    pub fn map_bounds(&self) -> Option<Bounds> {
        self.locations
            .iter()
            .map(|l| l.bounds)
            .reduce(|a, b| a.union(&b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentState {
    pub time: TimePoint,
    pub attrs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Extra::is_empty")]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub time: TimePoint,
    pub agent: AgentId,
    pub location: LocationId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Extra::is_empty")]
    pub extra: Extra,
}

/// Indivisible logged action of an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Operation {
    pub time: TimePoint,
    pub agent: AgentId,
    pub task: TaskId,
    pub task_kind: TaskKind,
    pub op_index: u32,
    pub kind: OperationKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit_causes: Vec<OperationRef>,
    #[serde(default, skip_serializing_if = "Extra::is_empty")]
    pub extra: Extra,
}

impl Operation {
    pub fn op_ref(&self) -> OperationRef {
        OperationRef {
            t: self.time,
            agent: self.agent.clone(),
            op_index: self.op_index,
        }
    }

    /// Agents this operation addresses in conversation, read from the
    /// `chat_with` entry of `extra` (a string or a list of strings).
    pub fn chat_partners(&self) -> Vec<AgentId> {
        match self.extra.get("chat_with") {
            Some(serde_json::Value::String(s)) => vec![AgentId::new(s.clone())],
            Some(serde_json::Value::Array(items)) => items
                .iter()
                .filter_map(|v| v.as_str().map(AgentId::from))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Borrowed view of one time point: `⟨e_{t-1}, ∪ a_{t-1}[i], ∪ s_t[i]⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTuple<'a> {
    pub time: TimePoint,
    pub environment: Option<&'a EnvironmentState>,
    pub agent_states: Vec<&'a AgentState>,
    pub operations: Vec<&'a Operation>,
}

/// The full indexed log of one project.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    pub meta: ProjectMeta,
    pub env_states: BTreeMap<TimePoint, EnvironmentState>,
    pub agent_states: BTreeMap<(TimePoint, AgentId), AgentState>,
    /// Each cell is sorted by `op_index` with no duplicates.
    pub operations: BTreeMap<(TimePoint, AgentId), Vec<Operation>>,
    /// Per agent, time-ordered state records for carry-forward lookups.
    state_index: BTreeMap<AgentId, BTreeMap<TimePoint, (TimePoint, AgentId)>>,
}

impl Timeline {
    /// Assembles a timeline from already-validated parts.
    pub fn from_parts(
        meta: ProjectMeta,
        env_states: BTreeMap<TimePoint, EnvironmentState>,
        agent_states: BTreeMap<(TimePoint, AgentId), AgentState>,
        mut operations: BTreeMap<(TimePoint, AgentId), Vec<Operation>>,
    ) -> Self {
        for cell in operations.values_mut() {
            cell.sort_by_key(|op| op.op_index);
        }
        let mut state_index: BTreeMap<AgentId, BTreeMap<TimePoint, (TimePoint, AgentId)>> =
            BTreeMap::new();
        for key in agent_states.keys() {
            state_index
                .entry(key.1.clone())
                .or_default()
                .insert(key.0, key.clone());
        }
        Self {
            meta,
            env_states,
            agent_states,
            operations,
            state_index,
        }
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = &AgentId> {
        self.meta.agents.iter().map(|a| &a.agent)
    }

    pub fn has_agent(&self, agent: &str) -> bool {
        self.meta.agent(agent).is_some()
    }

    /// Project time bounds `[0, last record + 1)`.
    pub fn bounds(&self) -> TimeInterval {
        let last = [
            self.env_states.keys().next_back().copied(),
            self.agent_states.keys().next_back().map(|k| k.0),
            self.operations.keys().map(|k| k.0).max(),
        ]
        .into_iter()
        .flatten()
        .max();
        match last {
            Some(t) => TimeInterval::new(0, t.0 + 1),
            None => TimeInterval::new(0, 0),
        }
    }

    pub fn operation(&self, r: &OperationRef) -> Option<&Operation> {
        self.operations
            .get(&(r.t, r.agent.clone()))?
            .binary_search_by_key(&r.op_index, |op| op.op_index)
            .ok()
            .map(|i| &self.operations[&(r.t, r.agent.clone())][i])
    }

    pub fn operations_at(&self, t: TimePoint, agent: &AgentId) -> &[Operation] {
        self.operations
            .get(&(t, agent.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All operations in `(time, agent, op_index)` order.
    pub fn all_operations(&self) -> impl Iterator<Item = &Operation> {
        self.operations.values().flatten()
    }

    pub fn operation_count(&self) -> usize {
        self.operations.values().map(Vec::len).sum()
    }

    /// Operations of one agent with `range.start <= time < range.end`, in
    /// `(time, op_index)` order.
    pub fn agent_operations<'a>(
        &'a self,
        agent: &'a AgentId,
        range: TimeInterval,
    ) -> impl Iterator<Item = &'a Operation> + 'a {
        self.operations
            .range((range.start, agent.clone())..(range.end, agent.clone()))
            .filter(move |((_, a), _)| a == agent)
            .flat_map(|(_, ops)| ops.iter())
    }

    /// Time points in `range` at which `agent` has at least one operation.
    pub fn agent_active_times(&self, agent: &AgentId, range: TimeInterval) -> Vec<TimePoint> {
        let mut times: Vec<TimePoint> = self
            .agent_operations(agent, range)
            .map(|op| op.time)
            .collect();
        times.dedup();
        times
    }

    /// Latest state record of `agent` at or before `t`.
    pub fn state_at(&self, agent: &AgentId, t: TimePoint) -> Option<&AgentState> {
        let key = self
            .state_index
            .get(agent)?
            .range(..=t)
            .next_back()
            .map(|(_, k)| k)?;
        self.agent_states.get(key)
    }

    /// State records of `agent` in time order.
    pub fn agent_state_history<'a>(
        &'a self,
        agent: &AgentId,
    ) -> impl Iterator<Item = &'a AgentState> + 'a {
        self.state_index
            .get(agent)
            .into_iter()
            .flat_map(|m| m.values())
            .filter_map(|k| self.agent_states.get(k))
    }

    /// Latest environment record at or before `t`.
    pub fn env_at(&self, t: TimePoint) -> Option<&EnvironmentState> {
        self.env_states.range(..=t).next_back().map(|(_, e)| e)
    }

    /// Reconstructs the tuple for time `t`. States come from `t - 1`; at
    /// `t = 0` the initial records stand in for the previous tick.
    pub fn tuple_at(&self, t: TimePoint) -> TimeTuple<'_> {
        let prev = TimePoint(t.0.saturating_sub(1));
        let agent_states = self
            .agent_ids()
            .filter_map(|a| self.state_at(a, prev))
            .collect();
        let operations = self
            .operations
            .range((t, AgentId(String::new()))..)
            .take_while(|((time, _), _)| *time == t)
            .flat_map(|(_, ops)| ops.iter())
            .collect();
        TimeTuple {
            time: t,
            environment: self.env_at(prev),
            agent_states,
            operations,
        }
    }

    /// The set of operations `agent` performed over `range`.
    pub fn behavior_of(
        &self,
        agent: &AgentId,
        range: TimeInterval,
    ) -> Result<Behavior, BehaviorError> {
        if !self.has_agent(agent.as_str()) {
            return Err(BehaviorError::UnknownAgent(agent.clone()));
        }
        if range.is_empty() {
            return Err(BehaviorError::EmptyRange(range));
        }
        let bounds = self.bounds();
        if !bounds.contains_interval(&range) {
            return Err(BehaviorError::OutOfBounds { range, bounds });
        }
        let operations = self
            .agent_operations(agent, range)
            .map(Operation::op_ref)
            .collect();
        Ok(Behavior {
            agent: agent.clone(),
            range,
            operations,
            description: None,
            emoji: None,
            embedding: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BehaviorError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("empty or inverted range {0}")]
    EmptyRange(TimeInterval),
    #[error("range {range} outside project bounds {bounds}")]
    OutOfBounds {
        range: TimeInterval,
        bounds: TimeInterval,
    },
}

/// An agent's operations over a half-open time range, optionally summarized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Behavior {
    pub agent: AgentId,
    pub range: TimeInterval,
    pub operations: Vec<OperationRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emoji: Option<String>,
    #[serde(default, skip_serializing)]
    pub embedding: Option<EmbeddingVector>,
}
