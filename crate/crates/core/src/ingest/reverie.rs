//! Adapter from Reverie (generative agents) simulation storage to the
//! native log.
//!
//! Expected layout:
//!
//! ```text
//! <dir>/reverie/meta.json
//! <dir>/movement/<step>.json
//! <dir>/personas/<Name>/bootstrap_memory/scratch.json                     (optional)
//! <dir>/personas/<Name>/bootstrap_memory/associative_memory/nodes.json    (optional)
//! ```
//!
//! Mapping:
//! - each movement step becomes a tick; a persona's tile and the sector named
//!   in its action description become a `state` record whenever they change
//! - a changed action description becomes an `environment` operation
//! - chat turns become `environment` operations tagged `chat_with`
//! - `event` and `chat` memory nodes become `memory` operations
//! - `thought` nodes (plans and reflections) become `decision` operations,
//!   with their `filling` evidence as explicit causes

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::Deserialize;
use serde_json::Value;

use super::serialize_timeline;
use crate::model::{
    AgentCharacteristic, AgentId, AgentState, Bounds, Extra, Location, LocationId, Operation,
    OperationKind, OperationRef, Position, ProjectMeta, TaskId, TaskKind, TimePoint, Timeline,
};

#[derive(Debug, thiserror::Error)]
pub enum ReverieError {
    #[error("unrecognized Reverie layout in {path}: {reason}")]
    UnrecognizedLayout { path: PathBuf, reason: String },
    #[error("failed reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

#[derive(Debug, Deserialize)]
struct ReverieMeta {
    #[serde(default)]
    persona_names: Vec<String>,
    #[serde(default)]
    start_date: Option<String>,
    #[serde(default)]
    sec_per_step: Option<i64>,
    #[serde(default)]
    maze_name: Option<String>,
}

#[derive(Debug, Deserialize)]
struct MovementFile {
    persona: BTreeMap<String, PersonaStep>,
    #[serde(default)]
    meta: Option<StepMeta>,
}

#[derive(Debug, Deserialize)]
struct StepMeta {
    #[serde(default)]
    curr_time: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PersonaStep {
    movement: [i64; 2],
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    chat: Option<Vec<(String, String)>>,
}

#[derive(Debug, Deserialize)]
struct MemoryNode {
    node_count: u64,
    #[serde(rename = "type")]
    node_type: String,
    created: String,
    description: String,
    #[serde(default)]
    filling: Option<Value>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReverieError> {
    let text = fs::read_to_string(path).map_err(|source| ReverieError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ReverieError::Malformed {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Lowercase slug used for agent and location ids.
fn slug(name: &str) -> String {
    let mut out = String::new();
    let mut gap = false;
    for c in name.chars() {
        if c.is_alphanumeric() {
            if gap && !out.is_empty() {
                out.push('_');
            }
            gap = false;
            out.extend(c.to_lowercase());
        } else {
            gap = true;
        }
    }
    if out.is_empty() {
        "unknown".into()
    } else {
        out
    }
}

/// `"sleeping @ the Ville:Isabella's apartment:main room:bed"` splits
/// into the action and the sector-level location name.
fn split_description(desc: &str) -> (String, Option<String>) {
    match desc.split_once('@') {
        Some((action, place)) => {
            let sector = place.split(':').nth(1).map(|s| s.trim().to_owned());
            (action.trim().to_owned(), sector.filter(|s| !s.is_empty()))
        }
        None => (desc.trim().to_owned(), None),
    }
}

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    ["%B %d, %Y, %H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

fn parse_date(s: &str) -> Option<NaiveDateTime> {
    NaiveDate::parse_from_str(s.trim(), "%B %d, %Y")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

struct PendingOp {
    order: (u8, u64),
    op: Operation,
    node_fill: Vec<u64>,
}

/// Converts a Reverie simulation directory into a native JSONL log.
pub fn adapt_reverie(dir: &Path) -> Result<String, ReverieError> {
    let meta_path = dir.join("reverie").join("meta.json");
    let movement_dir = dir.join("movement");
    if !meta_path.is_file() || !movement_dir.is_dir() {
        return Err(ReverieError::UnrecognizedLayout {
            path: dir.to_owned(),
            reason: "expected reverie/meta.json and a movement/ directory".into(),
        });
    }
    let meta: ReverieMeta = read_json(&meta_path)?;

    let mut steps: Vec<(u64, PathBuf)> = Vec::new();
    let entries = fs::read_dir(&movement_dir).map_err(|source| ReverieError::Io {
        path: movement_dir.clone(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| ReverieError::Io {
            path: movement_dir.clone(),
            source,
        })?;
        let path = entry.path();
        let step = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok());
        if let (Some(step), Some("json")) = (step, path.extension().and_then(|e| e.to_str())) {
            steps.push((step, path));
        }
    }
    steps.sort();
    if steps.is_empty() {
        return Err(ReverieError::UnrecognizedLayout {
            path: dir.to_owned(),
            reason: "movement/ holds no <step>.json files".into(),
        });
    }
    let first_step = steps[0].0;

    let mut names: Vec<String> = meta.persona_names.clone();
    let mut movements = Vec::new();
    for (step, path) in &steps {
        let file: MovementFile = read_json(path)?;
        for name in file.persona.keys() {
            if !names.contains(name) {
                names.push(name.clone());
            }
        }
        movements.push((step - first_step, file));
    }
    let ids: HashMap<String, String> = names.iter().map(|n| (n.clone(), slug(n))).collect();

    let base_time = movements[0]
        .1
        .meta
        .as_ref()
        .and_then(|m| m.curr_time.as_deref())
        .and_then(parse_time)
        .or_else(|| meta.start_date.as_deref().and_then(parse_date));
    let sec_per_step = meta.sec_per_step.unwrap_or(10).max(1);

    // States and per-step operations from the movement files.
    let mut states: BTreeMap<(TimePoint, AgentId), AgentState> = BTreeMap::new();
    let mut location_bounds: BTreeMap<String, (String, Bounds)> = BTreeMap::new();
    let mut pending: BTreeMap<(TimePoint, AgentId), Vec<PendingOp>> = BTreeMap::new();
    let mut last_loc: HashMap<String, (String, Position)> = HashMap::new();
    let mut last_action: HashMap<String, String> = HashMap::new();
    let mut last_chat: HashMap<String, Vec<(String, String)>> = HashMap::new();

    for (t, file) in &movements {
        let t = TimePoint(*t);
        for (name, step) in &file.persona {
            let agent = ids[name].clone();
            let pos = Position::from(step.movement);
            let (action, sector) = step
                .description
                .as_deref()
                .map(split_description)
                .unwrap_or_default();
            let loc_name = sector
                .or_else(|| last_loc.get(&agent).map(|(l, _)| location_name(&location_bounds, l)))
                .unwrap_or_else(|| "unknown".into());
            let loc_id = slug(&loc_name);
            let entry = location_bounds
                .entry(loc_id.clone())
                .or_insert_with(|| (loc_name.clone(), Bounds::from([pos.x, pos.y, pos.x, pos.y])));
            entry.1 = entry.1.union(&Bounds::from([pos.x, pos.y, pos.x, pos.y]));

            let changed = last_loc.get(&agent) != Some(&(loc_id.clone(), pos));
            if changed {
                states.insert(
                    (t, AgentId(agent.clone())),
                    AgentState {
                        time: t,
                        agent: AgentId(agent.clone()),
                        location: LocationId(loc_id.clone()),
                        position: Some(pos),
                        attrs: BTreeMap::new(),
                        extra: Extra::new(),
                    },
                );
                last_loc.insert(agent.clone(), (loc_id, pos));
            }

            if !action.is_empty() && last_action.get(&agent) != Some(&action) {
                last_action.insert(agent.clone(), action.clone());
                pending.entry((t, AgentId(agent.clone()))).or_default().push(PendingOp {
                    order: (1, 0),
                    op: new_op(t, &agent, "act", TaskKind::Act, OperationKind::Environment, action),
                    node_fill: Vec::new(),
                });
            }

            if let Some(chat) = step.chat.as_ref().filter(|c| !c.is_empty()) {
                let previous = last_chat.get(&agent).cloned().unwrap_or_default();
                // Reverie repeats the whole conversation each step; emit only new turns.
                let fresh = if chat.starts_with(&previous) {
                    &chat[previous.len()..]
                } else {
                    &chat[..]
                };
                let partners: Vec<Value> = chat
                    .iter()
                    .map(|(speaker, _)| speaker)
                    .filter(|s| *s != name)
                    .filter_map(|s| ids.get(s))
                    .fold(Vec::new(), |mut acc, id| {
                        if !acc.contains(id) {
                            acc.push(id.clone());
                        }
                        acc
                    })
                    .into_iter()
                    .map(Value::String)
                    .collect();
                for (k, (speaker, line)) in fresh.iter().enumerate() {
                    let mut op = new_op(
                        t,
                        &agent,
                        "chat",
                        TaskKind::Act,
                        OperationKind::Environment,
                        format!("{speaker}: {line}"),
                    );
                    op.extra
                        .insert("chat_with".into(), Value::Array(partners.clone()));
                    pending.entry((t, AgentId(agent.clone()))).or_default().push(PendingOp {
                        order: (2, k as u64),
                        op,
                        node_fill: Vec::new(),
                    });
                }
                last_chat.insert(agent.clone(), chat.clone());
            } else {
                last_chat.remove(&agent);
            }
        }
    }

    // Memory nodes.
    let mut characteristics = Vec::new();
    for name in &names {
        let agent = ids[name].clone();
        let persona_dir = dir.join("personas").join(name).join("bootstrap_memory");
        characteristics.push(AgentCharacteristic {
            agent: AgentId(agent.clone()),
            name: name.clone(),
            description: read_scratch(&persona_dir.join("scratch.json"), name)?,
        });
        let nodes_path = persona_dir.join("associative_memory").join("nodes.json");
        if !nodes_path.is_file() {
            continue;
        }
        let nodes: BTreeMap<String, MemoryNode> = read_json(&nodes_path)?;
        let mut nodes: Vec<MemoryNode> = nodes.into_values().collect();
        nodes.sort_by_key(|n| n.node_count);
        for node in nodes {
            let created = parse_time(&node.created).ok_or_else(|| ReverieError::Malformed {
                path: nodes_path.clone(),
                message: format!("bad created time `{}`", node.created),
            })?;
            let t = match base_time {
                Some(base) => {
                    let secs = (created - base).num_seconds().max(0);
                    TimePoint((secs / sec_per_step) as u64)
                }
                None => TimePoint(0),
            };
            let (task, task_kind, kind) = match node.node_type.as_str() {
                "thought" => {
                    let task = if node.description.to_lowercase().contains("plan") {
                        "plan"
                    } else {
                        "reflect"
                    };
                    (task, TaskKind::Think, OperationKind::Decision)
                }
                "chat" => ("remember_chat", TaskKind::Perceive, OperationKind::Memory),
                _ => ("perceive", TaskKind::Perceive, OperationKind::Memory),
            };
            let mut op = new_op(t, &agent, task, task_kind, kind, node.description.clone());
            if kind == OperationKind::Decision {
                op.response = Some(node.description.clone());
            }
            op.extra
                .insert("reverie_node".into(), Value::from(node.node_count));
            let fill = filling_ids(node.filling.as_ref());
            pending.entry((t, AgentId(agent.clone()))).or_default().push(PendingOp {
                order: (0, node.node_count),
                op,
                node_fill: fill,
            });
        }
    }

    // Assign op indices, then resolve node evidence into explicit causes.
    let mut node_refs: HashMap<(String, u64), OperationRef> = HashMap::new();
    let mut cells: BTreeMap<(TimePoint, AgentId), Vec<(Operation, Vec<u64>)>> = BTreeMap::new();
    for (key, mut ops) in pending {
        ops.sort_by_key(|p| p.order);
        let cell = cells.entry(key).or_default();
        for (i, mut p) in ops.into_iter().enumerate() {
            p.op.op_index = i as u32;
            if let Some(n) = p.op.extra.get("reverie_node").and_then(Value::as_u64) {
                node_refs.insert((p.op.agent.0.clone(), n), p.op.op_ref());
            }
            cell.push((p.op, p.node_fill));
        }
    }
    let mut operations: BTreeMap<(TimePoint, AgentId), Vec<Operation>> = BTreeMap::new();
    for (key, cell) in cells {
        let ops = cell
            .into_iter()
            .map(|(mut op, fill)| {
                let me = op.op_ref();
                op.explicit_causes = fill
                    .iter()
                    .filter_map(|n| node_refs.get(&(op.agent.0.clone(), *n)))
                    .filter(|r| r.strictly_precedes(&me))
                    .cloned()
                    .collect();
                op
            })
            .collect();
        operations.insert(key, ops);
    }

    // Every persona needs a state at t = 0; back-fill from its first record.
    for name in &names {
        let agent = AgentId(ids[name].clone());
        if states.contains_key(&(TimePoint(0), agent.clone())) {
            continue;
        }
        let first = states
            .iter()
            .find(|((_, a), _)| *a == agent)
            .map(|(_, s)| s.clone());
        let Some(mut first) = first else {
            return Err(ReverieError::UnrecognizedLayout {
                path: dir.to_owned(),
                reason: format!("persona `{name}` never appears in movement/"),
            });
        };
        first.time = TimePoint(0);
        states.insert((TimePoint(0), agent), first);
    }

    let locations = location_bounds
        .into_iter()
        .map(|(id, (name, bounds))| Location {
            id: LocationId(id),
            name,
            bounds,
        })
        .collect();
    let mut extra = Extra::new();
    extra.insert("source".into(), Value::String("reverie".into()));
    if let Some(maze) = &meta.maze_name {
        extra.insert("maze".into(), Value::String(maze.clone()));
    }
    let project_meta = ProjectMeta {
        version: super::LOG_VERSION,
        agents: characteristics,
        locations,
        time_unit: Some(format!("{sec_per_step}s step")),
        extra,
    };
    let timeline = Timeline::from_parts(project_meta, BTreeMap::new(), states, operations);
    Ok(serialize_timeline(&timeline))
}

fn location_name(bounds: &BTreeMap<String, (String, Bounds)>, id: &str) -> String {
    bounds
        .get(id)
        .map(|(n, _)| n.clone())
        .unwrap_or_else(|| id.to_owned())
}

fn new_op(
    t: TimePoint,
    agent: &str,
    task: &str,
    task_kind: TaskKind,
    kind: OperationKind,
    text: String,
) -> Operation {
    Operation {
        time: t,
        agent: AgentId(agent.to_owned()),
        task: TaskId(task.to_owned()),
        task_kind,
        op_index: 0,
        kind,
        text,
        prompt: None,
        response: None,
        explicit_causes: Vec::new(),
        extra: Extra::new(),
    }
}

/// Node ids listed as evidence, given as `"node_12"` strings or integers.
fn filling_ids(filling: Option<&Value>) -> Vec<u64> {
    let Some(Value::Array(items)) = filling else {
        return Vec::new();
    };
    items
        .iter()
        .filter_map(|v| match v {
            Value::Number(n) => n.as_u64(),
            Value::String(s) => s.trim_start_matches("node_").parse().ok(),
            _ => None,
        })
        .collect()
}

fn read_scratch(path: &Path, name: &str) -> Result<String, ReverieError> {
    if !path.is_file() {
        return Ok(format!("Reverie persona {name}"));
    }
    let scratch: serde_json::Map<String, Value> = read_json(path)?;
    let parts: Vec<String> = ["innate", "learned", "currently", "lifestyle"]
        .iter()
        .filter_map(|k| {
            scratch
                .get(*k)
                .and_then(Value::as_str)
                .filter(|s| !s.trim().is_empty())
                .map(|s| format!("{k}: {s}"))
        })
        .collect();
    if parts.is_empty() {
        Ok(format!("Reverie persona {name}"))
    } else {
        Ok(parts.join("; "))
    }
}
