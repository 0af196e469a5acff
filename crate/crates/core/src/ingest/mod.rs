//! JSONL event-log ingestion.
//!
//! The native log is UTF-8 JSONL with one record per line. The first record
//! is the `meta` record; `state`, `env` and `op` records follow in any
//! order. Parsing is strict: every rejected line is reported and no
//! [`Timeline`] is produced unless the report has no errors.

mod reverie;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::{
    AgentCharacteristic, AgentId, AgentState, Bounds, EnvironmentState, Extra, Location,
    LocationId, Operation, OperationKind, OperationRef, Position, ProjectMeta, TaskId, TaskKind,
    TimePoint, Timeline,
};

pub use reverie::{adapt_reverie, ReverieError};

/// Version of the native log schema accepted by [`parse_log`].
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    #[serde(rename = "E_UTF8")]
    Utf8,
    #[serde(rename = "E_JSON")]
    Json,
    #[serde(rename = "E_SCHEMA")]
    Schema,
    #[serde(rename = "E_ENUM")]
    Enum,
    #[serde(rename = "E_META_MISSING")]
    MetaMissing,
    #[serde(rename = "E_META_DUP")]
    MetaDuplicate,
    #[serde(rename = "E_VERSION")]
    Version,
    #[serde(rename = "E_DUP_ID")]
    DuplicateId,
    #[serde(rename = "E_REF")]
    UnknownRef,
    #[serde(rename = "E_BOUNDS")]
    OutOfBounds,
    #[serde(rename = "E_DUP_STATE")]
    DuplicateState,
    #[serde(rename = "E_DUP_ENV")]
    DuplicateEnv,
    #[serde(rename = "E_DUP_OP")]
    DuplicateOp,
    #[serde(rename = "E_TASK")]
    TaskKindMismatch,
    #[serde(rename = "E_PROMPT")]
    PromptOnNonDecision,
    #[serde(rename = "E_CAUSE")]
    BadCause,
    #[serde(rename = "E_INIT")]
    MissingInitialState,
    #[serde(rename = "W_BLANK")]
    BlankLine,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::Utf8 => "E_UTF8",
            DiagnosticCode::Json => "E_JSON",
            DiagnosticCode::Schema => "E_SCHEMA",
            DiagnosticCode::Enum => "E_ENUM",
            DiagnosticCode::MetaMissing => "E_META_MISSING",
            DiagnosticCode::MetaDuplicate => "E_META_DUP",
            DiagnosticCode::Version => "E_VERSION",
            DiagnosticCode::DuplicateId => "E_DUP_ID",
            DiagnosticCode::UnknownRef => "E_REF",
            DiagnosticCode::OutOfBounds => "E_BOUNDS",
            DiagnosticCode::DuplicateState => "E_DUP_STATE",
            DiagnosticCode::DuplicateEnv => "E_DUP_ENV",
            DiagnosticCode::DuplicateOp => "E_DUP_OP",
            DiagnosticCode::TaskKindMismatch => "E_TASK",
            DiagnosticCode::PromptOnNonDecision => "E_PROMPT",
            DiagnosticCode::BadCause => "E_CAUSE",
            DiagnosticCode::MissingInitialState => "E_INIT",
            DiagnosticCode::BlankLine => "W_BLANK",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One reported problem. `line` is 1-based; 0 means the stream as a whole.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub code: DiagnosticCode,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {} {}", self.line, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordCounts {
    pub meta: usize,
    pub state: usize,
    pub env: usize,
    pub op: usize,
    pub ops_per_agent: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
    pub counts: RecordCounts,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_code(&self, code: DiagnosticCode) -> bool {
        self.errors.iter().any(|d| d.code == code)
    }

    fn error(&mut self, line: usize, code: DiagnosticCode, message: impl Into<String>) {
        self.errors.push(Diagnostic {
            line,
            code,
            message: message.into(),
        });
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("failed reading log: {0}")]
    Io(#[from] std::io::Error),
    #[error("log rejected with {} error(s); first: {}", .0.errors.len(), .0.errors.first().map(ToString::to_string).unwrap_or_default())]
    Invalid(ValidationReport),
}

/// Kind of a raw log record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordType {
    Meta,
    State,
    Env,
    Op,
}

impl std::str::FromStr for RecordType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "meta" => Ok(RecordType::Meta),
            "state" => Ok(RecordType::State),
            "env" => Ok(RecordType::Env),
            "op" => Ok(RecordType::Op),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MetaRecord {
    version: u32,
    agents: Vec<MetaAgent>,
    locations: Vec<MetaLocation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra: Option<Extra>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MetaAgent {
    id: String,
    name: String,
    characteristics: String,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MetaLocation {
    id: String,
    name: String,
    bounds: [i64; 4],
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct StateRecord {
    t: u64,
    agent: String,
    location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<[i64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attrs: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra: Option<Extra>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EnvRecord {
    t: u64,
    attrs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra: Option<Extra>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct OpRecord {
    t: u64,
    agent: String,
    task_id: String,
    task_kind: String,
    op_index: u32,
    op_kind: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    causes: Option<Vec<CauseRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra: Option<Extra>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct CauseRecord {
    t: u64,
    agent: String,
    op_index: u32,
}

/// Accumulates validated records while scanning the stream.
#[derive(Default)]
struct Builder {
    meta: Option<ProjectMeta>,
    agents: BTreeSet<String>,
    locations: HashMap<String, Bounds>,
    env: BTreeMap<TimePoint, EnvironmentState>,
    states: BTreeMap<(TimePoint, AgentId), AgentState>,
    ops: BTreeMap<(TimePoint, AgentId), Vec<Operation>>,
    op_lines: HashMap<OperationRef, usize>,
    task_kinds: HashMap<(String, String), TaskKind>,
}

/// Parses and validates a native JSONL log.
pub fn parse_log<R: Read>(mut input: R) -> Result<(Timeline, ValidationReport), IngestError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (timeline, report) = parse_bytes(&bytes);
    match timeline {
        Some(t) => Ok((t, report)),
        None => Err(IngestError::Invalid(report)),
    }
}

/// Parses a log held in memory, always returning the full report.
pub fn parse_bytes(bytes: &[u8]) -> (Option<Timeline>, ValidationReport) {
    let mut report = ValidationReport::default();
    let mut b = Builder::default();
    let mut seen_record = false;

    let mut lines: Vec<&[u8]> = bytes.split(|c| *c == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }

    for (i, raw) in lines.iter().enumerate() {
        let line_no = i + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let Ok(text) = std::str::from_utf8(raw) else {
            report.error(line_no, DiagnosticCode::Utf8, "line is not valid UTF-8");
            continue;
        };
        if text.trim().is_empty() {
            report.warnings.push(Diagnostic {
                line: line_no,
                code: DiagnosticCode::BlankLine,
                message: "blank line ignored".into(),
            });
            continue;
        }
        let value: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => {
                report.error(line_no, DiagnosticCode::Json, e.to_string());
                continue;
            }
        };
        let Value::Object(mut obj) = value else {
            report.error(line_no, DiagnosticCode::Schema, "record must be a JSON object");
            continue;
        };
        let rtype = match obj.remove("type") {
            Some(Value::String(s)) => match s.parse::<RecordType>() {
                Ok(t) => t,
                Err(()) => {
                    report.error(
                        line_no,
                        DiagnosticCode::Enum,
                        format!("unknown record type `{s}`"),
                    );
                    continue;
                }
            },
            Some(_) => {
                report.error(line_no, DiagnosticCode::Schema, "field `type` must be a string");
                continue;
            }
            None => {
                report.error(line_no, DiagnosticCode::Schema, "missing field `type`");
                continue;
            }
        };

        let first = !seen_record;
        seen_record = true;
        match rtype {
            RecordType::Meta => {
                if !first {
                    report.error(
                        line_no,
                        DiagnosticCode::MetaDuplicate,
                        "meta record must appear exactly once, as the first record",
                    );
                    continue;
                }
                report.counts.meta += 1;
                b.meta_record(obj, line_no, &mut report);
            }
            _ if first || b.meta.is_none() => {
                if first {
                    report.error(
                        line_no,
                        DiagnosticCode::MetaMissing,
                        "first record must be the meta record",
                    );
                }
                // Without a usable meta record nothing else can be resolved.
            }
            RecordType::State => {
                report.counts.state += 1;
                b.state_record(obj, line_no, &mut report);
            }
            RecordType::Env => {
                report.counts.env += 1;
                b.env_record(obj, line_no, &mut report);
            }
            RecordType::Op => {
                report.counts.op += 1;
                b.op_record(obj, line_no, &mut report);
            }
        }
    }

    if !seen_record {
        report.error(0, DiagnosticCode::MetaMissing, "log contains no records");
        return (None, report);
    }
    if b.meta.is_none() {
        return (None, report);
    }

    b.check_causes(&mut report);
    b.check_initial_states(&mut report);

    if !report.is_ok() {
        return (None, report);
    }
    let meta = b.meta.take().expect("checked above");
    (
        Some(Timeline::from_parts(meta, b.env, b.states, b.ops)),
        report,
    )
}

fn decode<T: serde::de::DeserializeOwned>(
    obj: Map<String, Value>,
    line: usize,
    report: &mut ValidationReport,
) -> Option<T> {
    match serde_json::from_value(Value::Object(obj)) {
        Ok(v) => Some(v),
        Err(e) => {
            report.error(line, DiagnosticCode::Schema, e.to_string());
            None
        }
    }
}

impl Builder {
    fn meta_record(&mut self, obj: Map<String, Value>, line: usize, report: &mut ValidationReport) {
        let Some(rec) = decode::<MetaRecord>(obj, line, report) else {
            return;
        };
        if rec.version != LOG_VERSION {
            report.error(
                line,
                DiagnosticCode::Version,
                format!("unsupported log version {} (expected {LOG_VERSION})", rec.version),
            );
            return;
        }
        let before = report.errors.len();
        let mut agents = Vec::new();
        for a in rec.agents {
            if a.id.is_empty() {
                report.error(line, DiagnosticCode::Schema, "agent id must be non-empty");
                continue;
            }
            if a.characteristics.trim().is_empty() {
                report.error(
                    line,
                    DiagnosticCode::Schema,
                    format!("agent `{}` has empty characteristics", a.id),
                );
            }
            if !self.agents.insert(a.id.clone()) {
                report.error(
                    line,
                    DiagnosticCode::DuplicateId,
                    format!("agent `{}` declared twice", a.id),
                );
                continue;
            }
            agents.push(AgentCharacteristic {
                agent: AgentId(a.id),
                name: a.name,
                description: a.characteristics,
            });
        }
        let mut locations = Vec::new();
        for l in rec.locations {
            let bounds = Bounds::from(l.bounds);
            if l.id.is_empty() {
                report.error(line, DiagnosticCode::Schema, "location id must be non-empty");
                continue;
            }
            if !bounds.is_well_formed() {
                report.error(
                    line,
                    DiagnosticCode::Schema,
                    format!("location `{}` has inverted bounds", l.id),
                );
            }
            if self.locations.insert(l.id.clone(), bounds).is_some() {
                report.error(
                    line,
                    DiagnosticCode::DuplicateId,
                    format!("location `{}` declared twice", l.id),
                );
                continue;
            }
            locations.push(Location {
                id: LocationId(l.id),
                name: l.name,
                bounds,
            });
        }
        if report.errors.len() > before {
            return;
        }
        self.meta = Some(ProjectMeta {
            version: rec.version,
            agents,
            locations,
            time_unit: rec.time_unit,
            extra: rec.extra.unwrap_or_default(),
        });
    }

    fn check_agent(&self, agent: &str, line: usize, report: &mut ValidationReport) -> bool {
        if self.agents.contains(agent) {
            true
        } else {
            report.error(
                line,
                DiagnosticCode::UnknownRef,
                format!("unknown agent `{agent}`"),
            );
            false
        }
    }

    fn state_record(&mut self, obj: Map<String, Value>, line: usize, report: &mut ValidationReport) {
        let Some(rec) = decode::<StateRecord>(obj, line, report) else {
            return;
        };
        if !self.check_agent(&rec.agent, line, report) {
            return;
        }
        let Some(bounds) = self.locations.get(&rec.location) else {
            report.error(
                line,
                DiagnosticCode::UnknownRef,
                format!("unknown location `{}`", rec.location),
            );
            return;
        };
        let position = rec.position.map(Position::from);
        if let Some(p) = position {
            if !bounds.contains(p) {
                report.error(
                    line,
                    DiagnosticCode::OutOfBounds,
                    format!(
                        "position [{}, {}] outside bounds of `{}`",
                        p.x, p.y, rec.location
                    ),
                );
                return;
            }
        }
        let key = (TimePoint(rec.t), AgentId(rec.agent.clone()));
        if self.states.contains_key(&key) {
            report.error(
                line,
                DiagnosticCode::DuplicateState,
                format!("second state record for `{}` at t={}", rec.agent, rec.t),
            );
            return;
        }
        self.states.insert(
            key,
            AgentState {
                time: TimePoint(rec.t),
                agent: AgentId(rec.agent),
                location: LocationId(rec.location),
                position,
                attrs: rec.attrs.unwrap_or_default(),
                extra: rec.extra.unwrap_or_default(),
            },
        );
    }

    fn env_record(&mut self, obj: Map<String, Value>, line: usize, report: &mut ValidationReport) {
        let Some(rec) = decode::<EnvRecord>(obj, line, report) else {
            return;
        };
        let t = TimePoint(rec.t);
        if self.env.contains_key(&t) {
            report.error(
                line,
                DiagnosticCode::DuplicateEnv,
                format!("second env record at t={}", rec.t),
            );
            return;
        }
        self.env.insert(
            t,
            EnvironmentState {
                time: t,
                attrs: rec.attrs,
                extra: rec.extra.unwrap_or_default(),
            },
        );
    }

    fn op_record(&mut self, obj: Map<String, Value>, line: usize, report: &mut ValidationReport) {
        let Some(rec) = decode::<OpRecord>(obj, line, report) else {
            return;
        };
        let task_kind = match rec.task_kind.parse::<TaskKind>() {
            Ok(k) => k,
            Err(e) => {
                report.error(line, DiagnosticCode::Enum, format!("task_kind: {e}"));
                return;
            }
        };
        let kind = match rec.op_kind.parse::<OperationKind>() {
            Ok(k) => k,
            Err(e) => {
                report.error(line, DiagnosticCode::Enum, format!("op_kind: {e}"));
                return;
            }
        };
        if !self.check_agent(&rec.agent, line, report) {
            return;
        }
        if rec.task_id.is_empty() {
            report.error(line, DiagnosticCode::Schema, "task_id must be non-empty");
            return;
        }
        if kind != OperationKind::Decision && (rec.prompt.is_some() || rec.response.is_some()) {
            report.error(
                line,
                DiagnosticCode::PromptOnNonDecision,
                format!("prompt/response only allowed on decision operations, got {}", rec.op_kind),
            );
            return;
        }
        let task_key = (rec.agent.clone(), rec.task_id.clone());
        match self.task_kinds.get(&task_key) {
            Some(k) if *k != task_kind => {
                report.error(
                    line,
                    DiagnosticCode::TaskKindMismatch,
                    format!(
                        "task `{}` of `{}` declared as {} and {}",
                        rec.task_id,
                        rec.agent,
                        k.as_str(),
                        task_kind.as_str()
                    ),
                );
                return;
            }
            Some(_) => {}
            None => {
                self.task_kinds.insert(task_key, task_kind);
            }
        }
        let op_ref = OperationRef::new(rec.t, rec.agent.clone(), rec.op_index);
        if let Some(first) = self.op_lines.get(&op_ref) {
            report.error(
                line,
                DiagnosticCode::DuplicateOp,
                format!("operation {op_ref} already defined on line {first}"),
            );
            return;
        }
        self.op_lines.insert(op_ref, line);
        let causes = rec
            .causes
            .unwrap_or_default()
            .into_iter()
            .map(|c| OperationRef::new(c.t, c.agent, c.op_index))
            .collect();
        let op = Operation {
            time: TimePoint(rec.t),
            agent: AgentId(rec.agent),
            task: TaskId(rec.task_id),
            task_kind,
            op_index: rec.op_index,
            kind,
            text: rec.text,
            prompt: rec.prompt,
            response: rec.response,
            explicit_causes: causes,
            extra: rec.extra.unwrap_or_default(),
        };
        *report
            .counts
            .ops_per_agent
            .entry(op.agent.0.clone())
            .or_default() += 1;
        self.ops
            .entry((op.time, op.agent.clone()))
            .or_default()
            .push(op);
    }

    fn check_causes(&self, report: &mut ValidationReport) {
        let mut problems = Vec::new();
        for op in self.ops.values().flatten() {
            let me = op.op_ref();
            for cause in &op.explicit_causes {
                let line = self.op_lines[&me];
                if !self.op_lines.contains_key(cause) {
                    problems.push((line, format!("{me}: cause {cause} does not exist")));
                } else if !cause.strictly_precedes(&me) {
                    problems.push((line, format!("{me}: cause {cause} does not precede it")));
                }
            }
        }
        problems.sort();
        for (line, msg) in problems {
            report.error(line, DiagnosticCode::BadCause, msg);
        }
    }

    fn check_initial_states(&self, report: &mut ValidationReport) {
        for agent in &self.agents {
            if !self
                .states
                .contains_key(&(TimePoint(0), AgentId(agent.clone())))
            {
                report.error(
                    1,
                    DiagnosticCode::MissingInitialState,
                    format!("agent `{agent}` has no state record at t=0"),
                );
            }
        }
    }
}

fn record_line<T: Serialize>(kind: &str, record: &T) -> String {
    let mut out = Map::new();
    out.insert("type".into(), Value::String(kind.into()));
    if let Value::Object(fields) = serde_json::to_value(record).expect("records serialize") {
        out.extend(fields);
    }
    serde_json::to_string(&Value::Object(out)).expect("records serialize")
}

fn non_empty(extra: &Extra) -> Option<Extra> {
    (!extra.is_empty()).then(|| extra.clone())
}

/// Serializes a timeline back into the native schema. Records are emitted
/// in canonical order: meta, env by time, states by `(t, agent)`, then
/// operations by `(t, agent, op_index)`.
pub fn serialize_timeline(timeline: &Timeline) -> String {
    let mut out = String::new();
    let meta = MetaRecord {
        version: timeline.meta.version,
        agents: timeline
            .meta
            .agents
            .iter()
            .map(|a| MetaAgent {
                id: a.agent.0.clone(),
                name: a.name.clone(),
                characteristics: a.description.clone(),
            })
            .collect(),
        locations: timeline
            .meta
            .locations
            .iter()
            .map(|l| MetaLocation {
                id: l.id.0.clone(),
                name: l.name.clone(),
                bounds: l.bounds.into(),
            })
            .collect(),
        time_unit: timeline.meta.time_unit.clone(),
        extra: non_empty(&timeline.meta.extra),
    };
    out.push_str(&record_line("meta", &meta));
    out.push('\n');
    for env in timeline.env_states.values() {
        let rec = EnvRecord {
            t: env.time.0,
            attrs: env.attrs.clone(),
            extra: non_empty(&env.extra),
        };
        out.push_str(&record_line("env", &rec));
        out.push('\n');
    }
    for s in timeline.agent_states.values() {
        let rec = StateRecord {
            t: s.time.0,
            agent: s.agent.0.clone(),
            location: s.location.0.clone(),
            position: s.position.map(Into::into),
            attrs: (!s.attrs.is_empty()).then(|| s.attrs.clone()),
            extra: non_empty(&s.extra),
        };
        out.push_str(&record_line("state", &rec));
        out.push('\n');
    }
    for op in timeline.all_operations() {
        let rec = OpRecord {
            t: op.time.0,
            agent: op.agent.0.clone(),
            task_id: op.task.0.clone(),
            task_kind: op.task_kind.as_str().into(),
            op_index: op.op_index,
            op_kind: op.kind.as_str().into(),
            text: op.text.clone(),
            causes: (!op.explicit_causes.is_empty()).then(|| {
                op.explicit_causes
                    .iter()
                    .map(|c| CauseRecord {
                        t: c.t.0,
                        agent: c.agent.0.clone(),
                        op_index: c.op_index,
                    })
                    .collect()
            }),
            prompt: op.prompt.clone(),
            response: op.response.clone(),
            extra: non_empty(&op.extra),
        };
        out.push_str(&record_line("op", &rec));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const META: &str = r#"{"type":"meta","version":1,"agents":[{"id":"a","name":"A","characteristics":"curious"},{"id":"b","name":"B","characteristics":"shy"}],"locations":[{"id":"room","name":"Room","bounds":[0,0,9,9]}]}"#;

    fn log(lines: &[&str]) -> String {
        let mut s = String::from(META);
        s.push('\n');
        for l in lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    const INIT: [&str; 2] = [
        r#"{"type":"state","t":0,"agent":"a","location":"room","position":[1,1]}"#,
        r#"{"type":"state","t":0,"agent":"b","location":"room"}"#,
    ];

    fn with_init(extra: &[&str]) -> String {
        let mut lines: Vec<&str> = INIT.to_vec();
        lines.extend_from_slice(extra);
        log(&lines)
    }

    fn codes(input: &str) -> Vec<(usize, DiagnosticCode)> {
        let (tl, report) = parse_bytes(input.as_bytes());
        assert!(tl.is_none(), "expected rejection");
        report.errors.iter().map(|d| (d.line, d.code)).collect()
    }

    #[test]
    fn empty_stream_is_missing_meta() {
        assert_eq!(codes(""), vec![(0, DiagnosticCode::MetaMissing)]);
        let err = parse_log("".as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::Invalid(r) if r.has_code(DiagnosticCode::MetaMissing)));
    }

    #[test]
    fn meta_must_come_first_and_once() {
        let body = r#"{"type":"env","t":0,"attrs":{}}"#.to_string() + "\n" + META + "\n";
        let c = codes(&body);
        assert_eq!(c[0], (1, DiagnosticCode::MetaMissing));
        assert_eq!(c[1], (2, DiagnosticCode::MetaDuplicate));
        let twice = with_init(&[META]);
        assert!(codes(&twice).contains(&(4, DiagnosticCode::MetaDuplicate)));
    }

    #[test]
    fn unknown_enum_token_is_reported_on_its_line() {
        let bad = r#"{"type":"op","t":1,"agent":"a","task_id":"t","task_kind":"think","op_index":0,"op_kind":"thinking","text":"x"}"#;
        assert_eq!(codes(&with_init(&[bad])), vec![(4, DiagnosticCode::Enum)]);
        let bad_task = r#"{"type":"op","t":1,"agent":"a","task_id":"t","task_kind":"dream","op_index":0,"op_kind":"memory","text":"x"}"#;
        assert_eq!(codes(&with_init(&[bad_task])), vec![(4, DiagnosticCode::Enum)]);
        assert_eq!(
            codes(&with_init(&[r#"{"type":"trace","t":1}"#])),
            vec![(4, DiagnosticCode::Enum)]
        );
    }

    #[test]
    fn duplicate_operations_and_states() {
        let op = r#"{"type":"op","t":1,"agent":"a","task_id":"t","task_kind":"act","op_index":0,"op_kind":"environment","text":"x"}"#;
        assert_eq!(codes(&with_init(&[op, op])), vec![(5, DiagnosticCode::DuplicateOp)]);
        assert_eq!(
            codes(&with_init(&[INIT[0]])),
            vec![(4, DiagnosticCode::DuplicateState)]
        );
        let env = r#"{"type":"env","t":3,"attrs":{"weather":"rain"}}"#;
        assert_eq!(codes(&with_init(&[env, env])), vec![(5, DiagnosticCode::DuplicateEnv)]);
    }

    #[test]
    fn causes_must_exist_and_precede() {
        let a0 = r#"{"type":"op","t":2,"agent":"a","task_id":"t","task_kind":"act","op_index":0,"op_kind":"environment","text":"x"}"#;
        let dangling = r#"{"type":"op","t":3,"agent":"a","task_id":"t","task_kind":"act","op_index":0,"op_kind":"environment","text":"y","causes":[{"t":1,"agent":"a","op_index":0}]}"#;
        assert_eq!(codes(&with_init(&[a0, dangling])), vec![(5, DiagnosticCode::BadCause)]);
        // Same time, other agent: not strictly earlier.
        let same_time = r#"{"type":"op","t":2,"agent":"b","task_id":"t","task_kind":"act","op_index":0,"op_kind":"environment","text":"y","causes":[{"t":2,"agent":"a","op_index":0}]}"#;
        assert_eq!(codes(&with_init(&[a0, same_time])), vec![(5, DiagnosticCode::BadCause)]);
        // Same agent, later index at the same time: fine. Causes may be
        // declared before the line defining them.
        let ok = r#"{"type":"op","t":2,"agent":"a","task_id":"t","task_kind":"act","op_index":1,"op_kind":"environment","text":"y","causes":[{"t":2,"agent":"a","op_index":0}]}"#;
        let (tl, report) = parse_bytes(with_init(&[ok, a0]).as_bytes());
        assert!(report.is_ok(), "{:?}", report.errors);
        let tl = tl.unwrap();
        let op = tl.operation(&OperationRef::new(2, "a", 1)).unwrap();
        assert_eq!(op.explicit_causes, vec![OperationRef::new(2, "a", 0)]);
    }

    #[test]
    fn references_bounds_and_prompts() {
        let bad_loc = r#"{"type":"state","t":1,"agent":"a","location":"attic"}"#;
        assert_eq!(codes(&with_init(&[bad_loc])), vec![(4, DiagnosticCode::UnknownRef)]);
        let bad_pos = r#"{"type":"state","t":1,"agent":"a","location":"room","position":[10,0]}"#;
        assert_eq!(codes(&with_init(&[bad_pos])), vec![(4, DiagnosticCode::OutOfBounds)]);
        let prompt = r#"{"type":"op","t":1,"agent":"a","task_id":"t","task_kind":"act","op_index":0,"op_kind":"memory","text":"x","prompt":"p"}"#;
        assert_eq!(
            codes(&with_init(&[prompt])),
            vec![(4, DiagnosticCode::PromptOnNonDecision)]
        );
        let ghost = r#"{"type":"op","t":1,"agent":"ghost","task_id":"t","task_kind":"act","op_index":0,"op_kind":"memory","text":"x"}"#;
        assert_eq!(codes(&with_init(&[ghost])), vec![(4, DiagnosticCode::UnknownRef)]);
    }

    #[test]
    fn strict_fields_and_task_kinds() {
        let unknown_field = r#"{"type":"env","t":1,"attrs":{},"colour":"red"}"#;
        assert_eq!(codes(&with_init(&[unknown_field])), vec![(4, DiagnosticCode::Schema)]);
        let t1 = r#"{"type":"op","t":1,"agent":"a","task_id":"t","task_kind":"act","op_index":0,"op_kind":"memory","text":"x"}"#;
        let t2 = r#"{"type":"op","t":2,"agent":"a","task_id":"t","task_kind":"think","op_index":0,"op_kind":"memory","text":"x"}"#;
        assert_eq!(codes(&with_init(&[t1, t2])), vec![(5, DiagnosticCode::TaskKindMismatch)]);
        assert_eq!(codes(&with_init(&["not json"])), vec![(4, DiagnosticCode::Json)]);
        assert_eq!(codes(&with_init(&["[1,2]"])), vec![(4, DiagnosticCode::Schema)]);
    }

    #[test]
    fn initial_states_are_required() {
        assert_eq!(codes(&log(&[INIT[0]])), vec![(1, DiagnosticCode::MissingInitialState)]);
    }

    #[test]
    fn extra_fields_survive_round_trip() {
        let op = r#"{"type":"op","t":1,"agent":"a","task_id":"chat","task_kind":"act","op_index":0,"op_kind":"environment","text":"hi","extra":{"chat_with":"b","tone":{"warm":true}}}"#;
        let input = with_init(&[op]);
        let (tl, _) = parse_log(input.as_bytes()).unwrap();
        let again = serialize_timeline(&tl);
        let (tl2, _) = parse_log(again.as_bytes()).unwrap();
        assert_eq!(tl, tl2);
        assert_eq!(serialize_timeline(&tl2), again);
        let o = tl.operation(&OperationRef::new(1, "a", 0)).unwrap();
        assert_eq!(o.chat_partners(), vec![AgentId::from("b")]);
    }

    #[test]
    fn blank_lines_warn_but_do_not_fail() {
        let input = format!("{META}\n\n{}\n{}\n", INIT[0], INIT[1]);
        let (tl, report) = parse_bytes(input.as_bytes());
        assert!(tl.is_some());
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.counts.state, 2);
    }
}
