//! On-disk projects: an ingested log plus caches and persisted results.
//!
//! ```text
//! <dir>/project.json          id, source digest, prompt template
//! <dir>/log.jsonl             canonical copy of the validated log
//! <dir>/cache/embeddings/     embedding cache
//! <dir>/cache/summaries/      summary cache
//! <dir>/segmentations/*.json  one file per (agent, range, parameters)
//! <dir>/layouts/*.json        outline layouts
//! <dir>/.lock                 advisory lock
//! ```

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions, TryLockError};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causetrace::{trace_causes, CauseError, CauseSet, ImplicitOptions};
use crate::error::{Classify, ErrorClass};
use crate::ingest::{parse_bytes, serialize_timeline, ValidationReport, LOG_VERSION};
use crate::layout::{compute_outline_layout, LayoutError, LayoutOptions, OutlineLayout};
use crate::model::{
    AgentId, BehaviorError, Operation, OperationKind, OperationRef, TaskId, TaskKind, TimeInterval,
    TimePoint, Timeline,
};
use crate::monitor::{monitor_frame, MonitorError, MonitorFrame};
use crate::search::{memory_search, SearchError, SearchHit, SearchOptions};
use crate::segment::{point_behaviors, segment_timeline, sequence_pca, SegmentError, SegmentationParams, SegmentationResult};
use crate::summarize::cache::{digest_hex, CacheError, EmbeddingCache, SummaryCache};
use crate::summarize::provider::{ClientConfig, ProviderConfig, ProviderError};
use crate::summarize::{
    EmbedError, Embedder, SummarizeError, Summarizer, SummaryRequest, PROMPT_TEMPLATE, PROMPT_TEMPLATE_VERSION,
};

pub const PROJECT_FILE: &str = "project.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectInfo {
    pub id: String,
    /// SHA-256 of the log bytes as submitted.
    pub source_digest: String,
    pub log_version: u32,
    pub prompt_template_version: String,
    pub prompt_template: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("log rejected with {} error(s)", .0.errors.len())]
    Invalid(ValidationReport),
    #[error("{0} is not a project directory (no {PROJECT_FILE})")]
    NotAProject(PathBuf),
    #[error("{dir} already holds project {existing}, not {incoming}")]
    Conflict { dir: PathBuf, existing: String, incoming: String },
    #[error("project {0} is locked by another process")]
    Locked(PathBuf),
    #[error("unknown project `{0}`")]
    UnknownProject(String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("unknown operation {0}")]
    UnknownOperation(OperationRef),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Cause(#[from] CauseError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

impl Classify for ProjectError {
    fn class(&self) -> ErrorClass {
        use ProjectError::*;
        match self {
            Io { .. } | Json { .. } | Cache(_) => ErrorClass::Internal,
            Invalid(_) | BadRequest(_) | Behavior(_) | Layout(LayoutError::BadRange { .. }) => ErrorClass::Validation,
            Layout(LayoutError::UnknownAgent(_))
            | Monitor(MonitorError::UnknownAgent(_))
            | UnknownAgent(_)
            | UnknownOperation(_)
            | UnknownProject(_) => ErrorClass::NotFound,
            Layout(_) | Monitor(_) => ErrorClass::Validation,
            NotAProject(_) => ErrorClass::NotFound,
            Conflict { .. } | Locked(_) => ErrorClass::Conflict,
            Provider(e) => e.class(),
            Summarize(e) => e.class(),
            Embed(e) => e.class(),
            Segment(e) => e.class(),
            Cause(e) => e.class(),
            Search(SearchError::Embed(e)) => e.class(),
            Search(_) => ErrorClass::Validation,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ProjectError + '_ {
    move |source| ProjectError::Io {
        path: path.to_owned(),
        source,
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ProjectError> {
    let bytes = fs::read(path).map_err(io(path))?;
    serde_json::from_slice(&bytes).map_err(|source| ProjectError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Writes through a temporary file so readers never see partial output.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

/// Project id for a log: the first 12 hex digits of its SHA-256.
pub fn project_id(log: &[u8]) -> String {
    hex::encode(Sha256::digest(log))[..12].to_owned()
}

/// Validates `log` and creates (or confirms) a project in `dir`. Creating
/// the same project twice is a no-op.
pub fn ingest_into(log: &[u8], dir: &Path) -> Result<(ProjectInfo, ValidationReport), ProjectError> {
    let (timeline, report) = parse_bytes(log);
    let Some(timeline) = timeline else {
        return Err(ProjectError::Invalid(report));
    };
    let info = ProjectInfo {
        id: project_id(log),
        source_digest: hex::encode(Sha256::digest(log)),
        log_version: LOG_VERSION,
        prompt_template_version: PROMPT_TEMPLATE_VERSION.into(),
        prompt_template: PROMPT_TEMPLATE.into(),
    };
    let info_path = dir.join(PROJECT_FILE);
    if info_path.exists() {
        let existing: ProjectInfo = read_json(&info_path)?;
        if existing.id != info.id {
            return Err(ProjectError::Conflict {
                dir: dir.to_owned(),
                existing: existing.id,
                incoming: info.id,
            });
        }
        return Ok((existing, report));
    }
    fs::create_dir_all(dir).map_err(io(dir))?;
    let _lock = lock(dir, Access::Exclusive)?;
    write_atomic(&dir.join(LOG_FILE), serialize_timeline(&timeline).as_bytes())?;
    write_atomic(&info_path, &to_json(&info))?;
    Ok((info, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    /// Readers such as the server; many may coexist.
    Shared,
    /// Pipeline commands; one at a time.
    Exclusive,
}

fn lock(dir: &Path, access: Access) -> Result<File, ProjectError> {
    let path = dir.join(LOCK_FILE);
    let file = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .map_err(io(&path))?;
    let res = match access {
        Access::Shared => file.try_lock_shared(),
        Access::Exclusive => file.try_lock(),
    };
    match res {
        Ok(()) => Ok(file),
        Err(TryLockError::WouldBlock) => Err(ProjectError::Locked(dir.to_owned())),
        Err(TryLockError::Error(e)) => Err(io(&path)(e)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentSummary {
    pub agent: AgentId,
    pub name: String,
    pub characteristics: String,
    pub operation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperationNode {
    #[serde(rename = "ref")]
    pub op_ref: OperationRef,
    pub kind: OperationKind,
    pub text: String,
    pub has_prompt: bool,
    pub cause_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskNode {
    pub task: TaskId,
    pub task_kind: TaskKind,
    pub operations: Vec<OperationNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TimePointNode {
    pub time: TimePoint,
    pub location: Option<crate::model::LocationId>,
    pub description: String,
    pub emoji: String,
    pub tasks: Vec<TaskNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentTimeline {
    pub agent: AgentId,
    pub range: TimeInterval,
    pub points: Vec<TimePointNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PcaPoint {
    pub time: TimePoint,
    /// `None` for time points whose embedding is empty.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PcaResult {
    pub agent: AgentId,
    pub range: TimeInterval,
    pub points: Vec<PcaPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageReport {
    pub time_points: usize,
    pub operations_embedded: usize,
    pub provider_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutlineRequest {
    pub range: TimeInterval,
    pub agents: Vec<AgentId>,
    pub target_segments: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
}

/// An opened project with its caches.
pub struct Project {
    dir: PathBuf,
    info: ProjectInfo,
    timeline: Arc<Timeline>,
    summarizer: Summarizer,
    embedder: Embedder,
    write: Mutex<()>,
    _lock: File,
}

impl Project {
    pub fn open(dir: &Path, access: Access, providers: &ProviderConfig) -> Result<Self, ProjectError> {
        Self::open_with(dir, access, providers, &ClientConfig::default())
    }

    pub fn open_with(
        dir: &Path,
        access: Access,
        providers: &ProviderConfig,
        client: &ClientConfig,
    ) -> Result<Self, ProjectError> {
        let info_path = dir.join(PROJECT_FILE);
        if !info_path.exists() {
            return Err(ProjectError::NotAProject(dir.to_owned()));
        }
        let lock = lock(dir, access)?;
        let info: ProjectInfo = read_json(&info_path)?;
        let log_path = dir.join(LOG_FILE);
        let bytes = fs::read(&log_path).map_err(io(&log_path))?;
        let (timeline, report) = parse_bytes(&bytes);
        let timeline = timeline.ok_or(ProjectError::Invalid(report))?;
        let summaries = Arc::new(SummaryCache::open(&dir.join("cache").join("summaries"))?);
        let embeddings = Arc::new(EmbeddingCache::open(&dir.join("cache").join("embeddings"))?);
        let summarizer = Summarizer::from_config(providers, client, summaries)?;
        let embedder = Embedder::from_config(providers, client, embeddings)?;
        Ok(Self {
            dir: dir.to_owned(),
            info,
            timeline: Arc::new(timeline),
            summarizer,
            embedder,
            write: Mutex::new(()),
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn info(&self) -> &ProjectInfo {
        &self.info
    }

    pub fn id(&self) -> &str {
        &self.info.id
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn summarizer(&self) -> &Summarizer {
        &self.summarizer
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    /// Provider calls made through this handle (cache hits excluded).
    pub fn provider_calls(&self) -> u64 {
        self.summarizer.provider_calls() + self.embedder.provider_calls()
    }

    fn agent(&self, agent: &str) -> Result<AgentId, ProjectError> {
        let id = AgentId::from(agent);
        if self.timeline.has_agent(agent) {
            Ok(id)
        } else {
            Err(ProjectError::UnknownAgent(id))
        }
    }

    /// Clamps optional endpoints to the project bounds.
    pub fn range(&self, from: Option<u64>, to: Option<u64>) -> Result<TimeInterval, ProjectError> {
        let b = self.timeline.bounds();
        let r = TimeInterval::new(from.unwrap_or(b.start.0), to.unwrap_or(b.end.0));
        if r.is_empty() || !b.contains_interval(&r) {
            return Err(ProjectError::BadRequest(format!("range {r} is empty or outside project bounds {b}")));
        }
        Ok(r)
    }

    /// Summarizes and embeds every time point of every agent, and embeds
    /// every operation text. Rerunning it on a filled cache makes no calls.
    pub fn summarize_all(&self) -> Result<StageReport, ProjectError> {
        let before = self.provider_calls();
        let bounds = self.timeline.bounds();
        let mut report = StageReport::default();
        for agent in self.timeline.agent_ids() {
            match point_behaviors(&self.timeline, &self.summarizer, &self.embedder, agent, bounds) {
                Ok((points, _)) => report.time_points += points.len(),
                Err(SegmentError::NoOperations { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let texts: Vec<&str> = self.timeline.all_operations().map(|o| o.text.as_str()).collect();
        for r in self.embedder.embed_all(&texts) {
            r?;
        }
        report.operations_embedded = texts.len();
        report.provider_calls = self.provider_calls() - before;
        Ok(report)
    }

    fn segmentation_path(&self, agent: &AgentId, range: TimeInterval, params: &SegmentationParams) -> PathBuf {
        let key = serde_json::to_string(&(agent, range, params, self.summarizer.backend_tag(), self.embedder.backend_tag()))
            .expect("key serializes");
        let safe: String = agent
            .as_str()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let name = format!(
            "{safe}_{}_{}_n{}_{}.json",
            range.start,
            range.end,
            params.target_segments,
            &digest_hex(&[&key])[..12]
        );
        self.dir.join("segmentations").join(name)
    }

    /// Segmentation of `agent` over `range`, computed once and persisted.
    pub fn segmentation(
        &self,
        agent: &str,
        range: TimeInterval,
        params: &SegmentationParams,
    ) -> Result<SegmentationResult, ProjectError> {
        let agent = self.agent(agent)?;
        let path = self.segmentation_path(&agent, range, params);
        if path.exists() {
            return read_json(&path);
        }
        let result = segment_timeline(&self.timeline, &self.summarizer, &self.embedder, &agent, range, params)?;
        let _w = self.write.lock().expect("write lock");
        fs::create_dir_all(path.parent().expect("parent")).map_err(io(&self.dir))?;
        write_atomic(&path, &to_json(&result))?;
        Ok(result)
    }

    /// Outline over the given agents (all when empty), cached on disk.
    pub fn outline(&self, req: &OutlineRequest) -> Result<OutlineLayout, ProjectError> {
        let mut req = req.clone();
        if req.agents.is_empty() {
            req.agents = self.timeline.agent_ids().cloned().collect();
        }
        for a in &req.agents {
            self.agent(a.as_str())?;
        }
        req.agents.sort();
        req.agents.dedup();
        let key = serde_json::to_string(&(&req, self.summarizer.backend_tag(), self.embedder.backend_tag()))
            .expect("key serializes");
        let path = self.dir.join("layouts").join(format!("{}.json", &digest_hex(&[&key])[..16]));
        if path.exists() {
            return read_json(&path);
        }
        let params = SegmentationParams::with_target(req.target_segments);
        let mut segmentations = Vec::new();
        for a in &req.agents {
            match self.segmentation(a.as_str(), req.range, &params) {
                Ok(s) => segmentations.push(s),
                Err(ProjectError::Segment(SegmentError::NoOperations { .. })) => {}
                Err(e) => return Err(e),
            }
        }
        let highlights = match &req.query {
            Some(q) if !q.trim().is_empty() => self.search(q, &SearchOptions::default())?,
            _ => Vec::new(),
        };
        let layout = compute_outline_layout(
            &self.timeline,
            req.range,
            &req.agents,
            req.target_segments,
            &segmentations,
            &highlights,
            &LayoutOptions::default(),
        )?;
        let _w = self.write.lock().expect("write lock");
        fs::create_dir_all(path.parent().expect("parent")).map_err(io(&self.dir))?;
        write_atomic(&path, &to_json(&layout))?;
        Ok(layout)
    }

    pub fn agents(&self) -> Vec<AgentSummary> {
        let mut counts: HashMap<&AgentId, usize> = HashMap::new();
        for op in self.timeline.all_operations() {
            *counts.entry(&op.agent).or_default() += 1;
        }
        self.timeline
            .meta
            .agents
            .iter()
            .map(|a| AgentSummary {
                agent: a.agent.clone(),
                name: a.name.clone(),
                characteristics: a.description.clone(),
                operation_count: counts.get(&a.agent).copied().unwrap_or(0),
            })
            .collect()
    }

    pub fn operation(&self, r: &OperationRef) -> Result<&Operation, ProjectError> {
        self.timeline
            .operation(r)
            .ok_or_else(|| ProjectError::UnknownOperation(r.clone()))
    }

    /// Time points with their task and operation trees.
    pub fn agent_timeline(&self, agent: &str, range: TimeInterval) -> Result<AgentTimeline, ProjectError> {
        let agent = self.agent(agent)?;
        let times = self.timeline.agent_active_times(&agent, range);
        let requests = times
            .iter()
            .map(|t| Ok(SummaryRequest::new(self.timeline.behavior_of(&agent, TimeInterval::new(t.0, t.0 + 1))?)))
            .collect::<Result<Vec<_>, BehaviorError>>()?;
        let summaries = self.summarizer.generate_all(&self.timeline, &requests);
        let mut points = Vec::with_capacity(times.len());
        for (t, summary) in times.iter().zip(summaries) {
            let summary = summary?;
            let mut tasks: Vec<TaskNode> = Vec::new();
            for op in self.timeline.operations_at(*t, &agent) {
                let node = OperationNode {
                    op_ref: op.op_ref(),
                    kind: op.kind,
                    text: op.text.clone(),
                    has_prompt: op.prompt.is_some() || op.response.is_some(),
                    cause_count: op.explicit_causes.len(),
                };
                match tasks.iter_mut().find(|n| n.task == op.task) {
                    Some(n) => n.operations.push(node),
                    None => tasks.push(TaskNode {
                        task: op.task.clone(),
                        task_kind: op.task_kind,
                        operations: vec![node],
                    }),
                }
            }
            points.push(TimePointNode {
                time: *t,
                location: self.timeline.state_at(&agent, *t).map(|s| s.location.clone()),
                description: summary.description.clone(),
                emoji: summary.emoji.clone(),
                tasks,
            });
        }
        Ok(AgentTimeline { agent, range, points })
    }

    pub fn causes(&self, r: &OperationRef, opts: &ImplicitOptions) -> Result<CauseSet, ProjectError> {
        self.operation(r)?;
        Ok(trace_causes(&self.timeline, &self.embedder, r, opts)?)
    }

    pub fn search(&self, query: &str, opts: &SearchOptions) -> Result<Vec<SearchHit>, ProjectError> {
        Ok(memory_search(&self.timeline, Some(&self.embedder), query, opts)?)
    }

    pub fn monitor(&self, t: TimePoint, focus: Option<&str>) -> Result<MonitorFrame, ProjectError> {
        let focus = focus.map(|f| self.agent(f)).transpose()?;
        Ok(monitor_frame(&self.timeline, t, focus.as_ref())?)
    }

    pub fn pca(&self, agent: &str, range: TimeInterval) -> Result<PcaResult, ProjectError> {
        let agent = self.agent(agent)?;
        let (_, seq) = point_behaviors(&self.timeline, &self.summarizer, &self.embedder, &agent, range)?;
        let values = sequence_pca(&seq)?;
        Ok(PcaResult {
            agent,
            range,
            points: seq
                .times
                .iter()
                .zip(values)
                .map(|(&time, value)| PcaPoint { time, value })
                .collect(),
        })
    }
}

/// A directory of projects, one subdirectory per project id, plus
/// projects registered from elsewhere.
pub struct ProjectStore {
    root: Option<PathBuf>,
    providers: ProviderConfig,
    open: RwLock<HashMap<String, Arc<Project>>>,
    dirs: RwLock<HashMap<String, PathBuf>>,
}

impl ProjectStore {
    pub fn new(root: Option<PathBuf>, providers: ProviderConfig) -> Self {
        Self {
            root,
            providers,
            open: RwLock::new(HashMap::new()),
            dirs: RwLock::new(HashMap::new()),
        }
    }

    /// Adds an existing project directory; returns its id.
    pub fn register(&self, dir: &Path) -> Result<String, ProjectError> {
        let info_path = dir.join(PROJECT_FILE);
        if !info_path.exists() {
            return Err(ProjectError::NotAProject(dir.to_owned()));
        }
        let info: ProjectInfo = read_json(&info_path)?;
        self.dirs.write().expect("poisoned").insert(info.id.clone(), dir.to_owned());
        Ok(info.id)
    }

    /// Ingests a log into `<root>/<id>`.
    pub fn create(&self, log: &[u8]) -> Result<(ProjectInfo, ValidationReport), ProjectError> {
        let root = self
            .root
            .as_ref()
            .ok_or_else(|| ProjectError::BadRequest("server has no project directory for new projects".into()))?;
        let dir = root.join(project_id(log));
        let (info, report) = ingest_into(log, &dir)?;
        self.dirs.write().expect("poisoned").insert(info.id.clone(), dir);
        Ok((info, report))
    }

    fn dir_of(&self, id: &str) -> Option<PathBuf> {
        if let Some(d) = self.dirs.read().expect("poisoned").get(id) {
            return Some(d.clone());
        }
        let valid = id.len() == 12 && id.chars().all(|c| c.is_ascii_hexdigit());
        let dir = self.root.as_ref()?.join(id);
        (valid && dir.join(PROJECT_FILE).exists()).then_some(dir)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Project>, ProjectError> {
        if let Some(p) = self.open.read().expect("poisoned").get(id) {
            return Ok(p.clone());
        }
        let dir = self.dir_of(id).ok_or_else(|| ProjectError::UnknownProject(id.to_owned()))?;
        let mut open = self.open.write().expect("poisoned");
        if let Some(p) = open.get(id) {
            return Ok(p.clone());
        }
        let project = Arc::new(Project::open(&dir, Access::Shared, &self.providers)?);
        open.insert(id.to_owned(), project.clone());
        Ok(project)
    }
}
