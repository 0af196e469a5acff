//! Behavior descriptions (text + emoji) and text embeddings.
//!
//! Descriptions come from an external chat-completion service or from a
//! deterministic offline fallback; embeddings from an external embedding
//! service or from feature hashing. Every result is cached by content.

pub mod cache;
pub mod provider;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{fallback_embed, tokenize, EmbeddingVector, EMBEDDING_DIM};
use crate::model::{Behavior, Operation, OperationKind, TaskKind, Timeline};
use cache::{digest, digest_hex, CacheError, EmbeddingCache, SummaryCache};
use provider::{
    Breaker, ClientConfig, EmbeddingModel, HttpClient, LanguageModel, ProviderConfig, ProviderError,
    ENV_EMBED_URL, ENV_LLM_URL,
};

/// Default maximum description length, in characters.
pub const DEFAULT_BUDGET: usize = 280;

/// Default number of concurrent provider calls.
pub const DEFAULT_PARALLELISM: usize = 4;

/// Version tag of [`PROMPT_TEMPLATE`]; part of every summary cache key.
pub const PROMPT_TEMPLATE_VERSION: &str = "behavior-summary/v1";

/// Prompt sent to the chat-completion service. Placeholders: `{agent}`,
/// `{start}`, `{end}`, `{events}`, `{budget}`.
pub const PROMPT_TEMPLATE: &str = "\
You are summarizing the behavior of one agent in a multi-agent simulation.
Agent: {agent}
Time range: {start} to {end}
Logged events, in order:
{events}

Write one succinct, highly abstract description of what the agent is doing \
during this time range, at most {budget} characters, and choose one to three \
emoji symbols that capture the behavior. Answer in exactly this format:
DESCRIPTION: <text>
EMOJI: <emoji>
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStyle {
    #[default]
    TextAndEmoji,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRequest {
    pub behavior: Behavior,
    pub budget: usize,
    pub style: SummaryStyle,
}

impl SummaryRequest {
    pub fn new(behavior: Behavior) -> Self {
        Self {
            behavior,
            budget: DEFAULT_BUDGET,
            style: SummaryStyle::TextAndEmoji,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Llm,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SummaryResult {
    pub description: String,
    pub emoji: String,
    pub provider: ProviderKind,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SummarizeError {
    #[error("cannot summarize a behavior with no operations")]
    EmptyBehavior,
    #[error("behavior references operation {0} missing from the timeline")]
    MissingOperation(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("summary service returned no description")]
    EmptyResponse,
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl SummarizeError {
    pub fn is_provider_error(&self) -> bool {
        matches!(self, SummarizeError::Provider(_) | SummarizeError::EmptyResponse)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("E_DIM: embedding service returned {got} dimensions, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("embedding service returned a non-finite component")]
    NonFinite,
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Emoji for the dominant task kind when no keyword matches.
pub fn task_kind_emoji(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Perceive => "👀",
        TaskKind::Think => "💭",
        TaskKind::Act => "🏃",
    }
}

/// Keyword overrides, checked in order against token prefixes.
pub const KEYWORD_EMOJI: &[(&str, &str)] = &[
    ("sleep", "😴"),
    ("party", "🎉"),
    ("parties", "🎉"),
    ("writ", "✍️"),
    ("wrote", "✍️"),
    ("brainstorm", "🧠"),
    ("breakfast", "🍳"),
    ("lunch", "🍽️"),
    ("dinner", "🍽️"),
    ("coffee", "☕"),
    ("read", "📖"),
    ("walk", "🚶"),
    ("convers", "💬"),
    ("chat", "💬"),
    ("paint", "🎨"),
    ("shop", "🛒"),
    ("plan", "📝"),
];

fn keyword_emoji(texts: &[&str]) -> Option<&'static str> {
    texts.iter().find_map(|text| {
        let tokens = tokenize(text);
        KEYWORD_EMOJI
            .iter()
            .find(|(kw, _)| tokens.iter().any(|t| t.starts_with(kw)))
            .map(|(_, e)| *e)
    })
}

/// Most frequent key; ties go to the key that occurs first.
fn dominant<K: PartialEq + Clone>(items: impl Iterator<Item = K>) -> Option<K> {
    let mut counts: Vec<(K, usize)> = Vec::new();
    for item in items {
        match counts.iter_mut().find(|(k, _)| *k == item) {
            Some((_, n)) => *n += 1,
            None => counts.push((item, 1)),
        }
    }
    let best = counts.iter().map(|(_, n)| *n).max()?;
    counts.into_iter().find(|(_, n)| *n == best).map(|(k, _)| k)
}

/// Cuts `text` to at most `budget` characters, at a word boundary when one
/// exists. Returns whether anything was cut.
pub fn truncate_to_budget(text: &str, budget: usize) -> (String, bool) {
    let text = text.trim();
    if text.chars().count() <= budget {
        return (text.to_owned(), false);
    }
    let head: String = text.chars().take(budget).collect();
    let next_is_space = text.chars().nth(budget).is_some_and(char::is_whitespace);
    let cut = if next_is_space {
        head.as_str()
    } else {
        match head.rfind(char::is_whitespace) {
            Some(i) if i > 0 => &head[..i],
            _ => head.as_str(),
        }
    };
    (cut.trim_end().to_owned(), true)
}

fn resolve<'a>(timeline: &'a Timeline, behavior: &Behavior) -> Result<Vec<&'a Operation>, SummarizeError> {
    behavior
        .operations
        .iter()
        .map(|r| {
            timeline
                .operation(r)
                .ok_or_else(|| SummarizeError::MissingOperation(r.to_string()))
        })
        .collect()
}

fn content_hash(ops: &[&Operation]) -> String {
    let texts: Vec<&str> = ops.iter().map(|o| o.text.as_str()).collect();
    digest_hex(&texts)
}

fn fallback_from_ops(ops: &[&Operation], budget: usize) -> SummaryResult {
    let task = dominant(ops.iter().map(|o| o.task.as_str())).expect("non-empty");
    let kind = dominant(ops.iter().map(|o| o.task_kind)).expect("non-empty");
    let primary = ops
        .iter()
        .find(|o| o.kind == OperationKind::Decision)
        .unwrap_or(&ops[0]);
    let (description, _) = truncate_to_budget(&format!("{task}: {}", primary.text), budget);
    let texts: Vec<&str> = ops.iter().map(|o| o.text.as_str()).collect();
    let emoji = keyword_emoji(&texts).unwrap_or_else(|| task_kind_emoji(kind));
    SummaryResult {
        description,
        emoji: emoji.to_owned(),
        provider: ProviderKind::Fallback,
        content_hash: content_hash(ops),
        warnings: Vec::new(),
    }
}

/// Deterministic stand-in for the summary service:
/// `"<dominant task>: <first decision text, else first operation text>"`,
/// with an emoji from the keyword table or the dominant task kind.
pub fn fallback_summarize(
    timeline: &Timeline,
    behavior: &Behavior,
    budget: usize,
) -> Result<SummaryResult, SummarizeError> {
    let ops = resolve(timeline, behavior)?;
    if ops.is_empty() {
        return Err(SummarizeError::EmptyBehavior);
    }
    Ok(fallback_from_ops(&ops, budget))
}

/// Fills [`PROMPT_TEMPLATE`] for a behavior.
pub fn render_prompt(timeline: &Timeline, behavior: &Behavior, budget: usize) -> Result<String, SummarizeError> {
    let ops = resolve(timeline, behavior)?;
    Ok(render_prompt_ops(timeline, behavior, &ops, budget))
}

fn render_prompt_ops(timeline: &Timeline, behavior: &Behavior, ops: &[&Operation], budget: usize) -> String {
    let name = timeline
        .meta
        .agent(behavior.agent.as_str())
        .map(|a| a.name.as_str())
        .unwrap_or(behavior.agent.as_str());
    let events: Vec<String> = ops
        .iter()
        .map(|o| {
            format!(
                "- [t={}] ({} / {} / {}) {}",
                o.time,
                o.task,
                o.task_kind.as_str(),
                o.kind.as_str(),
                o.text
            )
        })
        .collect();
    PROMPT_TEMPLATE
        .replace("{agent}", name)
        .replace("{start}", &behavior.range.start.to_string())
        .replace("{end}", &behavior.range.end.to_string())
        .replace("{events}", &events.join("\n"))
        .replace("{budget}", &budget.to_string())
}

/// Emoji-ish symbols in `s`, ignoring variation selectors and joiners.
fn symbol_count(s: &str) -> usize {
    s.chars()
        .filter(|c| !matches!(*c, '\u{FE0F}' | '\u{200D}') && !c.is_whitespace())
        .count()
}

fn take_symbols(s: &str, n: usize) -> String {
    let mut out = String::new();
    let mut seen = 0;
    for c in s.chars().filter(|c| !c.is_whitespace()) {
        let counts = !matches!(c, '\u{FE0F}' | '\u{200D}');
        if counts {
            if seen == n {
                break;
            }
            seen += 1;
        }
        out.push(c);
    }
    out
}

/// Parses the `DESCRIPTION:` / `EMOJI:` answer format.
fn parse_llm_answer(answer: &str) -> (Option<String>, Option<String>) {
    let mut description = None;
    let mut emoji = None;
    for line in answer.lines() {
        let line = line.trim();
        let lower = line.to_lowercase();
        if lower.starts_with("description:") {
            description = Some(line["description:".len()..].trim().to_owned());
        } else if lower.starts_with("emoji:") {
            emoji = Some(line["emoji:".len()..].trim().to_owned());
        }
    }
    if description.is_none() {
        description = answer
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .map(str::to_owned);
    }
    (
        description.filter(|d| !d.is_empty()),
        emoji.filter(|e| !e.is_empty()),
    )
}

pub enum SummaryBackend {
    Fallback,
    Llm(Arc<dyn LanguageModel>),
}

impl SummaryBackend {
    fn tag(&self) -> String {
        match self {
            SummaryBackend::Fallback => "fallback".into(),
            SummaryBackend::Llm(m) => m.tag(),
        }
    }
}

pub enum EmbedBackend {
    Fallback,
    Remote(Arc<dyn EmbeddingModel>),
}

impl EmbedBackend {
    fn tag(&self) -> String {
        match self {
            EmbedBackend::Fallback => "fallback-hash-v1".into(),
            EmbedBackend::Remote(m) => m.tag(),
        }
    }
}

fn pool(parallelism: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool")
}

/// Cached description generator.
pub struct Summarizer {
    backend: SummaryBackend,
    cache: Arc<SummaryCache>,
    calls: AtomicU64,
    pool: rayon::ThreadPool,
}

impl Summarizer {
    pub fn new(backend: SummaryBackend, cache: Arc<SummaryCache>, parallelism: usize) -> Self {
        Self {
            backend,
            cache,
            calls: AtomicU64::new(0),
            pool: pool(parallelism),
        }
    }

    pub fn offline() -> Self {
        Self::new(SummaryBackend::Fallback, Arc::new(SummaryCache::in_memory()), DEFAULT_PARALLELISM)
    }

    /// Builds the backend selected by `config`.
    pub fn from_config(
        config: &ProviderConfig,
        client: &ClientConfig,
        cache: Arc<SummaryCache>,
    ) -> Result<Self, ProviderError> {
        let backend = if config.offline {
            SummaryBackend::Fallback
        } else {
            let endpoint = config.llm.clone().ok_or(ProviderError::NotConfigured {
                service: "summary",
                var: ENV_LLM_URL,
            })?;
            SummaryBackend::Llm(Arc::new(HttpClient::new(endpoint, client.clone())))
        };
        Ok(Self::new(backend, cache, DEFAULT_PARALLELISM))
    }

    /// Backend invocations so far (cache hits excluded).
    pub fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn backend_tag(&self) -> String {
        self.backend.tag()
    }

    pub fn generate_description(
        &self,
        timeline: &Timeline,
        req: &SummaryRequest,
    ) -> Result<Arc<SummaryResult>, SummarizeError> {
        let ops = resolve(timeline, &req.behavior)?;
        if ops.is_empty() {
            return Err(SummarizeError::EmptyBehavior);
        }
        let prompt = render_prompt_ops(timeline, &req.behavior, &ops, req.budget);
        let key = digest(&[
            PROMPT_TEMPLATE_VERSION,
            &self.backend.tag(),
            &req.budget.to_string(),
            &prompt,
        ]);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let result = match &self.backend {
            SummaryBackend::Fallback => fallback_from_ops(&ops, req.budget),
            SummaryBackend::Llm(model) => {
                let answer = model.complete(&prompt)?;
                let (description, emoji) = parse_llm_answer(&answer);
                let description = description.ok_or(SummarizeError::EmptyResponse)?;
                let mut warnings = Vec::new();
                let (description, cut) = truncate_to_budget(&description, req.budget);
                if cut {
                    tracing::warn!(budget = req.budget, "summary over budget, truncated");
                    warnings.push(format!("description truncated to {} characters", req.budget));
                }
                let emoji = match emoji {
                    Some(e) if symbol_count(&e) <= 3 => e,
                    Some(e) => {
                        warnings.push("emoji cut to three symbols".into());
                        take_symbols(&e, 3)
                    }
                    None => {
                        warnings.push("no emoji in answer; used keyword table".into());
                        fallback_from_ops(&ops, req.budget).emoji
                    }
                };
                SummaryResult {
                    description,
                    emoji,
                    provider: ProviderKind::Llm,
                    content_hash: content_hash(&ops),
                    warnings,
                }
            }
        };
        Ok(self.cache.insert(key, result)?)
    }

    /// Summarizes many requests with bounded parallelism, preserving order.
    pub fn generate_all(
        &self,
        timeline: &Timeline,
        reqs: &[SummaryRequest],
    ) -> Vec<Result<Arc<SummaryResult>, SummarizeError>> {
        let breaker = Breaker::default();
        let provider = |e: &SummarizeError| match e {
            SummarizeError::Provider(p) => Some(p.clone()),
            _ => None,
        };
        self.pool.install(|| {
            reqs.par_iter()
                .map(|r| breaker.run(|| self.generate_description(timeline, r), provider, SummarizeError::Provider))
                .collect()
        })
    }
}

/// Cached embedding service front.
pub struct Embedder {
    backend: EmbedBackend,
    cache: Arc<EmbeddingCache>,
    calls: AtomicU64,
    pool: rayon::ThreadPool,
}

impl Embedder {
    pub fn new(backend: EmbedBackend, cache: Arc<EmbeddingCache>, parallelism: usize) -> Self {
        Self {
            backend,
            cache,
            calls: AtomicU64::new(0),
            pool: pool(parallelism),
        }
    }

    pub fn offline() -> Self {
        Self::new(EmbedBackend::Fallback, Arc::new(EmbeddingCache::in_memory()), DEFAULT_PARALLELISM)
    }

    pub fn from_config(
        config: &ProviderConfig,
        client: &ClientConfig,
        cache: Arc<EmbeddingCache>,
    ) -> Result<Self, ProviderError> {
        let backend = if config.offline {
            EmbedBackend::Fallback
        } else {
            let endpoint = config.embed.clone().ok_or(ProviderError::NotConfigured {
                service: "embedding",
                var: ENV_EMBED_URL,
            })?;
            EmbedBackend::Remote(Arc::new(HttpClient::new(endpoint, client.clone())))
        };
        Ok(Self::new(backend, cache, DEFAULT_PARALLELISM))
    }

    pub fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn backend_tag(&self) -> String {
        self.backend.tag()
    }

    fn key(&self, text: &str) -> cache::CacheKey {
        digest(&[&self.backend.tag(), text])
    }

    /// Cache-only lookup.
    pub fn cached(&self, text: &str) -> Option<Arc<EmbeddingVector>> {
        if text.trim().is_empty() {
            return Some(Arc::new(EmbeddingVector::degenerate(EMBEDDING_DIM)));
        }
        self.cache.get(&self.key(text))
    }

    /// Unit-norm embedding of `text`; blank text yields the degenerate
    /// vector without a service call.
    pub fn embed_text(&self, text: &str) -> Result<Arc<EmbeddingVector>, EmbedError> {
        if text.trim().is_empty() {
            return Ok(Arc::new(EmbeddingVector::degenerate(EMBEDDING_DIM)));
        }
        let key = self.key(text);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let vector = match &self.backend {
            EmbedBackend::Fallback => fallback_embed(text),
            EmbedBackend::Remote(model) => {
                let raw = model.embed(text)?;
                if raw.len() != EMBEDDING_DIM {
                    return Err(EmbedError::Dimension {
                        expected: EMBEDDING_DIM,
                        got: raw.len(),
                    });
                }
                EmbeddingVector::normalized(raw).map_err(|_| EmbedError::NonFinite)?
            }
        };
        Ok(self.cache.insert(key, vector)?)
    }

    pub fn embed_all(&self, texts: &[&str]) -> Vec<Result<Arc<EmbeddingVector>, EmbedError>> {
        let breaker = Breaker::default();
        let provider = |e: &EmbedError| match e {
            EmbedError::Provider(p) => Some(p.clone()),
            _ => None,
        };
        self.pool.install(|| {
            texts
                .par_iter()
                .map(|t| breaker.run(|| self.embed_text(t), provider, EmbedError::Provider))
                .collect()
        })
    }
}
