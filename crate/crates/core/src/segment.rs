//! Kernel change-point segmentation of per-agent embedding sequences.
//!
//! A behavior sequence is split where the within-window scatter drops most
//! when a window is cut in two (window-based detection, "WIN"), picking
//! peaks of the discrepancy curve greedily.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, l2_norm, EmbeddingVector, DEGENERATE_NORM};
use crate::model::{AgentId, Behavior, BehaviorError, TimeInterval, TimePoint, Timeline};
use crate::summarize::{EmbedError, Embedder, SummarizeError, Summarizer, SummaryRequest};

/// Default number of segments per outline.
pub const DEFAULT_TARGET_SEGMENTS: usize = 10;

/// Smallest discrepancy that counts as a peak.
pub const MIN_PEAK_SCORE: f64 = 1e-9;

/// Scores within this distance are treated as equal.
pub const SCORE_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("invalid segment [{a}, {b}) for a sequence of length {len}")]
    InvalidRange { a: usize, b: usize, len: usize },
    #[error("split indices must satisfy u < v < w <= {len}, got ({u}, {v}, {w})")]
    IndexOrder { u: usize, v: usize, w: usize, len: usize },
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(String),
    #[error("agent `{agent}` has no operations in {range}")]
    NoOperations { agent: AgentId, range: TimeInterval },
    #[error("sequence times must be strictly increasing")]
    UnorderedTimes,
    #[error("vectors have mixed dimensions ({0} and {1})")]
    MixedDimensions(usize, usize),
    #[error("principal components need at least two non-degenerate vectors, found {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Cosine similarity; zero when either vector is (numerically) zero.
pub fn cosine_kernel(x: &[f64], y: &[f64]) -> f64 {
    let nx = l2_norm(x);
    let ny = l2_norm(y);
    if nx < DEGENERATE_NORM || ny < DEGENERATE_NORM {
        return 0.0;
    }
    dot(x, y) / (nx * ny)
}

/// Prefix sums of unit-normalized vectors, giving O(dim) segment costs.
///
/// With unit vectors the cosine kernel is a plain inner product, so
/// `c(a..b) = #{non-degenerate} - |S_b - S_a|^2 / (b - a)`.
#[derive(Debug, Clone)]
pub struct KernelCost {
    len: usize,
    dim: usize,
    /// `(len + 1) * dim`, row `i` is the sum of the first `i` unit vectors.
    prefix: Vec<f64>,
    live: Vec<usize>,
}

impl KernelCost {
    pub fn new<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self, SegmentError> {
        let dim = vectors.first().map_or(0, |v| v.as_ref().len());
        let len = vectors.len();
        let mut prefix = vec![0.0; (len + 1) * dim];
        let mut live = vec![0usize; len + 1];
        for (i, v) in vectors.iter().enumerate() {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(SegmentError::MixedDimensions(dim, v.len()));
            }
            let norm = l2_norm(v);
            let degenerate = !(norm >= DEGENERATE_NORM) || !norm.is_finite();
            live[i + 1] = live[i] + usize::from(!degenerate);
            let (head, tail) = prefix.split_at_mut((i + 1) * dim);
            let prev = &head[i * dim..];
            for (k, out) in tail[..dim].iter_mut().enumerate() {
                *out = prev[k] + if degenerate { 0.0 } else { v[k] / norm };
            }
        }
        Ok(Self { len, dim, prefix, live })
    }

    pub fn from_embeddings(vectors: &[Arc<EmbeddingVector>]) -> Result<Self, SegmentError> {
        let rows: Vec<&[f64]> = vectors.iter().map(|v| v.values()).collect();
        Self::new(&rows)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.prefix[i * self.dim..(i + 1) * self.dim]
    }

    fn sq_dist(&self, a: usize, b: usize) -> f64 {
        self.row(b)
            .iter()
            .zip(self.row(a))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }

    fn cost_unchecked(&self, a: usize, b: usize) -> f64 {
        (self.live[b] - self.live[a]) as f64 - self.sq_dist(a, b) / (b - a) as f64
    }

    fn discrepancy_unchecked(&self, u: usize, v: usize, w: usize) -> f64 {
        let mut left = 0.0;
        let mut right = 0.0;
        let mut whole = 0.0;
        let (su, sv, sw) = (self.row(u), self.row(v), self.row(w));
        for k in 0..self.dim {
            let l = sv[k] - su[k];
            let r = sw[k] - sv[k];
            left += l * l;
            right += r * r;
            whole += (l + r) * (l + r);
        }
        left / (v - u) as f64 + right / (w - v) as f64 - whole / (w - u) as f64
    }

    /// Within-segment scatter of elements `a..b` (zero-based, half-open).
    pub fn segment_cost(&self, a: usize, b: usize) -> Result<f64, SegmentError> {
        if a >= b || b > self.len {
            return Err(SegmentError::InvalidRange { a, b, len: self.len });
        }
        Ok(self.cost_unchecked(a, b))
    }

    /// Cost reduction from splitting `u..w` at `v`.
    pub fn discrepancy(&self, u: usize, v: usize, w: usize) -> Result<f64, SegmentError> {
        if !(u < v && v < w && w <= self.len) {
            return Err(SegmentError::IndexOrder { u, v, w, len: self.len });
        }
        Ok(self.discrepancy_unchecked(u, v, w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentationParams {
    pub target_segments: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<usize>,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self::with_target(DEFAULT_TARGET_SEGMENTS)
    }
}

/// Parameters with defaults filled in for a given sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResolvedParams {
    pub target_segments: usize,
    pub window_width: usize,
    pub min_separation: usize,
}

impl SegmentationParams {
    pub fn with_target(n: usize) -> Self {
        Self {
            target_segments: n,
            window_width: None,
            min_separation: None,
        }
    }

    pub fn window(mut self, w: usize) -> Self {
        self.window_width = Some(w);
        self
    }

    pub fn separation(mut self, s: usize) -> Self {
        self.min_separation = Some(s);
        self
    }

    /// Default window width `max(4, ceil(len / 2N))`.
    pub fn default_window(len: usize, n: usize) -> usize {
        len.div_ceil(2 * n.max(1)).max(4)
    }

    pub fn resolve(&self, len: usize) -> Result<ResolvedParams, SegmentError> {
        let n = self.target_segments;
        if n == 0 {
            return Err(SegmentError::InvalidParams("target segment count must be positive".into()));
        }
        let w = self.window_width.unwrap_or_else(|| Self::default_window(len, n));
        if w == 0 {
            return Err(SegmentError::InvalidParams("window width must be positive".into()));
        }
        let sep = self.min_separation.unwrap_or(w);
        if sep == 0 {
            return Err(SegmentError::InvalidParams("minimum separation must be positive".into()));
        }
        Ok(ResolvedParams {
            target_segments: n,
            window_width: w,
            min_separation: sep,
        })
    }
}

/// Change points of one WIN run, as sequence indices.
#[derive(Debug, Clone, PartialEq)]
pub struct WinOutput {
    pub params: ResolvedParams,
    /// Each index `i` starts a new segment at element `i`.
    pub change_indices: Vec<usize>,
    /// `(v, d(v))` for every candidate split.
    pub curve: Vec<(usize, f64)>,
}

/// Shorter sequences are scanned on the calling thread.
const PARALLEL_SCAN_MIN: usize = 1024;

fn scan(cost: &KernelCost, w: usize, from: usize) -> Vec<(usize, f64)> {
    let len = cost.len();
    if len < 2 * w || from > len - w {
        return Vec::new();
    }
    let range = from.max(w)..=len - w;
    let score = |v: usize| (v, cost.discrepancy_unchecked(v - w, v, v + w));
    if len < PARALLEL_SCAN_MIN {
        range.map(score).collect()
    } else {
        range.into_par_iter().map(score).collect()
    }
}

/// Greedy peak selection over a discrepancy curve.
pub fn select_peaks(curve: &[(usize, f64)], max_picks: usize, min_sep: usize) -> Vec<usize> {
    let is_peak = |i: usize| {
        let d = curve[i].1;
        d > MIN_PEAK_SCORE
            && (i == 0 || d >= curve[i - 1].1 - SCORE_EPS)
            && (i + 1 == curve.len() || d >= curve[i + 1].1 - SCORE_EPS)
    };
    let mut eligible: Vec<(usize, f64)> = (0..curve.len()).filter(|&i| is_peak(i)).map(|i| curve[i]).collect();
    let mut picks = Vec::new();
    while picks.len() < max_picks && !eligible.is_empty() {
        let best = eligible.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let (v, _) = *eligible
            .iter()
            .find(|p| p.1 >= best - SCORE_EPS)
            .expect("non-empty");
        picks.push(v);
        eligible.retain(|p| p.0.abs_diff(v) >= min_sep);
    }
    picks.sort_unstable();
    picks
}

/// Window-based change-point detection. Returns at most `N - 1` change
/// points; sequences shorter than two windows have none.
pub fn win_change_points(cost: &KernelCost, params: &SegmentationParams) -> Result<WinOutput, SegmentError> {
    let params = params.resolve(cost.len())?;
    let curve = scan(cost, params.window_width, 0);
    let change_indices = select_peaks(&curve, params.target_segments - 1, params.min_separation);
    Ok(WinOutput {
        params,
        change_indices,
        curve,
    })
}

/// Reruns detection after elements were appended, recomputing only the
/// curve entries whose windows reach the new tail. `previous` must come
/// from a prefix of the same sequence with the same resolved parameters.
pub fn win_change_points_appended(
    cost: &KernelCost,
    previous: &WinOutput,
    previous_len: usize,
) -> Result<WinOutput, SegmentError> {
    let params = previous.params;
    if previous_len > cost.len() {
        return Err(SegmentError::InvalidParams("previous sequence is longer than the current one".into()));
    }
    let w = params.window_width;
    // d(v) reads elements up to v + w - 1, so entries with v + w <= previous_len are unchanged.
    let keep_until = previous_len.saturating_sub(w);
    let mut curve: Vec<(usize, f64)> = previous
        .curve
        .iter()
        .copied()
        .filter(|(v, _)| *v <= keep_until)
        .collect();
    let from = curve.last().map_or(0, |(v, _)| v + 1);
    curve.extend(scan(cost, w, from));
    let change_indices = select_peaks(&curve, params.target_segments - 1, params.min_separation);
    Ok(WinOutput {
        params,
        change_indices,
        curve,
    })
}

/// Per-agent ordered per-time-point behavior embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingSequence {
    pub agent: AgentId,
    pub times: Vec<TimePoint>,
    pub vectors: Vec<Arc<EmbeddingVector>>,
}

impl EmbeddingSequence {
    pub fn new(agent: AgentId, times: Vec<TimePoint>, vectors: Vec<Arc<EmbeddingVector>>) -> Result<Self, SegmentError> {
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SegmentError::UnorderedTimes);
        }
        if times.len() != vectors.len() {
            return Err(SegmentError::InvalidParams("times and vectors differ in length".into()));
        }
        Ok(Self { agent, times, vectors })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn cost(&self) -> Result<KernelCost, SegmentError> {
        KernelCost::from_embeddings(&self.vectors)
    }

    pub fn degenerate_count(&self) -> usize {
        self.vectors.iter().filter(|v| v.is_degenerate()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CurvePoint {
    pub index: usize,
    pub time: TimePoint,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentationResult {
    pub agent: AgentId,
    pub range: TimeInterval,
    pub params: ResolvedParams,
    /// Number of per-time-point behaviors that were segmented.
    pub sequence_len: usize,
    pub change_points: Vec<TimePoint>,
    pub segments: Vec<Behavior>,
    pub discrepancy_curve: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SegmentationResult {
    /// Index of the segment containing `t`.
    pub fn segment_index(&self, t: TimePoint) -> Option<usize> {
        self.segments.iter().position(|s| s.range.contains(t))
    }
}

/// Per-time-point behaviors of `agent` over `range`, summarized and embedded.
pub fn point_behaviors(
    timeline: &Timeline,
    summarizer: &Summarizer,
    embedder: &Embedder,
    agent: &AgentId,
    range: TimeInterval,
) -> Result<(Vec<Behavior>, EmbeddingSequence), SegmentError> {
    let times = timeline.agent_active_times(agent, range);
    if times.is_empty() {
        // Distinguish bad input from an idle range.
        timeline.behavior_of(agent, range)?;
        return Err(SegmentError::NoOperations {
            agent: agent.clone(),
            range,
        });
    }
    let requests = times
        .iter()
        .map(|t| Ok(SummaryRequest::new(timeline.behavior_of(agent, TimeInterval::new(t.0, t.0 + 1))?)))
        .collect::<Result<Vec<_>, BehaviorError>>()?;
    let summaries = summarizer
        .generate_all(timeline, &requests)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let texts: Vec<&str> = summaries.iter().map(|s| s.description.as_str()).collect();
    let vectors = embedder
        .embed_all(&texts)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let behaviors = requests
        .into_iter()
        .zip(&summaries)
        .zip(&vectors)
        .map(|((req, s), v)| Behavior {
            description: Some(s.description.clone()),
            emoji: Some(s.emoji.clone()),
            embedding: Some((**v).clone()),
            ..req.behavior
        })
        .collect();
    let seq = EmbeddingSequence::new(agent.clone(), times, vectors)?;
    Ok((behaviors, seq))
}

/// Segments one agent's timeline over `range` into at most `N` summarized
/// behaviors. Calling it on a sub-range reruns everything on that range.
pub fn segment_timeline(
    timeline: &Timeline,
    summarizer: &Summarizer,
    embedder: &Embedder,
    agent: &AgentId,
    range: TimeInterval,
    params: &SegmentationParams,
) -> Result<SegmentationResult, SegmentError> {
    let (points, seq) = point_behaviors(timeline, summarizer, embedder, agent, range)?;
    let mut warnings = Vec::new();
    let degenerate = seq.degenerate_count();
    if degenerate > 0 {
        warnings.push(format!("{degenerate} time points have empty embeddings"));
    }
    let win = win_change_points(&seq.cost()?, params)?;
    let change_points: Vec<TimePoint> = win.change_indices.iter().map(|&i| seq.times[i]).collect();

    let mut bounds = vec![range.start.0];
    bounds.extend(change_points.iter().map(|t| t.0));
    bounds.push(range.end.0);
    let segments = if change_points.is_empty() && points.len() == 1 && range.len() == 1 {
        points
            .into_iter()
            .map(|b| Behavior { embedding: None, ..b })
            .collect()
    } else {
        let ranges: Vec<TimeInterval> = bounds.windows(2).map(|b| TimeInterval::new(b[0], b[1])).collect();
        let requests = ranges
            .iter()
            .map(|r| Ok(SummaryRequest::new(timeline.behavior_of(agent, *r)?)))
            .collect::<Result<Vec<_>, BehaviorError>>()?;
        let summaries = summarizer.generate_all(timeline, &requests);
        requests
            .into_iter()
            .zip(summaries)
            .map(|(req, s)| {
                let s = s?;
                Ok(Behavior {
                    description: Some(s.description.clone()),
                    emoji: Some(s.emoji.clone()),
                    ..req.behavior
                })
            })
            .collect::<Result<Vec<_>, SegmentError>>()?
    };
    let discrepancy_curve = win
        .curve
        .iter()
        .map(|&(index, score)| CurvePoint {
            index,
            time: seq.times[index],
            score,
        })
        .collect();
    Ok(SegmentationResult {
        agent: agent.clone(),
        range,
        params: win.params,
        sequence_len: seq.len(),
        change_points,
        segments,
        discrepancy_curve,
        warnings,
    })
}

/// Projections onto the first principal component, by power iteration on
/// the centered data. Sign: first nonzero loading positive. Identical
/// vectors project to zero.
pub fn pca_first_component<V: AsRef<[f64]>>(rows: &[V]) -> Result<Vec<f64>, SegmentError> {
    let n = rows.len();
    if n < 2 {
        return Err(SegmentError::TooFewPoints(n));
    }
    let dim = rows[0].as_ref().len();
    if let Some(r) = rows.iter().find(|r| r.as_ref().len() != dim) {
        return Err(SegmentError::MixedDimensions(dim, r.as_ref().len()));
    }
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.as_ref().iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let norms: Vec<f64> = centered.iter().map(|r| l2_norm(r)).collect();
    let (start, &largest) = norms
        .iter()
        .enumerate()
        .fold((0, &0.0), |best, (i, x)| if *x > *best.1 { (i, x) } else { best });
    if largest < 1e-12 {
        return Ok(vec![0.0; n]);
    }
    let mut v: Vec<f64> = centered[start].iter().map(|x| x / largest).collect();
    for _ in 0..1000 {
        let scores: Vec<f64> = centered.iter().map(|r| dot(r, &v)).collect();
        let mut next = vec![0.0; dim];
        for (r, s) in centered.iter().zip(&scores) {
            for (o, x) in next.iter_mut().zip(r) {
                *o += s * x;
            }
        }
        let norm = l2_norm(&next);
        if norm < 1e-300 {
            break;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-13 {
            break;
        }
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(centered.iter().map(|r| dot(r, &v)).collect())
}

/// PCA over a sequence; degenerate points get no projection.
pub fn sequence_pca(seq: &EmbeddingSequence) -> Result<Vec<Option<f64>>, SegmentError> {
    let live: Vec<&[f64]> = seq
        .vectors
        .iter()
        .filter(|v| !v.is_degenerate())
        .map(|v| v.values())
        .collect();
    let mut projected = pca_first_component(&live)?.into_iter();
    Ok(seq
        .vectors
        .iter()
        .map(|v| if v.is_degenerate() { None } else { projected.next() })
        .collect())
}
