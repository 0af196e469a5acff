//! Storyline-style outline layout: one band per location, one lane per
//! agent inside a band, plus interaction areas, segment markers and
//! memory highlights.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{AgentId, LocationId, TimeInterval, TimePoint, Timeline};
use crate::search::SearchHit;
use crate::segment::SegmentationResult;

/// Shortest shared stay that counts as colocation, in ticks.
pub const DEFAULT_MIN_DWELL: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Conversation,
    Colocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InteractionArea {
    pub agents: Vec<AgentId>,
    pub time_range: TimeInterval,
    pub location: LocationId,
    pub kind: InteractionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Band {
    pub location: LocationId,
    pub name: String,
    /// Lane `i` of this band sits at `first_lane + i`.
    pub first_lane: u32,
    pub lanes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ControlPoint {
    pub time: TimePoint,
    pub lane_y: u32,
    pub location: LocationId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentCurve {
    pub agent: AgentId,
    pub points: Vec<ControlPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SegmentMarker {
    pub time: TimePoint,
    pub range: TimeInterval,
    pub emoji: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentMarkers {
    pub agent: AgentId,
    pub markers: Vec<SegmentMarker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutlineLayout {
    pub range: TimeInterval,
    pub agents: Vec<AgentId>,
    pub target_segments: usize,
    pub bands: Vec<Band>,
    pub curves: Vec<AgentCurve>,
    pub interaction_areas: Vec<InteractionArea>,
    pub segment_markers: Vec<AgentMarkers>,
    pub memory_highlights: Vec<SearchHit>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("no agents selected")]
    EmptySelection,
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("range {range} is empty or outside project bounds {bounds}")]
    BadRange { range: TimeInterval, bounds: TimeInterval },
    #[error("agent `{agent}` has no location at t={time}")]
    NoState { agent: AgentId, time: TimePoint },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutOptions {
    pub min_dwell: u64,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        Self {
            min_dwell: DEFAULT_MIN_DWELL,
        }
    }
}

/// Location of every selected agent at every tick of `range`.
fn locations(
    timeline: &Timeline,
    agents: &[AgentId],
    range: TimeInterval,
) -> Result<Vec<Vec<LocationId>>, LayoutError> {
    range
        .iter()
        .map(|t| {
            agents
                .iter()
                .map(|a| {
                    timeline
                        .state_at(a, t)
                        .map(|s| s.location.clone())
                        .ok_or_else(|| LayoutError::NoState {
                            agent: a.clone(),
                            time: t,
                        })
                })
                .collect()
        })
        .collect()
}

/// Maximal runs of ticks with an identical (location, member set), at least
/// two members, turned into conversation and colocation areas.
pub fn interaction_areas(
    timeline: &Timeline,
    agents: &[AgentId],
    range: TimeInterval,
    opts: &LayoutOptions,
) -> Result<Vec<InteractionArea>, LayoutError> {
    let locs = locations(timeline, agents, range)?;
    let groups_at = |i: usize| -> BTreeMap<LocationId, BTreeSet<usize>> {
        let mut m: BTreeMap<LocationId, BTreeSet<usize>> = BTreeMap::new();
        for (a, loc) in locs[i].iter().enumerate() {
            m.entry(loc.clone()).or_default().insert(a);
        }
        m.retain(|_, members| members.len() >= 2);
        m
    };
    // Open runs keyed by (location, members) -> start index.
    let mut open: BTreeMap<(LocationId, BTreeSet<usize>), usize> = BTreeMap::new();
    let mut runs: Vec<(LocationId, BTreeSet<usize>, usize, usize)> = Vec::new();
    for i in 0..=locs.len() {
        let current: BTreeSet<(LocationId, BTreeSet<usize>)> = if i < locs.len() {
            groups_at(i).into_iter().collect()
        } else {
            BTreeSet::new()
        };
        let closed: Vec<_> = open.keys().filter(|k| !current.contains(*k)).cloned().collect();
        for key in closed {
            let start = open.remove(&key).expect("open run");
            runs.push((key.0, key.1, start, i));
        }
        for key in current {
            open.entry(key).or_insert(i);
        }
    }
    let mut areas = Vec::new();
    for (location, members, s, e) in runs {
        let time_range = TimeInterval::new(range.start.0 + s as u64, range.start.0 + e as u64);
        let mut chatters = BTreeSet::new();
        for &m in &members {
            for op in timeline.agent_operations(&agents[m], time_range) {
                for partner in op.chat_partners() {
                    if let Some(p) = members.iter().copied().find(|&p| agents[p] == partner && p != m) {
                        chatters.insert(m);
                        chatters.insert(p);
                    }
                }
            }
        }
        let names = |set: &BTreeSet<usize>| {
            let mut v: Vec<AgentId> = set.iter().map(|&i| agents[i].clone()).collect();
            v.sort();
            v
        };
        if chatters.len() >= 2 {
            areas.push(InteractionArea {
                agents: names(&chatters),
                time_range,
                location: location.clone(),
                kind: InteractionKind::Conversation,
            });
        }
        if time_range.len() >= opts.min_dwell && chatters != members {
            areas.push(InteractionArea {
                agents: names(&members),
                time_range,
                location,
                kind: InteractionKind::Colocation,
            });
        }
    }
    areas.sort_by(|a, b| {
        (a.time_range, &a.location, a.kind, &a.agents).cmp(&(b.time_range, &b.location, b.kind, &b.agents))
    });
    Ok(areas)
}

/// Crossings between consecutive ticks if `upper` is placed above `lower`.
fn crossings(upper: &[usize], lower: &[usize], prev: &[Option<u32>]) -> usize {
    let mut n = 0;
    for &a in upper {
        for &b in lower {
            if let (Some(pa), Some(pb)) = (prev[a], prev[b]) {
                if pa > pb {
                    n += 1;
                }
            }
        }
    }
    n
}

fn mean_prev(group: &[usize], prev: &[Option<u32>]) -> f64 {
    let known: Vec<f64> = group.iter().filter_map(|&a| prev[a]).map(f64::from).collect();
    if known.is_empty() {
        f64::INFINITY
    } else {
        known.iter().sum::<f64>() / known.len() as f64
    }
}

/// Assigns lanes and builds the full outline. `segmentations` supply the
/// segment markers; agents without one get no markers.
pub fn compute_outline_layout(
    timeline: &Timeline,
    range: TimeInterval,
    agents: &[AgentId],
    target_segments: usize,
    segmentations: &[SegmentationResult],
    highlights: &[SearchHit],
    opts: &LayoutOptions,
) -> Result<OutlineLayout, LayoutError> {
    if agents.is_empty() {
        return Err(LayoutError::EmptySelection);
    }
    if let Some(a) = agents.iter().find(|a| !timeline.has_agent(a.as_str())) {
        return Err(LayoutError::UnknownAgent(a.clone()));
    }
    let bounds = timeline.bounds();
    if range.is_empty() || !bounds.contains_interval(&range) {
        return Err(LayoutError::BadRange { range, bounds });
    }
    let mut agents: Vec<AgentId> = agents.to_vec();
    agents.sort();
    agents.dedup();

    let mut band_ids: BTreeSet<LocationId> = timeline.meta.locations.iter().map(|l| l.id.clone()).collect();
    let locs = locations(timeline, &agents, range)?;
    // States may name locations missing from the metadata; give them bands too.
    band_ids.extend(locs.iter().flatten().cloned());
    let lanes = agents.len() as u32;
    let bands: Vec<Band> = band_ids
        .iter()
        .enumerate()
        .map(|(i, id)| Band {
            location: id.clone(),
            name: timeline
                .meta
                .location(id.as_str())
                .map_or_else(|| id.to_string(), |l| l.name.clone()),
            first_lane: i as u32 * (lanes + 1),
            lanes,
        })
        .collect();
    let band_of: BTreeMap<&LocationId, &Band> = bands.iter().map(|b| (&b.location, b)).collect();

    let areas = interaction_areas(timeline, &agents, range, opts)?;

    let mut prev: Vec<Option<u32>> = vec![None; agents.len()];
    let mut curves: Vec<AgentCurve> = agents
        .iter()
        .map(|a| AgentCurve {
            agent: a.clone(),
            points: Vec::new(),
        })
        .collect();
    for (i, t) in range.iter().enumerate() {
        let mut lane_now: Vec<Option<u32>> = vec![None; agents.len()];
        let mut by_band: BTreeMap<&LocationId, Vec<usize>> = BTreeMap::new();
        for (a, loc) in locs[i].iter().enumerate() {
            by_band.entry(loc).or_default().push(a);
        }
        for (loc, members) in by_band {
            let groups = lane_groups(&agents, &members, loc, t, &areas, &prev);
            let band = band_of[loc];
            let mut lane = band.first_lane;
            for g in groups {
                for a in g {
                    lane_now[a] = Some(lane);
                    lane += 1;
                }
            }
        }
        for (a, curve) in curves.iter_mut().enumerate() {
            let y = lane_now[a].expect("every agent has a lane");
            if prev[a] != Some(y) || curve.points.is_empty() {
                curve.points.push(ControlPoint {
                    time: t,
                    lane_y: y,
                    location: locs[i][a].clone(),
                });
            }
        }
        prev = lane_now;
    }
    let last = locs.last().expect("non-empty range");
    for (a, curve) in curves.iter_mut().enumerate() {
        curve.points.push(ControlPoint {
            time: range.end,
            lane_y: prev[a].expect("lane"),
            location: last[a].clone(),
        });
    }

    let segment_markers = agents
        .iter()
        .map(|a| AgentMarkers {
            agent: a.clone(),
            markers: segmentations
                .iter()
                .filter(|s| &s.agent == a)
                .flat_map(|s| s.segments.iter())
                .filter(|seg| range.contains_interval(&seg.range))
                .map(|seg| SegmentMarker {
                    time: seg.range.start,
                    range: seg.range,
                    emoji: seg.emoji.clone().unwrap_or_default(),
                    description: seg.description.clone().unwrap_or_default(),
                })
                .collect(),
        })
        .collect();
    let memory_highlights = highlights
        .iter()
        .filter(|h| range.contains(h.time) && agents.contains(&h.agent))
        .cloned()
        .collect();

    Ok(OutlineLayout {
        range,
        agents,
        target_segments,
        bands,
        curves,
        interaction_areas: areas,
        segment_markers,
        memory_highlights,
    })
}

/// Groups of agents (indices) that share adjacent lanes in one band at one
/// tick, ordered top to bottom.
fn lane_groups(
    agents: &[AgentId],
    members: &[usize],
    loc: &LocationId,
    t: TimePoint,
    areas: &[InteractionArea],
    prev: &[Option<u32>],
) -> Vec<Vec<usize>> {
    let covering: Vec<&InteractionArea> = areas
        .iter()
        .filter(|a| &a.location == loc && a.time_range.contains(t))
        .collect();
    let index = |id: &AgentId| members.iter().copied().find(|&m| &agents[m] == id);
    let mut assigned: BTreeSet<usize> = BTreeSet::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    // Conversation partners first, then the rest of a colocated group.
    let mut order: Vec<&InteractionArea> = covering.clone();
    order.sort_by_key(|a| a.kind);
    for area in order {
        let mut g: Vec<usize> = area
            .agents
            .iter()
            .filter_map(index)
            .filter(|m| !assigned.contains(m))
            .collect();
        if g.is_empty() {
            continue;
        }
        if area.kind == InteractionKind::Colocation {
            // Attach to the conversation group that lives inside it, if any.
            if let Some(host) = groups.iter_mut().find(|h| h.iter().all(|m| area.agents.contains(&agents[*m]))) {
                sort_members(&mut g, agents, prev);
                assigned.extend(g.iter().copied());
                host.extend(g);
                continue;
            }
        }
        sort_members(&mut g, agents, prev);
        assigned.extend(g.iter().copied());
        groups.push(g);
    }
    for &m in members {
        if !assigned.contains(&m) {
            groups.push(vec![m]);
        }
    }
    groups.sort_by(|a, b| {
        mean_prev(a, prev)
            .total_cmp(&mean_prev(b, prev))
            .then_with(|| agents[a[0]].cmp(&agents[b[0]]))
    });
    // Greedy adjacent swaps while they remove crossings.
    let mut improved = true;
    let mut rounds = 0;
    while improved && rounds < groups.len() * groups.len() + 1 {
        improved = false;
        rounds += 1;
        for i in 0..groups.len().saturating_sub(1) {
            let keep = crossings(&groups[i], &groups[i + 1], prev);
            let swap = crossings(&groups[i + 1], &groups[i], prev);
            if swap < keep {
                groups.swap(i, i + 1);
                improved = true;
            }
        }
    }
    groups
}

fn sort_members(g: &mut [usize], agents: &[AgentId], prev: &[Option<u32>]) {
    g.sort_by(|&a, &b| {
        let pa = prev[a].map_or(u32::MAX, |x| x);
        let pb = prev[b].map_or(u32::MAX, |x| x);
        pa.cmp(&pb).then_with(|| agents[a].cmp(&agents[b]))
    });
}
