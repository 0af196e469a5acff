//! Outline layout for all agents: location bands, interaction areas and
//! segment markers, with search hits highlighted.
//!
//! cargo run -p agentlens-core --example outline_layout -- [from] [to] [N] [query]

use agentlens_core::layout::{compute_outline_layout, LayoutOptions};
use agentlens_core::model::{AgentId, TimeInterval};
use agentlens_core::search::{memory_search, SearchOptions};
use agentlens_core::segment::{segment_timeline, SegmentationParams};
use agentlens_core::summarize::{Embedder, Summarizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let from = args.next().map_or(Ok(0), |s| s.parse())?;
    let to = args.next().map_or(Ok(200), |s| s.parse())?;
    let n = args.next().map_or(Ok(10), |s| s.parse())?;
    let query = args.next().unwrap_or_else(|| "party".into());
    let log = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl"))?;
    let timeline = agentlens_core::ingest::parse_bytes(&log).0.ok_or("fixture is invalid")?;

    let range = TimeInterval::new(from, to);
    let agents: Vec<AgentId> = timeline.agent_ids().cloned().collect();
    let (s, e) = (Summarizer::offline(), Embedder::offline());
    let segs = agents
        .iter()
        .map(|a| segment_timeline(&timeline, &s, &e, a, range, &SegmentationParams::with_target(n)))
        .collect::<Result<Vec<_>, _>>()?;
    let hits = memory_search(&timeline, None, &query, &SearchOptions::default())?;
    let layout = compute_outline_layout(&timeline, range, &agents, n, &segs, &hits, &LayoutOptions::default())?;

    for b in &layout.bands {
        println!("band {:<14} lanes {}..{}", b.location, b.first_lane, b.first_lane + b.lanes);
    }
    for a in &layout.interaction_areas {
        let who: Vec<&str> = a.agents.iter().map(|x| x.as_str()).collect();
        println!("{:?} {} at {}: {}", a.kind, a.time_range, a.location, who.join(", "));
    }
    for m in &layout.segment_markers {
        println!("{}:", m.agent);
        for k in &m.markers {
            println!("  {:>10} {} {}", k.range.to_string(), k.emoji, k.description);
        }
    }
    println!("{} highlighted memories for {query:?}", layout.memory_highlights.len());
    Ok(())
}
