//! First principal component of an agent's per-tick behavior embeddings,
//! printed as a text plot with the segment boundaries marked.
//!
//! cargo run -p agentlens-core --example pca_diagnostic -- [agent] [N]

use agentlens_core::model::AgentId;
use agentlens_core::segment::{pca_first_component, point_behaviors, segment_timeline, SegmentationParams};
use agentlens_core::summarize::{Embedder, Summarizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let agent = AgentId::from(args.next().unwrap_or_else(|| "sam".into()).as_str());
    let n = args.next().map_or(Ok(5), |s| s.parse())?;
    let log = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl"))?;
    let timeline = agentlens_core::ingest::parse_bytes(&log).0.ok_or("fixture is invalid")?;
    let (s, e) = (Summarizer::offline(), Embedder::offline());
    let range = timeline.bounds();

    let (points, _) = point_behaviors(&timeline, &s, &e, &agent, range)?;
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|b| b.embedding.as_ref().expect("embedded").values().to_vec())
        .collect();
    let pc = pca_first_component(&rows)?;
    let seg = segment_timeline(&timeline, &s, &e, &agent, range, &SegmentationParams::with_target(n))?;
    let (lo, hi) = pc.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    for (b, x) in points.iter().zip(&pc) {
        let col = if hi > lo { ((x - lo) / (hi - lo) * 50.0).round() as usize } else { 0 };
        let mark = if seg.change_points.contains(&b.range.start) { '>' } else { ' ' };
        println!("{mark}{:>4} {}*", b.range.start, " ".repeat(col));
    }
    Ok(())
}
