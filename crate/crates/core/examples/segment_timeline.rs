//! Segments every agent of a log offline and prints the segment markers.
//!
//! cargo run -p agentlens-core --example segment_timeline -- [log.jsonl] [N] [from] [to]

use std::fs::File;

use agentlens_core::ingest::parse_log;
use agentlens_core::model::TimeInterval;
use agentlens_core::segment::{segment_timeline, SegmentationParams};
use agentlens_core::summarize::{Embedder, Summarizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl").into());
    let n: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let (timeline, _) = parse_log(File::open(path)?)?;
    let bounds = timeline.bounds();
    let from = args.next().map_or(Ok(bounds.start.0), |s| s.parse())?;
    let to = args.next().map_or(Ok(bounds.end.0), |s| s.parse())?;
    let range = TimeInterval::new(from, to);

    let summarizer = Summarizer::offline();
    let embedder = Embedder::offline();
    for agent in timeline.agent_ids() {
        let result = match segment_timeline(&timeline, &summarizer, &embedder, agent, range, &SegmentationParams::with_target(n)) {
            Ok(r) => r,
            Err(e) => {
                println!("{agent}: {e}");
                continue;
            }
        };
        println!(
            "{agent} ({} points, w={}): {} segments",
            result.sequence_len,
            result.params.window_width,
            result.segments.len()
        );
        for s in &result.segments {
            println!(
                "  {:>9} {} {}",
                s.range.to_string(),
                s.emoji.as_deref().unwrap_or(""),
                s.description.as_deref().unwrap_or("")
            );
        }
    }
    Ok(())
}
