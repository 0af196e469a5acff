//! Where every agent is at one tick, optionally centered on one of them.
//!
//! cargo run -p agentlens-core --example monitor_frame -- [t] [focus]

use agentlens_core::model::{AgentId, TimePoint};
use agentlens_core::monitor::monitor_frame;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let t = TimePoint(args.next().map_or(Ok(120), |s| s.parse())?);
    let focus = args.next().map(|a| AgentId::from(a.as_str()));
    let log = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl"))?;
    let timeline = agentlens_core::ingest::parse_bytes(&log).0.ok_or("fixture is invalid")?;

    let frame = monitor_frame(&timeline, t, focus.as_ref())?;
    println!("t={}", frame.time);
    for a in &frame.agents {
        println!("  {:<9} {:<14} {:?} since {}", a.agent, a.location, a.position, a.since);
    }
    if let Some(f) = &frame.focus {
        println!("focus {} in {} bounds {:?}", f.agent, f.location, f.bounds);
    }
    Ok(())
}
