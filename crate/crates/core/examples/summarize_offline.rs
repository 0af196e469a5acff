//! Offline behavior summary for one agent over a range, with the prompt a
//! language model would receive.
//!
//! cargo run -p agentlens-core --example summarize_offline -- [agent] [from] [to]

use agentlens_core::model::{AgentId, TimeInterval};
use agentlens_core::summarize::{render_prompt, Summarizer, SummaryRequest, DEFAULT_BUDGET, PROMPT_TEMPLATE_VERSION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let agent = AgentId::from(args.next().unwrap_or_else(|| "sam".into()).as_str());
    let from = args.next().map_or(Ok(100), |s| s.parse())?;
    let to = args.next().map_or(Ok(110), |s| s.parse())?;
    let log = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl"))?;
    let timeline = agentlens_core::ingest::parse_bytes(&log).0.ok_or("fixture is invalid")?;

    let behavior = timeline.behavior_of(&agent, TimeInterval::new(from, to))?;
    println!("--- prompt ({PROMPT_TEMPLATE_VERSION}) ---");
    println!("{}", render_prompt(&timeline, &behavior, DEFAULT_BUDGET)?);
    let result = Summarizer::offline().generate_description(&timeline, &SummaryRequest::new(behavior))?;
    println!("--- offline summary ---");
    println!("{} {}", result.emoji, result.description);
    Ok(())
}
