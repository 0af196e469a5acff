//! Validates a native log and prints record counts and diagnostics.
//!
//! cargo run -p agentlens-core --example validate_log -- [log.jsonl]

use agentlens_core::ingest::parse_bytes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl").into());
    let (timeline, report) = parse_bytes(&std::fs::read(&path)?);
    let c = &report.counts;
    println!("{} meta, {} env, {} state, {} op records", c.meta, c.env, c.state, c.op);
    for d in report.errors.iter().chain(&report.warnings) {
        println!("  {d}");
    }
    match timeline {
        Some(tl) => println!("valid: {} agents over {}", tl.agent_ids().count(), tl.bounds()),
        None => {
            println!("invalid");
            std::process::exit(2);
        }
    }
    Ok(())
}
