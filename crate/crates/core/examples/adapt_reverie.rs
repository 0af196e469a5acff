//! Converts a Reverie simulation directory into a native log and checks
//! that it ingests cleanly.
//!
//! cargo run -p agentlens-core --example adapt_reverie -- [dir] [out.jsonl]

use agentlens_core::ingest::{adapt_reverie, parse_bytes};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/reverie_sample").into());
    let log = adapt_reverie(dir.as_ref())?;
    let (timeline, report) = parse_bytes(log.as_bytes());
    eprintln!(
        "{} states, {} operations, {} errors",
        report.counts.state,
        report.counts.op,
        report.errors.len()
    );
    for e in &report.errors {
        eprintln!("  {e}");
    }
    if timeline.is_none() {
        return Err("adapted log failed validation".into());
    }
    match args.next() {
        Some(out) => std::fs::write(out, log)?,
        None => print!("{log}"),
    }
    Ok(())
}
