//! Explicit and implicit causes of one operation, with their texts.
//!
//! cargo run -p agentlens-core --example trace_causes -- [t,agent,op_index] [delta] [sameAgent|allAgents]

use agentlens_core::causetrace::{trace_causes, ImplicitOptions, Scope};
use agentlens_core::model::OperationRef;
use agentlens_core::summarize::Embedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let r: OperationRef = args.next().unwrap_or_else(|| "149,ayesha,0".into()).parse()?;
    let delta = args.next().map_or(Ok(0.85), |s| s.parse())?;
    let scope: Scope = args.next().unwrap_or_else(|| "allAgents".into()).parse()?;
    let log = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl"))?;
    let timeline = agentlens_core::ingest::parse_bytes(&log).0.ok_or("fixture is invalid")?;

    let op = timeline.operation(&r).ok_or("no such operation")?;
    println!("{r} [{}] {}", op.kind.as_str(), op.text);
    let opts = ImplicitOptions {
        delta,
        scope,
        max_edges: Some(10),
    };
    let set = trace_causes(&timeline, &Embedder::offline(), &r, &opts)?;
    for e in set.explicit.iter().chain(&set.implicit) {
        let text = &timeline.operation(&e.src).expect("edges resolve").text;
        println!("  {:?} {:.3} {} {text}", e.kind, e.similarity, e.src);
    }
    for w in &set.warnings {
        println!("  warning: {w}");
    }
    Ok(())
}
