//! Memory search over the fixture, lexical by default.
//!
//! cargo run -p agentlens-core --example memory_search -- [query] [lexical|semantic] [threshold]

use agentlens_core::search::{memory_search, SearchMode, SearchOptions};
use agentlens_core::summarize::Embedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let query = args.next().unwrap_or_else(|| "party".into());
    let mode: SearchMode = args.next().unwrap_or_else(|| "lexical".into()).parse()?;
    let mut opts = SearchOptions {
        mode,
        ..SearchOptions::default()
    };
    if let Some(t) = args.next() {
        opts.threshold = t.parse()?;
    }
    let log = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl"))?;
    let timeline = agentlens_core::ingest::parse_bytes(&log).0.ok_or("fixture is invalid")?;

    // Semantic mode needs operation embeddings; fill them first.
    let embedder = Embedder::offline();
    let texts: Vec<&str> = timeline.all_operations().map(|o| o.text.as_str()).collect();
    for r in embedder.embed_all(&texts) {
        r?;
    }
    let hits = memory_search(&timeline, Some(&embedder), &query, &opts)?;
    println!("{} hits for {query:?}", hits.len());
    for h in &hits {
        let op = timeline.operation(&h.op_ref()).expect("hits resolve");
        println!("  t={:<3} {:<9} {:.3} {}", h.time, h.agent, h.score, op.text);
    }
    Ok(())
}
