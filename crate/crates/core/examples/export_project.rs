//! Runs the offline pipeline into a fresh project directory and writes the
//! export document.
//!
//! cargo run -p agentlens-core --example export_project -- [log.jsonl] [out.json]

use std::path::PathBuf;

use agentlens_core::export::{export_project, EXPORT_SEGMENTS};
use agentlens_core::project::{ingest_into, Access, Project};
use agentlens_core::summarize::provider::ProviderConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let log = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/smalltown.jsonl").into());
    let out = args.next().map(PathBuf::from);

    let dir = tempfile::tempdir()?;
    let (info, report) = ingest_into(&std::fs::read(&log)?, dir.path())?;
    println!("project {} ({} warnings)", info.id, report.warnings.len());

    let project = Project::open(dir.path(), Access::Exclusive, &ProviderConfig::offline())?;
    let stage = project.summarize_all()?;
    println!(
        "summarized {} time points, embedded {} operations",
        stage.time_points, stage.operations_embedded
    );
    let doc = export_project(&project, EXPORT_SEGMENTS)?;
    let json = doc.to_json();
    println!(
        "{} segmentations, {} cause edges, {} behavior edges, {} bytes",
        doc.segmentations.len(),
        doc.cause_edges.len(),
        doc.behavior_edges.edges.len(),
        json.len()
    );
    if let Some(out) = out {
        std::fs::write(out, json)?;
    }
    Ok(())
}
