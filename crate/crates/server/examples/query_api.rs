//! Builds the router over a fresh copy of the fixture project and prints
//! the reply to a few requests, without binding a port.
//!
//! cargo run -p agentlens-server --example query_api -- [path-and-query ...]

use agentlens_core::project::ProjectStore;
use agentlens_core::summarize::provider::ProviderConfig;
use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let store = ProjectStore::new(Some(root.path().to_owned()), ProviderConfig::offline());
    let log = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/smalltown.jsonl"))?;
    let (info, _) = store.create(&log)?;
    let app = agentlens_server::router(agentlens_server::AppState::new(store));

    let mut paths: Vec<String> = std::env::args().skip(1).collect();
    if paths.is_empty() {
        paths = ["/agents", "/search?q=party", "/operations/149/ayesha/0/causes", "/monitor?t=120&focus=sam"]
            .map(String::from)
            .to_vec();
    }
    for path in paths {
        let uri = format!("/projects/{}{path}", info.id);
        let resp = app.clone().oneshot(Request::get(&uri).body(Body::empty())?).await?;
        let status = resp.status();
        let body = resp.into_body().collect().await?.to_bytes();
        println!("GET {uri} -> {status}");
        let pretty = serde_json::from_slice::<serde_json::Value>(&body)
            .map(|v| serde_json::to_string_pretty(&v).unwrap_or_default())
            .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
        println!("{pretty}\n");
    }
    Ok(())
}
