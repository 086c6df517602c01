#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use evochain_api::{router, AppState};
use evochain_core::corpus::{self, Corpus, SOURCES_DIR};
use evochain_core::explorer::{ClientConfig, ExplorerClient, FakeClock, Transport, TransportError};
use evochain_core::graph::{GraphStore, SharedGraph};
use evochain_core::pipeline::{build_graph, BuildOptions};
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub struct Fixture {
    pub app: Router,
    pub graph: SharedGraph,
    pub corpus: Corpus,
    _dir: TempDir,
}

pub fn offline_client(dir: &std::path::Path) -> Arc<ExplorerClient> {
    Arc::new(ExplorerClient::new(ClientConfig::offline(dir)).unwrap())
}

pub fn fixture_from(corpus: Corpus) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    corpus.write(dir.path()).unwrap();
    let explorer = offline_client(&dir.path().join(SOURCES_DIR));
    let (store, _) = build_graph(&corpus.dataset, Some(&explorer), &BuildOptions::default()).unwrap();
    let graph = store.into_shared();
    let app = router(
        AppState {
            graph: graph.clone(),
            explorer,
        },
        Some("http://localhost:5173"),
    );
    Fixture {
        app,
        graph,
        corpus,
        _dir: dir,
    }
}

pub fn aba() -> Fixture {
    fixture_from(corpus::aba_fixture())
}

pub fn empty_app() -> Router {
    let dir = tempfile::tempdir().unwrap();
    router(
        AppState {
            graph: GraphStore::new().into_shared(),
            explorer: offline_client(dir.path()),
        },
        None,
    )
}

/// Always fails at the network layer.
pub struct Down;

impl Transport for Down {
    fn get(&self, _url: &str, _query: &[(&str, String)]) -> Result<String, TransportError> {
        Err(TransportError::Network("connection refused".into()))
    }
}

pub fn app_with_failing_upstream() -> Router {
    let explorer = ExplorerClient::with_parts(ClientConfig::default(), Arc::new(Down), Arc::new(FakeClock::new(0))).unwrap();
    router(
        AppState {
            graph: GraphStore::new().into_shared(),
            explorer: Arc::new(explorer),
        },
        None,
    )
}

pub async fn call(app: &Router, method: Method, uri: &str) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: non-JSON body ({e}): {bytes:?}"));
    (status, body)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri).await
}
