//! Read-only HTTP JSON API over an evolution graph snapshot.
//!
//! Routes live under `/api/v1`. Every non-2xx response carries an
//! [`ApiError`] body, including unknown routes and malformed query strings.

pub mod config;
pub mod error;
pub mod schemas;
pub mod subgraph;

use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, Method};
use axum::routing::get;
use axum::{Json, Router};
use evochain_core::detect::ProxyKind;
use evochain_core::explorer::{ExplorerClient, ExplorerError, SourceBundle};
use evochain_core::graph::{FindFilter, FindPage, LineageItem, Page, ProxyNode, SharedGraph, StoreStats, MAX_PAGE_LIMIT};
use evochain_core::types::Address;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use config::ServiceConfig;
pub use error::ApiError;
use subgraph::{Subgraph, DEFAULT_DEPTH, MAX_DEPTH};

#[derive(Clone)]
pub struct AppState {
    pub graph: SharedGraph,
    pub explorer: Arc<ExplorerClient>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineageResponse {
    pub proxy: ProxyNode,
    pub versions: Vec<LineageItem>,
}

pub fn router(state: AppState, cors_origin: Option<&str>) -> Router {
    let api = Router::new()
        .route("/proxies", get(list_proxies))
        .route("/contracts/{address}/lineage", get(lineage))
        .route("/contracts/{address}/source", get(source))
        .route("/graph/{address}", get(graph))
        .route("/stats", get(stats));
    let mut app = Router::new()
        .nest("/api/v1", api)
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async { ApiError::method_not_allowed() })
        .with_state(state);
    if let Some(origin) = cors_origin {
        let allow = match origin {
            "*" => AllowOrigin::any(),
            o => match HeaderValue::from_str(o) {
                Ok(v) => AllowOrigin::exact(v),
                Err(_) => {
                    tracing::warn!(origin = o, "ignoring invalid CORS origin");
                    return app;
                }
            },
        };
        app = app.layer(CorsLayer::new().allow_origin(allow).allow_methods([Method::GET]));
    }
    app
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse_address(raw: &str) -> Result<Address, ApiError> {
    Address::normalize(raw).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn query_error(e: QueryRejection) -> ApiError {
    ApiError::bad_request(e.body_text())
}

fn parse_num<T: std::str::FromStr>(name: &str, raw: Option<&str>) -> Result<Option<T>, ApiError> {
    raw.filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| ApiError::bad_request(format!("{name} must be a non-negative integer, got {s:?}")))
        })
        .transpose()
}

#[derive(Debug, Default, Deserialize)]
pub struct ProxiesQuery {
    #[serde(rename = "type")]
    pub proxy_type: Option<String>,
    pub min_versions: Option<String>,
    pub vulnerability: Option<String>,
    pub q: Option<String>,
    pub limit: Option<String>,
    pub offset: Option<String>,
}

async fn list_proxies(
    State(state): State<AppState>,
    query: Result<Query<ProxiesQuery>, QueryRejection>,
) -> Result<Json<FindPage>, ApiError> {
    let Query(q) = query.map_err(query_error)?;
    let limit = parse_num::<usize>("limit", q.limit.as_deref())?.unwrap_or(50);
    if limit == 0 || limit > MAX_PAGE_LIMIT {
        return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_PAGE_LIMIT}, got {limit}")));
    }
    let offset = parse_num::<usize>("offset", q.offset.as_deref())?.unwrap_or(0);
    let proxy_type = match q.proxy_type.as_deref().filter(|s| !s.is_empty()) {
        Some(t) => {
            let kind: ProxyKind = t.parse().map_err(|_| ApiError::bad_request(format!("unknown proxy type {t:?}")))?;
            if !kind.is_proxy() {
                return Err(ApiError::bad_request("type must name a proxy kind"));
            }
            Some(kind.as_str().to_string())
        }
        None => None,
    };
    let filter = FindFilter {
        proxy_type,
        min_versions: parse_num::<u32>("min_versions", q.min_versions.as_deref())?,
        vulnerability: q.vulnerability.filter(|s| !s.is_empty()),
        address_prefix: q.q.filter(|s| !s.is_empty()),
    };
    let page = state
        .graph
        .read()
        .find(&filter, Page { limit, offset })
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(page))
}

async fn lineage(
    State(state): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<LineageResponse>, ApiError> {
    let address = parse_address(&raw)?;
    let lineage = state.graph.read().get_lineage(&address);
    match lineage.proxy {
        Some(proxy) => Ok(Json(LineageResponse {
            proxy,
            versions: lineage.items,
        })),
        None => Err(ApiError::not_found(format!("no proxy {address}"))),
    }
}

async fn source(
    State(state): State<AppState>,
    Path(raw): Path<String>,
) -> Result<Json<SourceBundle>, ApiError> {
    let address = parse_address(&raw)?;
    let explorer = state.explorer.clone();
    let fetched = tokio::task::spawn_blocking(move || explorer.fetch_verified_source(&address))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    match fetched {
        Ok(bundle) => Ok(Json(bundle)),
        Err(e @ (ExplorerError::Transient { .. } | ExplorerError::Protocol(_))) => {
            Err(ApiError::upstream_unavailable(e.to_string()))
        }
        Err(e) => Err(ApiError::internal(e.to_string())),
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct GraphQuery {
    pub depth: Option<String>,
}

async fn graph(
    State(state): State<AppState>,
    Path(raw): Path<String>,
    query: Result<Query<GraphQuery>, QueryRejection>,
) -> Result<Json<Subgraph>, ApiError> {
    let address = parse_address(&raw)?;
    let Query(q) = query.map_err(query_error)?;
    let depth = parse_num::<u32>("depth", q.depth.as_deref())?.unwrap_or(DEFAULT_DEPTH);
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(ApiError::bad_request(format!("depth must be in 1..={MAX_DEPTH}, got {depth}")));
    }
    let store = state.graph.read();
    subgraph::neighbourhood(&store, &address, depth)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no proxy {address}")))
}

async fn stats(State(state): State<AppState>) -> Json<StoreStats> {
    Json(state.graph.read().stats())
}
