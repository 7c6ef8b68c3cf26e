//! Read-only HTTP JSON API over a saved bundle.
//!
//! Every response is a pure function of the bundle and the request's query
//! string. Filters are sent with each request; the server keeps no session.

mod api;
pub mod error;
pub mod query;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::routing::get;
use axum::Router;
use thiserror::Error;
use tokio::net::TcpListener;

use sourcelens_core::corpus::tokenize;
use sourcelens_core::filter::TweetTable;
use sourcelens_core::store::{load_bundle, ArtifactBundle, StoreError};

pub use api::{PAGE_SIZE, SCHEMAS};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot read image directory {path}: {source}")]
    ImageDir {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("server error: {0}")]
    Serve(#[source] io::Error),
}

/// Surface text of one extracted entity mention, for highlighting.
#[derive(Clone, Debug)]
pub(crate) struct Highlight {
    pub name: String,
    pub kind: sourcelens_core::entities::EntityType,
    pub surface: String,
}

/// Loaded bundle plus the lookup structures the endpoints share.
pub struct AppState {
    pub bundle: ArtifactBundle,
    pub(crate) table: TweetTable,
    /// Row indices, newest first, ties by tweet id.
    pub(crate) newest_first: Vec<usize>,
    pub(crate) highlights: Vec<Vec<Highlight>>,
    /// Image id -> file under the asset directory.
    pub(crate) assets: BTreeMap<String, PathBuf>,
}

impl AppState {
    pub fn new(bundle: ArtifactBundle, image_dir: Option<&Path>) -> Result<Self, ServiceError> {
        let d = &bundle.data;
        let table = TweetTable::new(&d.corpus, &d.registry, &d.entities.index, &d.entities.mentions);

        let mut newest_first: Vec<usize> = (0..table.len()).collect();
        newest_first.sort_by(|&a, &b| {
            let (ra, rb) = (table.row(a), table.row(b));
            rb.timestamp.cmp(&ra.timestamp).then_with(|| ra.id.cmp(&rb.id))
        });

        let highlights = d
            .corpus
            .tweets()
            .iter()
            .map(|t| {
                let Some(found) = d.entities.mentions.get(&t.id) else { return Vec::new() };
                let tokens = tokenize(&t.text);
                found
                    .iter()
                    .map(|m| Highlight {
                        name: m.name.clone(),
                        kind: m.kind,
                        surface: tokens.get(m.start..m.start + m.len).map(|s| s.join(" ")).unwrap_or_default(),
                    })
                    .collect()
            })
            .collect();

        let assets = match image_dir {
            Some(dir) => scan_assets(dir)?,
            None => BTreeMap::new(),
        };
        Ok(AppState { bundle, table, newest_first, highlights, assets })
    }

    pub fn load(bundle_dir: &Path, image_dir: Option<&Path>) -> Result<Self, ServiceError> {
        Self::new(load_bundle(bundle_dir)?, image_dir)
    }
}

/// Files directly under `dir`, keyed by file stem. The first name in sorted
/// order wins when two files share a stem.
fn scan_assets(dir: &Path) -> Result<BTreeMap<String, PathBuf>, ServiceError> {
    let err = |source| ServiceError::ImageDir { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths.into_iter().filter(|p| p.is_file()) {
        if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
            out.entry(stem.to_string()).or_insert(p);
        }
    }
    Ok(out)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/accounts", get(api::accounts))
        .route("/api/accounts/{handle}/timeline", get(api::timeline))
        .route("/api/network", get(api::network))
        .route("/api/entities", get(api::entities))
        .route("/api/tweets", get(api::tweets))
        .route("/api/compare/words", get(api::compare_words))
        .route("/api/compare/images", get(api::compare_images))
        .route("/api/meta", get(api::meta))
        .route("/api/schemas/{name}", get(api::schema))
        .route("/assets/images/{id}", get(api::image_asset))
        .fallback(api::not_found)
        .method_not_allowed_fallback(api::method_not_allowed)
        .with_state(state)
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind { addr, source })
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "serving");
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Serve)
}
