//! Read-only JSON API over a loaded project, plus static hosting of the
//! explorer bundle.
//!
//! | route | response |
//! |-------|----------|
//! | `GET /api/meta` | item count, label histogram, embedding methods, largest 1-cycle persistence, image resolution |
//! | `GET /api/embedding?method=` | `[{id, x, y, label}]` |
//! | `GET /api/item/{id}` | raster, dim-1 pairs, cycles, persistence image |
//! | `GET /api/diff?a=&b=` | pixel-wise absolute differences sorted ascending |
//!
//! Every `/api` route answers 503 until the project has finished loading.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::Serialize;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use topolens_core::analysis::EmbeddingMethod;
use topolens_core::project::{load_project, ProjectError};
use topolens_core::vectorize::pixel_diff;
use topolens_core::Project;

const PLACEHOLDER_UI: &str = include_str!("../assets/index.html");

/// Shared handle to the project; empty until loading completes.
#[derive(Clone, Default)]
pub struct AppState(Arc<OnceLock<Project>>);

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn loaded(project: Project) -> Self {
        let state = Self::new();
        state.set(project);
        state
    }

    /// Publishes the project; later calls are ignored.
    pub fn set(&self, project: Project) {
        let _ = self.0.set(project);
    }

    pub fn project(&self) -> Option<&Project> {
        self.0.get()
    }
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
        }
        (
            self.status,
            Json(Body {
                error: self.message,
            }),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn project(state: &AppState) -> Result<&Project, ApiError> {
    state
        .project()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "project is still loading"))
}

fn item_index(project: &Project, id: &str) -> Result<usize, ApiError> {
    project
        .position(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown item {id:?}")))
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub n: usize,
    pub labels: BTreeMap<u8, usize>,
    pub methods: Vec<EmbeddingMethod>,
    pub global_max_persistence: f64,
    pub resolution: usize,
}

async fn meta(State(state): State<AppState>) -> ApiResult<Meta> {
    let project = project(&state)?;
    let mut labels = BTreeMap::new();
    for item in &project.items {
        *labels.entry(item.label).or_insert(0) += 1;
    }
    Ok(Json(Meta {
        n: project.len(),
        labels,
        methods: project.embeddings.iter().map(|e| e.method).collect(),
        global_max_persistence: project.global_max_persistence(),
        resolution: project
            .images
            .first()
            .map_or(project.config.image.resolution, |im| im.resolution),
    }))
}

#[derive(Debug, Serialize)]
pub struct Point {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub label: u8,
}

fn required<'a>(query: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ApiError> {
    query.get(key).map(String::as_str).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("missing query parameter {key:?}"),
        )
    })
}

async fn embedding(
    State(state): State<AppState>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Vec<Point>> {
    let project = project(&state)?;
    let name = required(&query, "method")?;
    let method: EmbeddingMethod = name
        .parse()
        .map_err(|_| ApiError::not_found(format!("unknown method {name:?}")))?;
    let emb = project
        .embedding(method)
        .ok_or_else(|| ApiError::not_found(format!("method {name:?} was not computed")))?;
    let points = emb
        .item_ids
        .iter()
        .zip(&emb.coords)
        .map(|(id, c)| {
            let label = project.position(id).map_or(0, |i| project.items[i].label);
            Point {
                id: id.clone(),
                x: c[0],
                y: c[1],
                label,
            }
        })
        .collect();
    Ok(Json(points))
}

#[derive(Debug, Serialize)]
pub struct RasterView {
    pub width: usize,
    pub height: usize,
    /// Base64 of the raw row-major 8-bit pixels.
    pub pixels: String,
}

#[derive(Debug, Serialize)]
pub struct PairView {
    pub birth: f64,
    pub death: f64,
    pub persistence: f64,
}

#[derive(Debug, Serialize)]
pub struct CycleView {
    pub birth: f64,
    pub death: f64,
    pub persistence: f64,
    /// Edges as `[[row, col], [row, col]]`.
    pub edges: Vec<[[usize; 2]; 2]>,
}

#[derive(Debug, Serialize)]
pub struct ImageView {
    pub resolution: usize,
    pub pixels: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ItemDetail {
    pub id: String,
    pub label: u8,
    pub raster: RasterView,
    pub pairs: Vec<PairView>,
    pub cycles: Vec<CycleView>,
    pub image: ImageView,
}

async fn item(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<ItemDetail> {
    let project = project(&state)?;
    let i = item_index(project, &id)?;
    let raster = &project.items[i];
    let width = raster.width;
    let pixel = |v: u32| [v as usize / width, v as usize % width];
    Ok(Json(ItemDetail {
        id: raster.id.clone(),
        label: raster.label,
        raster: RasterView {
            width,
            height: raster.height,
            pixels: STANDARD.encode(&raster.pixels),
        },
        pairs: project.diagrams[i]
            .pairs_of_dim(1)
            .map(|p| PairView {
                birth: p.birth,
                death: p.death,
                persistence: p.persistence,
            })
            .collect(),
        cycles: project.cycles[i]
            .iter()
            .map(|c| CycleView {
                birth: c.pair.birth,
                death: c.pair.death,
                persistence: c.pair.persistence,
                edges: c.edges.iter().map(|e| [pixel(e[0]), pixel(e[1])]).collect(),
            })
            .collect(),
        image: ImageView {
            resolution: project.images[i].resolution,
            pixels: project.images[i].pixels.clone(),
        },
    }))
}

#[derive(Debug, Serialize)]
pub struct DiffView {
    pub sorted: Vec<(usize, f64)>,
    pub max_diff: f64,
}

async fn diff(
    State(state): State<AppState>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<DiffView> {
    let project = project(&state)?;
    let a = item_index(project, required(&query, "a")?)?;
    let b = item_index(project, required(&query, "b")?)?;
    let sorted = pixel_diff(&project.images[a], &project.images[b])
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(DiffView {
        max_diff: sorted.max_diff(),
        sorted: sorted.entries,
    }))
}

async fn api_fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

/// The API router; `ui_dir` replaces the placeholder page at `/`.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/meta", get(meta))
        .route("/embedding", get(embedding))
        .route("/item/{id}", get(item))
        .route("/diff", get(diff))
        .fallback(api_fallback)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    let app = match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route(
            "/",
            get(|| async { ([(header::CACHE_CONTROL, "no-cache")], Html(PLACEHOLDER_UI)) }),
        ),
    };
    app.layer(CorsLayer::permissive())
}

#[derive(Debug)]
pub enum ServeError {
    Io(std::io::Error),
    Load(ProjectError),
}

impl std::fmt::Display for ServeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServeError::Io(e) => write!(f, "{e}"),
            ServeError::Load(e) => write!(f, "loading project: {e}"),
        }
    }
}

impl std::error::Error for ServeError {}

/// Binds `addr`, loads the project in the background and serves until
/// interrupted. A failed load shuts the server down and is returned.
pub async fn serve(
    project_dir: PathBuf,
    addr: SocketAddr,
    ui_dir: Option<PathBuf>,
) -> Result<(), ServeError> {
    let state = AppState::new();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(ServeError::Io)?;
    log::info!(
        "listening on http://{}",
        listener.local_addr().map_err(ServeError::Io)?
    );

    let (failed_tx, failed_rx) = tokio::sync::oneshot::channel();
    let loader_state = state.clone();
    tokio::task::spawn_blocking(move || match load_project(&project_dir) {
        Ok(project) => {
            log::info!(
                "loaded {} items from {}",
                project.len(),
                project_dir.display()
            );
            loader_state.set(project);
        }
        Err(e) => {
            let _ = failed_tx.send(e);
        }
    });

    let failure = Arc::new(OnceLock::new());
    let failure_slot = Arc::clone(&failure);
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async move {
            tokio::select! {
                Ok(e) = failed_rx => { let _ = failure_slot.set(e); }
                _ = tokio::signal::ctrl_c() => {}
            }
        })
        .await
        .map_err(ServeError::Io)?;
    match Arc::try_unwrap(failure).ok().and_then(|f| f.into_inner()) {
        Some(e) => Err(ServeError::Load(e)),
        None => Ok(()),
    }
}
