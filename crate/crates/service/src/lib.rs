//! HTTP backend for browsing a corpus and classifying drawn regions.
//!
//! Endpoints:
//!
//! | method | path                           | result                          |
//! |--------|--------------------------------|---------------------------------|
//! | GET    | `/health`                      | liveness                        |
//! | GET    | `/tablets`                     | tablet listing                  |
//! | GET    | `/tablets/{id}/surfaces`       | surfaces with dimensions, tags  |
//! | GET    | `/surfaces/{id}/image?viz=TAG` | image bytes                     |
//! | POST   | `/classify`                    | top-5 [`Prediction`]            |
//! | GET    | `/model`                       | model metadata                  |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use cuneo_core::checkpoint::load_checkpoint;
use cuneo_core::corpus::{load_manifest, CorpusManifest, SurfaceRecord, VisualizationKind};
use cuneo_core::dataset::load_rgb;
use cuneo_core::error::Error as CoreError;
use cuneo_core::inference::{classify_image_region, Prediction, Region};
use cuneo_core::model::Classifier;

/// Errors surfaced to HTTP clients.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{message}")]
    BadRequest {
        message: String,
        available: Option<Vec<String>>,
    },
    #[error("no model loaded")]
    ModelUnavailable,
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn bad(message: impl Into<String>) -> Self {
        ApiError::BadRequest {
            message: message.into(),
            available: None,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest { .. } => StatusCode::BAD_REQUEST,
            ApiError::ModelUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let mut body = json!({ "error": self.to_string() });
        if let ApiError::BadRequest {
            available: Some(tags),
            ..
        } = &self
        {
            body["available"] = json!(tags);
        }
        (status, Json(body)).into_response()
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Geometry(g) => ApiError::bad(format!("invalid region: {g}")),
            CoreError::Shape { .. } | CoreError::Config(_) | CoreError::Invalid(_) => {
                ApiError::bad(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

/// Startup error of [`AppState::load`] and [`serve`].
#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub corpus: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub port: u16,
    /// Concurrent classifications. Defaults to the number of cores.
    pub workers: Option<usize>,
}

/// Shared, read-only state of a running service.
#[derive(Clone)]
pub struct AppState {
    corpus: Arc<CorpusManifest>,
    model: Option<Arc<dyn Classifier>>,
    pool: Arc<Semaphore>,
}

impl AppState {
    pub fn new(corpus: CorpusManifest, model: Option<Arc<dyn Classifier>>, workers: usize) -> Self {
        Self {
            corpus: Arc::new(corpus),
            model,
            pool: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    /// Mounts the corpus and, if given, loads the checkpoint.
    pub fn load(corpus: &Path, checkpoint: Option<&Path>, workers: Option<usize>) -> Result<Self, ServiceError> {
        let manifest = load_manifest(corpus)?;
        let model: Option<Arc<dyn Classifier>> = match checkpoint {
            Some(path) => {
                let model = load_checkpoint(path, None)?;
                if model.vocabulary.fingerprint() != manifest.vocabulary.fingerprint() {
                    tracing::warn!("checkpoint vocabulary differs from the corpus vocabulary");
                }
                Some(Arc::new(model))
            }
            None => None,
        };
        let workers = workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
        Ok(Self::new(manifest, model, workers))
    }

    pub fn corpus(&self) -> &CorpusManifest {
        &self.corpus
    }

    fn model(&self) -> Result<Arc<dyn Classifier>, ApiError> {
        self.model.clone().ok_or(ApiError::ModelUnavailable)
    }

    fn surface(&self, surface_id: &str) -> Result<&SurfaceRecord, ApiError> {
        self.corpus
            .find_surface(surface_id)
            .map(|(_, s)| s)
            .ok_or_else(|| ApiError::NotFound(format!("unknown surface {surface_id}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/tablets", get(tablets))
        .route("/tablets/{id}/surfaces", get(surfaces))
        .route("/surfaces/{id}/image", get(surface_image))
        .route("/classify", post(classify))
        .route("/model", get(model_info))
        .with_state(state)
}

/// Binds `0.0.0.0:port` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::load(&config.corpus, config.checkpoint.as_deref(), config.workers)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, model = state.model.is_some(), "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "model_loaded": state.model.is_some() }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabletEntry {
    pub tablet_id: String,
    pub provenience: String,
    pub surfaces: Vec<String>,
}

async fn tablets(State(state): State<AppState>) -> Json<Vec<TabletEntry>> {
    let mut by_tablet: BTreeMap<&str, TabletEntry> = BTreeMap::new();
    for s in &state.corpus.surfaces {
        by_tablet
            .entry(&s.tablet_id)
            .or_insert_with(|| TabletEntry {
                tablet_id: s.tablet_id.clone(),
                provenience: s.provenience.clone(),
                surfaces: Vec::new(),
            })
            .surfaces
            .push(s.surface_id());
    }
    Json(by_tablet.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEntry {
    pub surface_id: String,
    pub side: String,
    pub width_px: u32,
    pub height_px: u32,
    pub visualizations: Vec<VisualizationKind>,
}

async fn surfaces(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Vec<SurfaceEntry>>, ApiError> {
    let list: Vec<SurfaceEntry> = state
        .corpus
        .surfaces
        .iter()
        .filter(|s| s.tablet_id == id)
        .map(|s| SurfaceEntry {
            surface_id: s.surface_id(),
            side: s.side.to_string(),
            width_px: s.width_px,
            height_px: s.height_px,
            visualizations: s.visualizations(),
        })
        .collect();
    if list.is_empty() {
        return Err(ApiError::NotFound(format!("unknown tablet {id}")));
    }
    Ok(Json(list))
}

/// Parses a tag and checks that `surface` has it.
fn resolve_viz(surface: &SurfaceRecord, tag: Option<&str>) -> Result<VisualizationKind, ApiError> {
    let available = || Some(surface.visualizations().iter().map(|v| v.to_string()).collect());
    let tag = tag.ok_or_else(|| ApiError::BadRequest {
        message: "missing visualization tag".into(),
        available: available(),
    })?;
    let viz: VisualizationKind = tag.parse().map_err(|e: String| ApiError::BadRequest {
        message: e,
        available: available(),
    })?;
    if !surface.images.contains_key(&viz) {
        return Err(ApiError::BadRequest {
            message: format!("surface {} has no {viz} rendering", surface.surface_id()),
            available: available(),
        });
    }
    Ok(viz)
}

#[derive(Debug, Deserialize)]
struct ImageQuery {
    viz: Option<String>,
}

async fn surface_image(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ImageQuery>,
) -> Result<Response, ApiError> {
    let surface = state.surface(&id)?;
    let viz = resolve_viz(surface, q.viz.as_deref())?;
    let path = &surface.images[&viz];
    let bytes = tokio::fs::read(path)
        .await
        .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(ext) if ext == "jpg" || ext == "jpeg" => "image/jpeg",
        Some(ext) if ext == "png" => "image/png",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectBody {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Body of `POST /classify`: exactly one of `rect` and `polygon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub surface_id: String,
    pub viz: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rect: Option<RectBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
}

impl ClassifyRequest {
    pub fn region(&self) -> Result<Region, ApiError> {
        match (&self.rect, &self.polygon) {
            (Some(r), None) => Ok(Region::Rect {
                x0: r.x0,
                y0: r.y0,
                x1: r.x1,
                y1: r.y1,
            }),
            (None, Some(p)) => Ok(Region::Polygon(p.clone())),
            _ => Err(ApiError::bad("give exactly one of `rect` and `polygon`")),
        }
    }
}

async fn classify(
    State(state): State<AppState>,
    body: Result<Json<ClassifyRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Prediction>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad(e.body_text()))?;
    let model = state.model()?;
    let surface = state.surface(&req.surface_id)?;
    let viz = resolve_viz(surface, Some(&req.viz))?;
    let region = req.region()?;
    region.square().map_err(|e| ApiError::bad(format!("invalid region: {e}")))?;
    let path = surface.images[&viz].clone();
    let surface_id = surface.surface_id();
    let _permit = state
        .pool
        .acquire()
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let prediction = tokio::task::spawn_blocking(move || {
        let image = load_rgb(&path)?;
        classify_image_region(model.as_ref(), &image, &region, (surface_id, viz))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(prediction))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub n_classes: usize,
    pub fingerprint: String,
    pub classes: Vec<String>,
    pub train_proveniences: Vec<String>,
    pub visualization: Option<VisualizationKind>,
    pub init: String,
}

async fn model_info(State(state): State<AppState>) -> Result<Json<ModelMetadata>, ApiError> {
    let model = state.model()?;
    let info = model.info();
    Ok(Json(ModelMetadata {
        n_classes: model.n_classes(),
        fingerprint: model.fingerprint(),
        classes: model.vocabulary().names(),
        train_proveniences: info.train_proveniences.into_iter().collect(),
        visualization: info.visualization,
        init: info.init,
    }))
}
