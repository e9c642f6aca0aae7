//! HTTP service backing the selection UI.
//!
//! | Method | Path | Body / result |
//! |---|---|---|
//! | GET | `/clouds` | `[{"id", "points", "ring_count", "middle_ring", "is_reference"}]` |
//! | GET | `/clouds/{id}` | `{"id", "ring_count", "points": [[x, y, z, intensity, ring], ...]}` |
//! | GET | `/clouds/{id}/ring/{k}` | `{"id", "ring", "indices": [...], "points": [[x, y, z, intensity, ring], ...]}` |
//! | POST | `/selections/segment` | `{"cloud_id", "indices"}` → `201 {"id", "record"}` |
//! | POST | `/selections/pointpair` | `{"axis", "cloud_id", "index", "ref_cloud_id", "ref_index"}` → `201 {"id", "record"}` |
//! | GET | `/selections` | `[{"id", "record"}]` |
//! | DELETE | `/selections/{id}` | `204` |
//! | GET | `/preview/transform` | `[{"cloud_id", "matrix", "roll_deg", "pitch_deg", "yaw_deg"}` or `{"cloud_id", "missing"}]` |
//!
//! A selection's `id` is its position in the selection file, so deleting a
//! record renumbers the ones after it. Rejected requests get
//! `400 {"error": <name>, "message": <text>}`; unknown clouds and
//! selections get 404 with the same shape.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use elid_core::cloud_io::{self, CloudIoError, Selection, SelectionSet};
use elid_core::merge::{estimate_transform, MergeError};
use elid_core::rotation::{middle_ring_of, RingSegment, RotationError};
use elid_core::translation::{filter_neighbors, TranslationError};
use elid_core::{Axis, ElidError, ErrorName, PointCloud, SessionDir};

pub struct AppState {
    dir: SessionDir,
    /// Serializes read-modify-write cycles on the selection file.
    writer: Mutex<()>,
}

impl AppState {
    pub fn new(dir: SessionDir) -> Self {
        Self {
            dir,
            writer: Mutex::new(()),
        }
    }
}

pub fn router(dir: SessionDir) -> Router {
    Router::new()
        .route("/clouds", get(list_clouds))
        .route("/clouds/{id}", get(get_cloud))
        .route("/clouds/{id}/ring/{k}", get(get_ring))
        .route("/selections", get(list_selections))
        .route("/selections/segment", post(post_segment))
        .route("/selections/pointpair", post(post_pointpair))
        .route("/selections/{id}", delete(delete_selection))
        .route("/preview/transform", get(preview))
        .with_state(Arc::new(AppState::new(dir)))
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    name: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(name: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            name,
            message: message.into(),
        }
    }

    fn bad_request(name: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            name,
            message: message.into(),
        }
    }
}

impl From<ElidError> for ApiError {
    fn from(e: ElidError) -> Self {
        let status = match e.name() {
            "UnknownCloud" => StatusCode::NOT_FOUND,
            "IoError" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self {
            status,
            name: e.name(),
            message: e.to_string(),
        }
    }
}

macro_rules! via_elid_error {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                ElidError::from(e).into()
            }
        }
    )*};
}

via_elid_error!(CloudIoError, RotationError, TranslationError, MergeError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.name, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Blocking file and math work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| {
        Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            name: "InternalError",
            message: e.to_string(),
        })
    })
}

fn load_cloud(dir: &SessionDir, id: &str) -> ApiResult<PointCloud> {
    if !dir.cloud_ids()?.iter().any(|c| c == id) {
        return Err(ApiError::not_found("UnknownCloud", format!("unknown cloud {id}")));
    }
    Ok(dir.read_cloud(id)?)
}

fn point_rows<'a>(cloud: &'a PointCloud, indices: impl Iterator<Item = usize> + 'a) -> Vec<[f64; 5]> {
    indices
        .map(|i| {
            let p = &cloud.points()[i];
            [p.x, p.y, p.z, p.intensity, p.ring as f64]
        })
        .collect()
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("MalformedBody", e.to_string()))
}

fn reference_id(dir: &SessionDir) -> Option<String> {
    dir.manifest().ok().map(|m| m.reference)
}

#[derive(Serialize)]
struct CloudInfo {
    id: String,
    points: usize,
    ring_count: u32,
    middle_ring: Option<u32>,
    is_reference: bool,
}

async fn list_clouds(State(st): State<Arc<AppState>>) -> ApiResult<Json<Vec<CloudInfo>>> {
    blocking(move || {
        let reference = reference_id(&st.dir);
        let infos = st
            .dir
            .cloud_ids()?
            .into_iter()
            .map(|id| {
                let c = st.dir.read_cloud(&id)?;
                Ok(CloudInfo {
                    is_reference: reference.as_deref() == Some(id.as_str()),
                    points: c.len(),
                    ring_count: c.ring_count(),
                    middle_ring: middle_ring_of(c.ring_count()).ok(),
                    id,
                })
            })
            .collect::<ApiResult<Vec<_>>>()?;
        Ok(Json(infos))
    })
    .await
}

async fn get_cloud(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let c = load_cloud(&st.dir, &id)?;
        Ok(Json(json!({
            "id": id,
            "ring_count": c.ring_count(),
            "points": point_rows(&c, 0..c.len()),
        })))
    })
    .await
}

async fn get_ring(State(st): State<Arc<AppState>>, Path((id, k)): Path<(String, u32)>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let c = load_cloud(&st.dir, &id)?;
        if k >= c.ring_count() {
            return Err(ApiError::bad_request(
                "RingIndexOutOfRange",
                format!("ring {k} is outside 0..{}", c.ring_count()),
            ));
        }
        let indices = c.ring_indices(k);
        Ok(Json(json!({
            "id": id,
            "ring": k,
            "points": point_rows(&c, indices.iter().copied()),
            "indices": indices,
        })))
    })
    .await
}

#[derive(Serialize)]
struct Numbered {
    id: usize,
    record: Selection,
}

async fn list_selections(State(st): State<Arc<AppState>>) -> ApiResult<Json<Vec<Numbered>>> {
    blocking(move || {
        let set = st.dir.read_selections()?;
        Ok(Json(
            set.records
                .into_iter()
                .enumerate()
                .map(|(id, record)| Numbered { id, record })
                .collect(),
        ))
    })
    .await
}

async fn append(st: Arc<AppState>, record: Selection) -> ApiResult<(StatusCode, Json<Numbered>)> {
    let _guard = st.writer.lock().await;
    let st2 = st.clone();
    blocking(move || {
        let mut set = st2.dir.read_selections()?;
        set.records.push(record.clone());
        cloud_io::write_selection(&set, &st2.dir.selection_path())?;
        Ok((
            StatusCode::CREATED,
            Json(Numbered {
                id: set.records.len() - 1,
                record,
            }),
        ))
    })
    .await
}

#[derive(Deserialize)]
struct SegmentBody {
    cloud_id: String,
    indices: Vec<usize>,
}

async fn post_segment(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Numbered>)> {
    let body: SegmentBody = parse_body(&body)?;
    let st2 = st.clone();
    let record = blocking(move || {
        let cloud = load_cloud(&st2.dir, &body.cloud_id)?;
        RingSegment::from_cloud(&body.cloud_id, &cloud, &body.indices)?;
        Ok(Selection::Segment {
            cloud_id: body.cloud_id,
            indices: body.indices,
        })
    })
    .await?;
    append(st, record).await
}

#[derive(Deserialize)]
struct PointPairBody {
    axis: Axis,
    cloud_id: String,
    index: usize,
    ref_cloud_id: String,
    ref_index: usize,
}

async fn post_pointpair(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Numbered>)> {
    let body: PointPairBody = parse_body(&body)?;
    let st2 = st.clone();
    let record = blocking(move || {
        if let Some(r) = reference_id(&st2.dir).filter(|r| *r != body.ref_cloud_id) {
            return Err(MergeError::PairNotOnReference(format!("{} (reference is {r})", body.ref_cloud_id)).into());
        }
        let m = load_cloud(&st2.dir, &body.cloud_id)?;
        let s = load_cloud(&st2.dir, &body.ref_cloud_id)?;
        filter_neighbors(&m, body.index)?;
        filter_neighbors(&s, body.ref_index)?;
        Ok(Selection::PointPair {
            axis: body.axis,
            cloud_id: body.cloud_id,
            index: body.index,
            ref_cloud_id: body.ref_cloud_id,
            ref_index: body.ref_index,
        })
    })
    .await?;
    append(st, record).await
}

async fn delete_selection(State(st): State<Arc<AppState>>, Path(id): Path<usize>) -> ApiResult<StatusCode> {
    let _guard = st.writer.lock().await;
    let st2 = st.clone();
    blocking(move || {
        let mut set: SelectionSet = st2.dir.read_selections()?;
        if id >= set.records.len() {
            return Err(ApiError::not_found("UnknownSelection", format!("no selection {id}")));
        }
        set.records.remove(id);
        cloud_io::write_selection(&set, &st2.dir.selection_path())?;
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

async fn preview(State(st): State<Arc<AppState>>) -> ApiResult<Json<Vec<Value>>> {
    blocking(move || {
        let session = st.dir.load()?;
        let out = session
            .targets()
            .into_iter()
            .map(|id| {
                let missing = session.missing_selections(id);
                if !missing.is_empty() {
                    return Ok(json!({"cloud_id": id, "missing": missing}));
                }
                let reg = estimate_transform(&session, id)?;
                let h = reg.transform.homogeneous();
                let matrix: Vec<[f64; 4]> = (0..4).map(|r| [h[(r, 0)], h[(r, 1)], h[(r, 2)], h[(r, 3)]]).collect();
                Ok(json!({
                    "cloud_id": id,
                    "matrix": matrix,
                    "roll_deg": reg.angles.roll.to_degrees(),
                    "pitch_deg": reg.angles.pitch.to_degrees(),
                    "yaw_deg": reg.angles.yaw.to_degrees(),
                }))
            })
            .collect::<ApiResult<Vec<_>>>()?;
        Ok(Json(out))
    })
    .await
}

/// Serves until ctrl-c.
pub async fn serve(dir: SessionDir, addr: std::net::SocketAddr) -> std::io::Result<()> {
    if !dir.root().is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("session directory {} does not exist", dir.root().display()),
        ));
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} on http://{}", dir.root().display(), listener.local_addr()?);
    axum::serve(listener, router(dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
