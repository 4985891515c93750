//! Motion service consumed by the trajectory editor.
//!
//! Every response body is a canonical JSON document (or CSV for
//! `/simulate`) computed from the store contents and the request alone.

use std::io::{self, Write};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::mpsc;

use hop_core::canonical::value_to_canonical;
use hop_core::model::forward_kinematics;
use hop_core::motion::interpolate;
use hop_core::sim::{run_scenario_to, ControllerSpec, Resources, Scenario, TrunkScript, RNG_ALGORITHM};
use hop_core::{JointPose, Motion};

use crate::store::{MotionStore, Precondition, StoreError};

/// Rows buffered before a chunk of the simulation log is sent.
const CHUNK_BYTES: usize = 16 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<MotionStore>,
    /// Model, gait, filter and servo documents; motions come from the store.
    pub resources: Arc<Resources>,
    pub tick_rate: f64,
}

impl AppState {
    pub fn new(store: MotionStore, mut resources: Resources, tick_rate: f64) -> Self {
        resources.motions.clear();
        AppState {
            store: Arc::new(store),
            resources: Arc::new(resources),
            tick_rate,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/motions", get(list_motions))
        .route("/motions/{name}", get(get_motion).put(put_motion))
        .route("/preview", post(preview))
        .route("/simulate", post(simulate))
        .route("/model", get(model))
        .with_state(state)
}

fn json_response(status: StatusCode, v: &Value) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        value_to_canonical(v),
    )
        .into_response()
}

fn error(status: StatusCode, message: impl Into<String>, path: Option<&str>) -> Response {
    let mut v = json!({ "error": message.into() });
    if let Some(p) = path {
        v["path"] = Value::String(p.to_string());
    }
    json_response(status, &v)
}

fn etag(stamp: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{stamp}\"")).expect("digits are a valid header")
}

fn store_error(e: StoreError) -> Response {
    match e {
        StoreError::NotFound(n) => error(StatusCode::NOT_FOUND, format!("no motion named `{n}`"), None),
        StoreError::Invalid { path, message } => error(StatusCode::UNPROCESSABLE_ENTITY, message, Some(&path)),
        StoreError::Conflict { current } => {
            let mut v = json!({ "error": "motion was modified since it was fetched" });
            v["current"] = current.map_or(Value::Null, Value::from);
            json_response(StatusCode::CONFLICT, &v)
        }
        StoreError::Io(m) => error(StatusCode::INTERNAL_SERVER_ERROR, m, None),
    }
}

/// Parses `If-Match`: absent, `*`, or a (possibly weak, quoted) timestamp.
pub fn parse_if_match(headers: &HeaderMap) -> Result<Precondition, String> {
    let Some(raw) = headers.get(header::IF_MATCH) else {
        return Ok(Precondition::None);
    };
    let s = raw.to_str().map_err(|_| "If-Match is not ASCII".to_string())?.trim();
    if s == "*" {
        return Ok(Precondition::Exists);
    }
    let s = s.strip_prefix("W/").unwrap_or(s).trim_matches('"');
    s.parse()
        .map(Precondition::Version)
        .map_err(|_| format!("If-Match `{s}` is not a motion timestamp"))
}

async fn list_motions(State(st): State<AppState>) -> Response {
    let items: Vec<Value> = st
        .store
        .list()
        .into_iter()
        .map(|(name, modified)| json!({ "name": name, "modified": modified }))
        .collect();
    json_response(StatusCode::OK, &json!({ "motions": items }))
}

async fn get_motion(State(st): State<AppState>, Path(name): Path<String>) -> Response {
    match st.store.get(&name) {
        Some((doc, stamp)) => (
            StatusCode::OK,
            [(header::CONTENT_TYPE, HeaderValue::from_static("application/json")), (header::ETAG, etag(stamp))],
            doc.as_str().to_owned(),
        )
            .into_response(),
        None => store_error(StoreError::NotFound(name)),
    }
}

async fn put_motion(
    State(st): State<AppState>,
    Path(name): Path<String>,
    headers: HeaderMap,
    body: String,
) -> Response {
    let pre = match parse_if_match(&headers) {
        Ok(p) => p,
        Err(m) => return error(StatusCode::BAD_REQUEST, m, None),
    };
    let store = st.store.clone();
    let n = name.clone();
    let result = tokio::task::spawn_blocking(move || store.put(&n, &body, pre))
        .await
        .unwrap_or_else(|e| Err(StoreError::Io(e.to_string())));
    match result {
        Ok(stamp) => {
            let mut r = json_response(StatusCode::OK, &json!({ "name": name, "modified": stamp }));
            r.headers_mut().insert(header::ETAG, etag(stamp));
            r
        }
        Err(e) => store_error(e),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PreviewRequest {
    motion: Value,
    t: f64,
}

async fn preview(State(st): State<AppState>, body: String) -> Response {
    let req: PreviewRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), Some("$")),
    };
    let motion = match Motion::from_json(&req.motion.to_string()) {
        Ok(m) => m,
        Err(hop_core::Error::Schema { path, message }) => {
            return error(StatusCode::UNPROCESSABLE_ENTITY, message, Some(&format!("motion.{path}")))
        }
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), Some("motion")),
    };
    let frame = match interpolate(&motion, req.t) {
        Ok(f) => f,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), Some("t")),
    };
    let model = &st.resources.model;
    let fk = forward_kinematics(model, &JointPose(frame.pos));
    let links: Vec<Value> = model
        .links()
        .iter()
        .enumerate()
        .map(|(i, link)| {
            let pose = fk.by_index(i);
            let q = pose.rotation.quaternion();
            json!({
                "name": link.name,
                "parent": link.parent.map(|p| model.links()[p].name.clone()),
                "translation": [pose.translation.x, pose.translation.y, pose.translation.z],
                "rotation": [q.w, q.i, q.j, q.k],
            })
        })
        .collect();
    json_response(
        StatusCode::OK,
        &json!({
            "t": req.t,
            "frame": {
                "pos": frame.pos.to_vec(),
                "vel": frame.vel.to_vec(),
                "eff": frame.eff.to_vec(),
                "sup": { "l": frame.sup.l, "r": frame.sup.r },
            },
            "links": links,
        }),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    motion: String,
    #[serde(default)]
    seed: u64,
    rate: Option<f64>,
    #[serde(default)]
    trunk: TrunkScript,
}

/// Sends the run log downstream in chunks of about [`CHUNK_BYTES`].
struct ChunkWriter {
    tx: mpsc::Sender<io::Result<Bytes>>,
    buf: Vec<u8>,
}

impl ChunkWriter {
    fn send(&mut self) -> io::Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let chunk = Bytes::from(std::mem::take(&mut self.buf));
        self.tx
            .blocking_send(Ok(chunk))
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "client went away"))
    }
}

impl Write for ChunkWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(data);
        if self.buf.len() >= CHUNK_BYTES {
            self.send()?;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.send()
    }
}

/// Builds the playback scenario for `/simulate` and `play-motion --sim`.
pub fn playback_scenario(motion: &Motion, seed: u64, rate: f64, trunk: TrunkScript) -> Scenario {
    Scenario {
        name: format!("play_{}", motion.name),
        duration: motion.duration(),
        rate,
        seed,
        controller: ControllerSpec::Motion {
            motion: motion.name.clone(),
        },
        trunk,
        noise: Default::default(),
        initial_error: Default::default(),
        feedforward: true,
    }
}

async fn simulate(State(st): State<AppState>, body: String) -> Response {
    let req: SimulateRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), Some("$")),
    };
    let Some(motion) = st.store.motion(&req.motion) else {
        return store_error(StoreError::NotFound(req.motion));
    };
    let scenario = playback_scenario(&motion, req.seed, req.rate.unwrap_or(st.tick_rate), req.trunk);
    if let Err(e) = scenario.validate() {
        let path = match &e {
            hop_core::Error::Schema { path, .. } => path.clone(),
            _ => "$".into(),
        };
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), Some(&path));
    }

    let mut res = (*st.resources).clone();
    res.motions.insert(motion.name.clone(), motion);
    let (tx, rx) = mpsc::channel::<io::Result<Bytes>>(4);
    tokio::task::spawn_blocking(move || {
        let mut w = ChunkWriter { tx: tx.clone(), buf: Vec::new() };
        let outcome = run_scenario_to(&scenario, &res, &mut w).and_then(|_| {
            w.flush().map_err(|e| hop_core::Error::Io {
                path: "<stream>".into(),
                source: e,
            })
        });
        if let Err(e) = outcome {
            // Terminates the stream without the final chunk.
            let _ = tx.blocking_send(Err(io::Error::other(e.to_string())));
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|item| (item, rx)) });
    Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, "text/csv")
        .header("x-sim-rng", RNG_ALGORITHM)
        .header("x-sim-seed", req.seed.to_string())
        .body(Body::from_stream(stream))
        .expect("static headers are valid")
}

async fn model(State(st): State<AppState>) -> Response {
    match serde_json::to_value(st.resources.model.document()) {
        Ok(v) => json_response(StatusCode::OK, &v),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}
