//! Deterministic stand-in for every model role, speaking the real protocol.
//!
//! Responses depend only on the configured seed, the `x-task-id` header, and
//! the request body, never on arrival order. Replays with a known
//! `x-request-id` return the cached body verbatim.

use std::collections::{BTreeMap, HashMap};
use std::net::{SocketAddr, TcpListener};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{BackendEndpoint, Role};
use super::protocol::{
    decode_image, encode_image, EditRequestBody, EditResponseBody, ErrorBody, HealthBody, Prompt,
    RewriteBody, SegmentRequest, SegmentRequestBody, SegmentResponse, HEADER_REQUEST_ID,
    HEADER_TASK_ID, PATH_EDIT, PATH_HEALTH, PATH_REWRITE, PATH_SEGMENT,
};
use crate::geometry::{clamp_bbox, BBox, BinaryMask, Dims};

pub const ORACLE_SCORE: f64 = 0.9;
pub const HALLUCINATED_SCORE: f64 = 0.6;
const HIGHLIGHT: [u8; 3] = [255, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockBehavior {
    /// Editor draws the truth box; segmenters fill prompts exactly.
    Oracle,
    /// Editor draws the truth box with every edge perturbed by up to `jitter_px`.
    Jitter,
    /// Editor draws a box disjoint from the truth.
    Hallucinate,
    /// Editor and rewriter answer 503; segmenters return no masks.
    Fail,
}

impl FromStr for MockBehavior {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "jitter" => Ok(Self::Jitter),
            "hallucinate" => Ok(Self::Hallucinate),
            "fail" => Ok(Self::Fail),
            _ => Err(format!("unknown behavior `{s}` (oracle|jitter|hallucinate|fail)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    pub behavior: MockBehavior,
    pub jitter_px: u32,
    /// Side-length factor applied to box prompts, in (0, 1].
    pub shrink: f64,
    /// Chance that a request gets the failure response regardless of behavior.
    pub fail_rate: f64,
    pub seed: u64,
    pub truth_table: BTreeMap<String, BBox>,
    /// Trailing instructions the rewriter removes; empty means identity.
    pub rewrite_suffixes: Vec<String>,
    pub stroke: u32,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            behavior: MockBehavior::Oracle,
            jitter_px: 0,
            shrink: 1.0,
            fail_rate: 0.0,
            seed: 0,
            truth_table: BTreeMap::new(),
            rewrite_suffixes: Vec::new(),
            stroke: 3,
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(format!("shrink must be in (0, 1], got {}", self.shrink));
        }
        if !(0.0..=1.0).contains(&self.fail_rate) {
            return Err(format!("fail_rate must be in [0, 1], got {}", self.fail_rate));
        }
        Ok(())
    }
}

fn rng_for(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Box prompt shrunk about its center; sides are floored, as is the offset.
pub fn shrink_box(b: &BBox, shrink: f64) -> BBox {
    let w = ((b.width() as f64 * shrink + 1e-9).floor() as i64).max(1);
    let h = ((b.height() as f64 * shrink + 1e-9).floor() as i64).max(1);
    let x0 = b.x_min() + (b.width() - w) / 2;
    let y0 = b.y_min() + (b.height() - h) / 2;
    BBox::new(x0, y0, x0 + w, y0 + h).expect("positive sides")
}

/// A box with the truth's size (where it fits) that shares no pixel with it.
pub fn hallucinated_box(truth: Option<&BBox>, dims: Dims, rng: &mut impl Rng) -> Option<BBox> {
    let (iw, ih) = (dims.width as i64, dims.height as i64);
    let (w, h) = match truth {
        Some(t) => (t.width().min(iw), t.height().min(ih)),
        None => ((iw / 4).max(1), (ih / 4).max(1)),
    };
    let disjoint = |b: &BBox| truth.is_none_or(|t| b.intersection(t).is_none());
    for _ in 0..64 {
        let x = rng.random_range(0..=iw - w);
        let y = rng.random_range(0..=ih - h);
        let b = BBox::new(x, y, x + w, y + h).ok()?;
        if disjoint(&b) {
            return Some(b);
        }
    }
    // Crowded frame: fall back to the largest free band beside the truth.
    let t = truth?;
    let bands = [
        BBox::new(0, 0, t.x_min(), ih),
        BBox::new(t.x_max(), 0, iw, ih),
        BBox::new(0, 0, iw, t.y_min()),
        BBox::new(0, t.y_max(), iw, ih),
    ];
    bands
        .into_iter()
        .flatten()
        .max_by_key(|b| b.area())
        .map(|band| {
            let bw = w.min(band.width());
            let bh = h.min(band.height());
            BBox::new(band.x_min(), band.y_min(), band.x_min() + bw, band.y_min() + bh)
                .expect("band is non-empty")
        })
}

fn jittered_box(truth: &BBox, jitter: u32, dims: Dims, rng: &mut impl Rng) -> Option<BBox> {
    let j = jitter as i64;
    let mut d = || if j == 0 { 0 } else { rng.random_range(-j..=j) };
    let (x0, y0) = (truth.x_min() + d(), truth.y_min() + d());
    let (x1, y1) = (truth.x_max() + d(), truth.y_max() + d());
    let b = BBox::new(x0.min(x1 - 1), y0.min(y1 - 1), x1.max(x0 + 1), y1.max(y0 + 1)).ok()?;
    clamp_bbox(&b, dims)
}

struct MockState {
    cfg: MockConfig,
    roles: Vec<Role>,
    replay: Mutex<HashMap<(String, String), (StatusCode, Bytes)>>,
}

fn error_response(status: StatusCode, code: &str, message: impl Into<String>) -> (StatusCode, Bytes) {
    let body = serde_json::to_vec(&ErrorBody::new(code, message)).expect("error body serializes");
    (status, Bytes::from(body))
}

fn ok_json<T: Serialize>(v: &T) -> (StatusCode, Bytes) {
    (StatusCode::OK, Bytes::from(serde_json::to_vec(v).expect("body serializes")))
}

fn into_response((status, body): (StatusCode, Bytes)) -> Response {
    (status, [("content-type", "application/json")], body).into_response()
}

impl MockState {
    fn serves(&self, any_of: &[Role]) -> bool {
        any_of.iter().any(|r| self.roles.contains(r))
    }

    fn forced_failure(&self, task_id: &str, path: &str, body: &[u8]) -> bool {
        if self.cfg.behavior == MockBehavior::Fail {
            return true;
        }
        if self.cfg.fail_rate <= 0.0 {
            return false;
        }
        let mut rng = rng_for(self.cfg.seed, &[b"fail", task_id.as_bytes(), path.as_bytes(), body]);
        rng.random::<f64>() < self.cfg.fail_rate
    }

    fn handle(&self, path: &'static str, headers: &HeaderMap, body: &Bytes) -> (StatusCode, Bytes) {
        let header = |name: &str| {
            headers
                .get(name)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string)
        };
        let task_id = header(HEADER_TASK_ID).unwrap_or_default();
        let request_id = header(HEADER_REQUEST_ID);
        log::info!("mock {path} task={task_id} request={}", request_id.as_deref().unwrap_or("-"));

        if let Some(rid) = &request_id {
            let cache = self.replay.lock().expect("replay cache poisoned");
            if let Some(hit) = cache.get(&(path.to_string(), rid.clone())) {
                return hit.clone();
            }
        }
        let out = match path {
            PATH_EDIT => self.edit(&task_id, body),
            PATH_SEGMENT => self.segment(&task_id, body),
            PATH_REWRITE => self.rewrite(&task_id, body),
            _ => error_response(StatusCode::NOT_FOUND, "not_found", path),
        };
        if let Some(rid) = request_id {
            self.replay
                .lock()
                .expect("replay cache poisoned")
                .insert((path.to_string(), rid), out.clone());
        }
        out
    }

    fn edit(&self, task_id: &str, body: &Bytes) -> (StatusCode, Bytes) {
        if !self.serves(&[Role::Editor]) {
            return error_response(StatusCode::NOT_FOUND, "role_not_served", "editor role is not served here");
        }
        let req: EditRequestBody = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return error_response(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
        };
        let mut img = match decode_image(&req.image_png_b64) {
            Ok(i) => i,
            Err(e) => return error_response(StatusCode::BAD_REQUEST, "bad_image", e.0),
        };
        if self.forced_failure(task_id, PATH_EDIT, body) {
            return error_response(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "editor failure injected");
        }
        let dims = img.dims();
        let truth = self.cfg.truth_table.get(task_id).and_then(|t| clamp_bbox(t, dims));
        let mut rng = rng_for(self.cfg.seed, &[b"edit", task_id.as_bytes()]);
        let drawn = match self.cfg.behavior {
            MockBehavior::Oracle => truth,
            MockBehavior::Jitter => truth.and_then(|t| jittered_box(&t, self.cfg.jitter_px, dims, &mut rng)),
            MockBehavior::Hallucinate => hallucinated_box(truth.as_ref(), dims, &mut rng),
            MockBehavior::Fail => unreachable!("handled by forced_failure"),
        };
        if let Some(b) = drawn {
            img.draw_outline(&b, HIGHLIGHT, self.cfg.stroke);
        }
        match encode_image(&img) {
            Ok(b64) => ok_json(&EditResponseBody { image_png_b64: b64 }),
            Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "encode", e.0),
        }
    }

    fn segment(&self, task_id: &str, body: &Bytes) -> (StatusCode, Bytes) {
        if !self.serves(&[Role::SegmenterSmall, Role::SegmenterLarge]) {
            return error_response(StatusCode::NOT_FOUND, "role_not_served", "no segmenter role is served here");
        }
        let raw: SegmentRequestBody = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return error_response(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
        };
        let req = match SegmentRequest::from_body(&raw) {
            Ok(r) => r,
            Err(e) => return error_response(StatusCode::BAD_REQUEST, "bad_request", e.0),
        };
        if self.forced_failure(task_id, PATH_SEGMENT, body) {
            return ok_json(&SegmentResponse::default().to_body().expect("empty response encodes"));
        }
        let score = match self.cfg.behavior {
            MockBehavior::Hallucinate => HALLUCINATED_SCORE,
            _ => ORACLE_SCORE,
        };
        let dims = req.image.dims();
        let rects: Vec<BBox> = match &req.prompt {
            Prompt::Boxes(boxes) => boxes
                .iter()
                .filter_map(|b| clamp_bbox(b, dims))
                .map(|b| shrink_box(&b, self.cfg.shrink))
                .collect(),
            // The crop sent in text mode is taken to be the referred object.
            Prompt::Text(t) if t.trim().is_empty() => {
                return error_response(StatusCode::BAD_REQUEST, "bad_request", "empty text prompt")
            }
            Prompt::Text(_) => vec![dims.full_box()],
        };
        let masks = rects
            .iter()
            .map(|r| BinaryMask::from_rect(dims.width, dims.height, r, score).expect("valid mask"))
            .collect();
        match (SegmentResponse { masks }).to_body() {
            Ok(b) => ok_json(&b),
            Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "encode", e.0),
        }
    }

    fn rewrite(&self, task_id: &str, body: &Bytes) -> (StatusCode, Bytes) {
        if !self.serves(&[Role::Rewriter]) {
            return error_response(StatusCode::NOT_FOUND, "role_not_served", "rewriter role is not served here");
        }
        let req: RewriteBody = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return error_response(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
        };
        if req.query.trim().is_empty() {
            return error_response(StatusCode::BAD_REQUEST, "bad_request", "empty query");
        }
        if self.forced_failure(task_id, PATH_REWRITE, body) {
            return error_response(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "rewriter failure injected");
        }
        ok_json(&RewriteBody {
            query: strip_suffixes(&req.query, &self.cfg.rewrite_suffixes),
        })
    }
}

/// Removes trailing instructions (case-insensitive) until none match.
pub fn strip_suffixes(query: &str, suffixes: &[String]) -> String {
    let mut q = query.trim().to_string();
    loop {
        let lower = q.to_lowercase();
        let hit = suffixes
            .iter()
            .map(|s| s.trim())
            .find(|s| !s.is_empty() && lower.ends_with(&s.to_lowercase()));
        match hit {
            Some(s) if s.len() < q.len() => {
                q.truncate(q.len() - s.len());
                q = q.trim_end().to_string();
            }
            _ => break,
        }
    }
    if q.is_empty() {
        query.trim().to_string()
    } else {
        q
    }
}

/// A running mock server. Dropping it shuts the server down.
pub struct MockServer {
    addr: SocketAddr,
    roles: Vec<Role>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn endpoint(&self, role: Role) -> BackendEndpoint {
        BackendEndpoint::new(role, self.base_url(), 10.0, 0).expect("mock url is valid")
    }

    /// Blocks until the server thread exits (or the server is shut down).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

async fn health(State(st): State<Arc<MockState>>) -> Response {
    let roles = Role::ALL
        .iter()
        .filter(|r| st.roles.contains(r))
        .map(|r| r.as_str().to_string())
        .collect();
    into_response(ok_json(&HealthBody {
        status: "ok".into(),
        roles,
    }))
}

fn route(path: &'static str) -> axum::routing::MethodRouter<Arc<MockState>> {
    post(move |State(st): State<Arc<MockState>>, headers: HeaderMap, body: Bytes| async move {
        let out = tokio::task::spawn_blocking(move || st.handle(path, &headers, &body))
            .await
            .unwrap_or_else(|e| error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()));
        into_response(out)
    })
}

async fn fallback() -> Response {
    into_response(error_response(StatusCode::NOT_FOUND, "not_found", "unknown path"))
}

/// Binds `addr` (port 0 picks a free port) and serves `roles` until shut down.
pub fn spawn_mock_backend(cfg: MockConfig, roles: &[Role], addr: &str) -> std::io::Result<MockServer> {
    cfg.validate()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let state = Arc::new(MockState {
        cfg,
        roles: roles.to_vec(),
        replay: Mutex::new(HashMap::new()),
    });
    let app = Router::new()
        .route(PATH_HEALTH, get(health))
        .route(PATH_EDIT, route(PATH_EDIT))
        .route(PATH_SEGMENT, route(PATH_SEGMENT))
        .route(PATH_REWRITE, route(PATH_REWRITE))
        .fallback(fallback)
        .with_state(state);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name(format!("mock-backend-{}", local.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("mock backend listener: {e}");
                        return;
                    }
                };
                let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = serve.await {
                    log::error!("mock backend stopped: {e}");
                }
            });
        })?;
    Ok(MockServer {
        addr: local,
        roles: roles.to_vec(),
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: i64, b: i64, c: i64, d: i64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn shrink_is_centered_with_floor() {
        assert_eq!(shrink_box(&bx(0, 0, 100, 100), 0.8), bx(10, 10, 90, 90));
        assert_eq!(shrink_box(&bx(5, 5, 16, 16), 1.0), bx(5, 5, 16, 16));
        // 11 * 0.8 = 8.8 -> 8, offset (11 - 8) / 2 = 1
        assert_eq!(shrink_box(&bx(0, 0, 11, 11), 0.8), bx(1, 1, 9, 9));
    }

    #[test]
    fn hallucination_is_disjoint() {
        let dims = Dims::new(256, 256).unwrap();
        for seed in 0..200u64 {
            let mut rng = rng_for(seed, &[b"t"]);
            let truth = bx(20, 30, 20 + (seed as i64 % 150) + 5, 200);
            let h = hallucinated_box(Some(&truth), dims, &mut rng).unwrap();
            assert!(h.intersection(&truth).is_none(), "seed {seed}: {h} vs {truth}");
            assert!(h.is_within(dims));
        }
    }

    #[test]
    fn hallucination_impossible_when_truth_fills_frame() {
        let dims = Dims::new(64, 64).unwrap();
        let mut rng = rng_for(1, &[]);
        assert_eq!(hallucinated_box(Some(&dims.full_box()), dims, &mut rng), None);
    }

    #[test]
    fn suffix_stripping() {
        let sfx = vec!["Answer in one word.".to_string()];
        assert_eq!(strip_suffixes("Find the ship. Answer in one word.", &sfx), "Find the ship.");
        assert_eq!(strip_suffixes("Find the ship.", &[]), "Find the ship.");
        assert_eq!(strip_suffixes("Answer in one word.", &sfx), "Answer in one word.");
    }

    #[test]
    fn jitter_stays_in_bounds() {
        let dims = Dims::new(100, 100).unwrap();
        for seed in 0..50 {
            let mut rng = rng_for(seed, &[]);
            let b = jittered_box(&bx(0, 0, 10, 10), 5, dims, &mut rng).unwrap();
            assert!(b.is_within(dims));
        }
    }
}
