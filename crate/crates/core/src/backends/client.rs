use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::protocol::{
    decode_image, encode_image, EditRequestBody, EditResponseBody, ErrorBody, HealthBody,
    RewriteBody, SegmentRequest, SegmentResponse, SegmentResponseBody, HEADER_REQUEST_ID,
    HEADER_TASK_ID, PATH_EDIT, PATH_HEALTH, PATH_REWRITE, PATH_SEGMENT,
};
use crate::error::BackendError;
use crate::imaging::ImageBuffer;

const MAX_BODY_BYTES: u64 = 512 * 1024 * 1024;

/// The model roles the pipeline delegates to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Editor,
    /// General promptable segmenter, used for small crops.
    SegmenterSmall,
    /// Remote-sensing segmenter, used for large crops.
    SegmenterLarge,
    Rewriter,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Editor,
        Role::SegmenterSmall,
        Role::SegmenterLarge,
        Role::Rewriter,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Editor => "editor",
            Role::SegmenterSmall => "segmenter_small",
            Role::SegmenterLarge => "segmenter_large",
            Role::Rewriter => "rewriter",
        }
    }

    pub fn is_segmenter(&self) -> bool {
        matches!(self, Role::SegmenterSmall | Role::SegmenterLarge)
    }

    /// The other segmenter; identity for non-segmenters.
    pub fn alternate(&self) -> Role {
        match self {
            Role::SegmenterSmall => Role::SegmenterLarge,
            Role::SegmenterLarge => Role::SegmenterSmall,
            r => *r,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// Where one role is served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    role: Role,
    base_url: String,
    timeout_secs: f64,
    retries: u32,
}

impl BackendEndpoint {
    pub fn new(role: Role, base_url: impl Into<String>, timeout_secs: f64, retries: u32) -> Result<Self, String> {
        if !(timeout_secs > 0.0) {
            return Err(format!("timeout must be > 0, got {timeout_secs}"));
        }
        let base_url = base_url.into().trim_end_matches('/').to_string();
        if !base_url.starts_with("http://") && !base_url.starts_with("https://") {
            return Err(format!("base_url must be an http(s) URL, got `{base_url}`"));
        }
        Ok(Self {
            role,
            base_url,
            timeout_secs,
            retries,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }
    pub fn base_url(&self) -> &str {
        &self.base_url
    }
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
    pub fn retries(&self) -> u32 {
        self.retries
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }
}

/// Headers attached to every call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestMeta {
    pub task_id: String,
    pub request_id: String,
}

/// Blocking HTTP client for one endpoint. Cheap to clone and share.
#[derive(Clone)]
pub struct BackendClient {
    endpoint: BackendEndpoint,
    agent: ureq::Agent,
}

impl fmt::Debug for BackendClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendClient").field("endpoint", &self.endpoint).finish()
    }
}

impl BackendClient {
    pub fn new(endpoint: BackendEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Self { endpoint, agent }
    }

    pub fn endpoint(&self) -> &BackendEndpoint {
        &self.endpoint
    }

    fn require(&self, ok: bool, wanted: &str) -> Result<(), BackendError> {
        if ok {
            Ok(())
        } else {
            Err(BackendError::WrongRole {
                wanted: wanted.to_string(),
                actual: self.endpoint.role.to_string(),
            })
        }
    }

    fn read_body<T: DeserializeOwned>(
        &self,
        url: &str,
        mut resp: ureq::http::Response<ureq::Body>,
    ) -> Result<T, BackendError> {
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_vec()
            .map_err(|e| BackendError::Transport {
                url: url.to_string(),
                message: e.to_string(),
            })?;
        if status != 200 {
            let (code, message) = match serde_json::from_slice::<ErrorBody>(&bytes) {
                Ok(b) => (b.error.code, b.error.message),
                Err(_) => (
                    "unstructured".to_string(),
                    String::from_utf8_lossy(&bytes).into_owned(),
                ),
            };
            return Err(BackendError::Status {
                url: url.to_string(),
                status,
                code,
                message,
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| BackendError::Protocol {
            url: url.to_string(),
            message: format!("malformed response body: {e}"),
        })
    }

    fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
        meta: &RequestMeta,
    ) -> Result<T, BackendError> {
        let url = self.endpoint.url(path);
        let payload = serde_json::to_vec(body).expect("protocol bodies serialize");
        let mut attempt = 0;
        loop {
            let result = self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .header(HEADER_TASK_ID, &meta.task_id)
                .header(HEADER_REQUEST_ID, &meta.request_id)
                .send(&payload[..])
                .map_err(|e| BackendError::Transport {
                    url: url.clone(),
                    message: e.to_string(),
                })
                .and_then(|resp| self.read_body(&url, resp));
            match result {
                Err(e) if e.is_retryable() && attempt < self.endpoint.retries => {
                    attempt += 1;
                    log::debug!("retrying {url} after {e} (attempt {attempt})");
                    std::thread::sleep(Duration::from_millis(20 * attempt as u64));
                }
                other => return other,
            }
        }
    }

    pub fn health(&self) -> Result<HealthBody, BackendError> {
        let url = self.endpoint.url(PATH_HEALTH);
        let resp = self.agent.get(&url).call().map_err(|e| BackendError::Transport {
            url: url.clone(),
            message: e.to_string(),
        })?;
        let body: HealthBody = self.read_body(&url, resp)?;
        if body.status != "ok" {
            return Err(BackendError::Protocol {
                url,
                message: format!("health status `{}`", body.status),
            });
        }
        Ok(body)
    }

    /// Asks the editor to highlight the described object. The returned raster
    /// has the input's dimensions.
    pub fn edit_image(
        &self,
        image: &ImageBuffer,
        instruction: &str,
        meta: &RequestMeta,
    ) -> Result<ImageBuffer, BackendError> {
        self.require(self.endpoint.role == Role::Editor, "editor")?;
        let url = self.endpoint.url(PATH_EDIT);
        let body = EditRequestBody {
            image_png_b64: encode_image(image).map_err(|e| BackendError::Protocol {
                url: url.clone(),
                message: e.0,
            })?,
            instruction: instruction.to_string(),
        };
        let resp: EditResponseBody = self.post(PATH_EDIT, &body, meta)?;
        let edited = decode_image(&resp.image_png_b64).map_err(|e| BackendError::Protocol {
            url: url.clone(),
            message: e.0,
        })?;
        if edited.dims() != image.dims() {
            return Err(BackendError::Protocol {
                url,
                message: format!(
                    "edited image is {}x{}, request was {}x{}",
                    edited.width(),
                    edited.height(),
                    image.width(),
                    image.height()
                ),
            });
        }
        Ok(edited)
    }

    pub fn segment(&self, req: &SegmentRequest, meta: &RequestMeta) -> Result<SegmentResponse, BackendError> {
        self.require(self.endpoint.role.is_segmenter(), "segmenter")?;
        let url = self.endpoint.url(PATH_SEGMENT);
        let protocol = |message: String| BackendError::Protocol {
            url: url.clone(),
            message,
        };
        let body = req.to_body().map_err(|e| protocol(e.0))?;
        let resp: SegmentResponseBody = self.post(PATH_SEGMENT, &body, meta)?;
        if let Some(bad) = resp.masks.iter().find(|m| !(0.0..=1.0).contains(&m.score)) {
            return Err(protocol(format!("mask score {} outside [0, 1]", bad.score)));
        }
        let decoded = SegmentResponse::from_body(&resp).map_err(|e| protocol(e.0))?;
        let want = (req.image.width(), req.image.height());
        if let Some(m) = decoded.masks.iter().find(|m| m.dims() != want) {
            return Err(protocol(format!(
                "mask is {}x{}, request image is {}x{}",
                m.width(),
                m.height(),
                want.0,
                want.1
            )));
        }
        Ok(decoded)
    }

    /// Raw rewrite call; callers degrade to the original query on error.
    pub fn rewrite_query(&self, query: &str, meta: &RequestMeta) -> Result<String, BackendError> {
        self.require(self.endpoint.role == Role::Rewriter, "rewriter")?;
        let resp: RewriteBody = self.post(
            PATH_REWRITE,
            &RewriteBody {
                query: query.to_string(),
            },
            meta,
        )?;
        if resp.query.trim().is_empty() {
            return Err(BackendError::Protocol {
                url: self.endpoint.url(PATH_REWRITE),
                message: "rewriter returned an empty query".into(),
            });
        }
        Ok(resp.query)
    }
}
