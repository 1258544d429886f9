//! Protocol conformance probe for any server claiming to speak the model
//! protocol. It checks shapes, not model quality: field names, mask
//! dimensions, score ranges, replay idempotency, and error bodies.

use std::time::Duration;

use serde_json::{json, Value};

use super::protocol::{
    decode_image, decode_mask, encode_image, HEADER_REQUEST_ID, HEADER_TASK_ID, PATH_EDIT,
    PATH_HEALTH, PATH_REWRITE, PATH_SEGMENT,
};
use super::Role;
use crate::imaging::ImageBuffer;

/// One conformance finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub endpoint: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ConformanceReport {
    pub checks: Vec<Check>,
}

impl ConformanceReport {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn record(&mut self, name: &str, endpoint: &'static str, result: Result<(), String>) {
        let (passed, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.checks.push(Check {
            name: name.to_string(),
            endpoint,
            passed,
            detail,
        });
    }
}

struct Probe {
    base: String,
    agent: ureq::Agent,
}

struct Reply {
    status: u16,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Result<Value, String> {
        serde_json::from_slice(&self.body).map_err(|e| format!("body is not JSON: {e}"))
    }
}

impl Probe {
    fn get(&self, path: &str) -> Result<Reply, String> {
        let mut resp = self
            .agent
            .get(format!("{}{}", self.base, path))
            .call()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_vec().map_err(|e| e.to_string())?;
        Ok(Reply { status, body })
    }

    fn post(&self, path: &str, body: &[u8], request_id: &str) -> Result<Reply, String> {
        let mut resp = self
            .agent
            .post(format!("{}{}", self.base, path))
            .header("content-type", "application/json")
            .header(HEADER_TASK_ID, "conformance")
            .header(HEADER_REQUEST_ID, request_id)
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| e.to_string())?;
        Ok(Reply { status, body })
    }
}

fn check_error_body(v: &Value) -> Result<(), String> {
    let err = v.get("error").ok_or("missing `error` object")?;
    for field in ["code", "message"] {
        if !err.get(field).is_some_and(Value::is_string) {
            return Err(format!("error.{field} missing or not a string"));
        }
    }
    Ok(())
}

fn expect_ok(reply: &Reply) -> Result<Value, String> {
    let v = reply.json()?;
    if reply.status != 200 {
        return Err(format!("status {}: {}", reply.status, String::from_utf8_lossy(&reply.body)));
    }
    Ok(v)
}

fn str_field<'a>(v: &'a Value, field: &str) -> Result<&'a str, String> {
    v.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("missing string field `{field}`"))
}

fn check_masks(v: &Value, want: (u32, u32)) -> Result<usize, String> {
    let masks = v
        .get("masks")
        .and_then(Value::as_array)
        .ok_or("missing array field `masks`")?;
    for (i, m) in masks.iter().enumerate() {
        let score = m
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| format!("masks[{i}].score missing or not a number"))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(format!("masks[{i}].score {score} outside [0, 1]"));
        }
        let mask = decode_mask(str_field(m, "mask_png_b64")?, score).map_err(|e| format!("masks[{i}]: {e}"))?;
        if mask.dims() != want {
            return Err(format!(
                "masks[{i}] is {}x{}, request image is {}x{}",
                mask.width(),
                mask.height(),
                want.0,
                want.1
            ));
        }
    }
    Ok(masks.len())
}

fn fixture() -> ImageBuffer {
    let mut img = ImageBuffer::filled(48, 40, [96, 112, 100]).unwrap();
    img.fill_rect(&crate::geometry::BBox::new(10, 8, 30, 26).unwrap(), [40, 60, 150]);
    img
}

/// Exercises every advertised role of the server at `base_url`.
pub fn run_conformance(base_url: &str) -> ConformanceReport {
    let probe = Probe {
        base: base_url.trim_end_matches('/').to_string(),
        agent: ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into(),
    };
    let mut report = ConformanceReport::default();

    let mut roles: Vec<Role> = Vec::new();
    let health = probe.get(PATH_HEALTH).and_then(|r| expect_ok(&r)).and_then(|v| {
        if str_field(&v, "status")? != "ok" {
            return Err("status is not \"ok\"".into());
        }
        let listed = v
            .get("roles")
            .and_then(Value::as_array)
            .ok_or("missing array field `roles`")?;
        for r in listed {
            let name = r.as_str().ok_or("role entry is not a string")?;
            roles.push(name.parse()?);
        }
        Ok(())
    });
    report.record("health", PATH_HEALTH, health);

    let img = fixture();
    let want = (img.width(), img.height());
    let image_b64 = encode_image(&img).expect("fixture encodes");

    let mut replay_targets: Vec<(&'static str, Vec<u8>)> = Vec::new();

    if roles.contains(&Role::Editor) {
        let body = serde_json::to_vec(&json!({
            "image_png_b64": image_b64,
            "instruction": "Draw a red bounding box around: the blue roof. Do not modify anything else.",
        }))
        .unwrap();
        let r = probe.post(PATH_EDIT, &body, "conf-edit").and_then(|r| expect_ok(&r)).and_then(|v| {
            let edited = decode_image(str_field(&v, "image_png_b64")?).map_err(|e| e.to_string())?;
            if edited.dims() != img.dims() {
                return Err(format!("edited image is {}x{}, expected {}x{}", edited.width(), edited.height(), want.0, want.1));
            }
            Ok(())
        });
        report.record("edit returns same-size image", PATH_EDIT, r);
        replay_targets.push((PATH_EDIT, body));
    }

    if roles.iter().any(Role::is_segmenter) {
        let boxes = serde_json::to_vec(&json!({
            "image_png_b64": image_b64,
            "prompt_mode": "boxes",
            "boxes": [[10, 8, 30, 26]],
        }))
        .unwrap();
        let r = probe
            .post(PATH_SEGMENT, &boxes, "conf-seg-boxes")
            .and_then(|r| expect_ok(&r))
            .and_then(|v| check_masks(&v, want).map(|_| ()));
        report.record("segment boxes mode", PATH_SEGMENT, r);

        let text = serde_json::to_vec(&json!({
            "image_png_b64": image_b64,
            "prompt_mode": "text",
            "text": "the blue roof",
        }))
        .unwrap();
        let r = probe
            .post(PATH_SEGMENT, &text, "conf-seg-text")
            .and_then(|r| expect_ok(&r))
            .and_then(|v| check_masks(&v, want).map(|_| ()));
        report.record("segment text mode", PATH_SEGMENT, r);

        let r = probe.post(PATH_SEGMENT, b"{not json", "conf-bad-json").and_then(|reply| {
            if !(400..600).contains(&reply.status) {
                return Err(format!("malformed body answered {}", reply.status));
            }
            check_error_body(&reply.json()?)
        });
        report.record("malformed body yields error body", PATH_SEGMENT, r);

        let mismatched = serde_json::to_vec(&json!({
            "image_png_b64": image_b64,
            "prompt_mode": "boxes",
            "text": "the blue roof",
        }))
        .unwrap();
        let r = probe.post(PATH_SEGMENT, &mismatched, "conf-mode-mismatch").and_then(|reply| {
            if !(400..500).contains(&reply.status) {
                return Err(format!("boxes mode without boxes answered {}", reply.status));
            }
            check_error_body(&reply.json()?)
        });
        report.record("prompt fields must match mode", PATH_SEGMENT, r);

        replay_targets.push((PATH_SEGMENT, boxes));
    }

    if roles.contains(&Role::Rewriter) {
        let body = serde_json::to_vec(&json!({"query": "Find the ship. Answer in one word."})).unwrap();
        let r = probe.post(PATH_REWRITE, &body, "conf-rewrite").and_then(|r| expect_ok(&r)).and_then(|v| {
            if str_field(&v, "query")?.trim().is_empty() {
                return Err("rewriter returned an empty query".into());
            }
            Ok(())
        });
        report.record("rewrite returns non-empty query", PATH_REWRITE, r);
        replay_targets.push((PATH_REWRITE, body));
    }

    for (path, body) in replay_targets {
        let rid = format!("conf-replay-{}", path.trim_start_matches("/v1/"));
        let r = probe.post(path, &body, &rid).and_then(|first| {
            let second = probe.post(path, &body, &rid)?;
            if first.status != second.status || first.body != second.body {
                return Err("replayed x-request-id produced a different response".into());
            }
            Ok(())
        });
        report.record("x-request-id replay is byte-identical", path, r);
    }

    report
}
