//! JSON bodies of the model-service protocol and their raster payload codecs.
//!
//! Images travel as base64 PNG; masks as base64 single-channel PNG holding
//! 0 (background) or 255 (foreground).

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, BinaryMask};
use crate::imaging::ImageBuffer;

pub const PATH_EDIT: &str = "/v1/edit";
pub const PATH_SEGMENT: &str = "/v1/segment";
pub const PATH_REWRITE: &str = "/v1/rewrite";
pub const PATH_HEALTH: &str = "/v1/health";

pub const HEADER_TASK_ID: &str = "x-task-id";
pub const HEADER_REQUEST_ID: &str = "x-request-id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRequestBody {
    pub image_png_b64: String,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditResponseBody {
    pub image_png_b64: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Text,
    Boxes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRequestBody {
    pub image_png_b64: String,
    pub prompt_mode: PromptMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BBox>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskBody {
    pub mask_png_b64: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponseBody {
    pub masks: Vec<MaskBody>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteBody {
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthBody {
    pub status: String,
    pub roles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            error: ErrorDetail {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

/// What a segmentation request is conditioned on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prompt {
    Text(String),
    Boxes(Vec<BBox>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRequest {
    pub image: ImageBuffer,
    pub prompt: Prompt,
}

impl SegmentRequest {
    pub fn to_body(&self) -> Result<SegmentRequestBody, CodecError> {
        let image_png_b64 = encode_image(&self.image)?;
        Ok(match &self.prompt {
            Prompt::Text(t) => SegmentRequestBody {
                image_png_b64,
                prompt_mode: PromptMode::Text,
                text: Some(t.clone()),
                boxes: None,
            },
            Prompt::Boxes(b) => SegmentRequestBody {
                image_png_b64,
                prompt_mode: PromptMode::Boxes,
                text: None,
                boxes: Some(b.clone()),
            },
        })
    }

    /// Parses a wire body, requiring exactly the fields its prompt mode needs.
    pub fn from_body(body: &SegmentRequestBody) -> Result<Self, CodecError> {
        let image = decode_image(&body.image_png_b64)?;
        let prompt = match (body.prompt_mode, &body.text, &body.boxes) {
            (PromptMode::Text, Some(t), None) => Prompt::Text(t.clone()),
            (PromptMode::Boxes, None, Some(b)) => Prompt::Boxes(b.clone()),
            (PromptMode::Text, _, _) => {
                return Err(CodecError("text mode requires `text` and forbids `boxes`".into()))
            }
            (PromptMode::Boxes, _, _) => {
                return Err(CodecError("boxes mode requires `boxes` and forbids `text`".into()))
            }
        };
        Ok(Self { image, prompt })
    }
}

/// Masks at request-image resolution; may be empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentResponse {
    pub masks: Vec<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct CodecError(pub String);

pub fn encode_image(img: &ImageBuffer) -> Result<String, CodecError> {
    let png = img.encode_png().map_err(|e| CodecError(e.to_string()))?;
    Ok(STANDARD.encode(png))
}

pub fn decode_image(b64: &str) -> Result<ImageBuffer, CodecError> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| CodecError(format!("bad base64 image: {e}")))?;
    ImageBuffer::decode(&bytes).map_err(|e| CodecError(format!("bad image: {e}")))
}

pub fn encode_mask(m: &BinaryMask) -> Result<String, CodecError> {
    let raw = m.bits().iter().map(|b| if *b { 255u8 } else { 0 }).collect();
    let img = GrayImage::from_raw(m.width(), m.height(), raw).expect("one byte per pixel");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| CodecError(e.to_string()))?;
    Ok(STANDARD.encode(out.into_inner()))
}

pub fn decode_mask(b64: &str, score: f64) -> Result<BinaryMask, CodecError> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| CodecError(format!("bad base64 mask: {e}")))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| CodecError(format!("bad mask png: {e}")))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let bits = img.into_raw().into_iter().map(|v| v >= 128).collect();
    BinaryMask::new(w, h, bits, score).map_err(|e| CodecError(e.to_string()))
}

impl SegmentResponse {
    pub fn to_body(&self) -> Result<SegmentResponseBody, CodecError> {
        let masks = self
            .masks
            .iter()
            .map(|m| {
                Ok(MaskBody {
                    mask_png_b64: encode_mask(m)?,
                    score: m.score(),
                })
            })
            .collect::<Result<_, CodecError>>()?;
        Ok(SegmentResponseBody { masks })
    }

    pub fn from_body(body: &SegmentResponseBody) -> Result<Self, CodecError> {
        let masks = body
            .masks
            .iter()
            .map(|m| decode_mask(&m.mask_png_b64, m.score))
            .collect::<Result<_, _>>()?;
        Ok(Self { masks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_body_field_names() {
        let img = ImageBuffer::filled(4, 3, [1, 2, 3]).unwrap();
        let req = SegmentRequest {
            image: img.clone(),
            prompt: Prompt::Boxes(vec![BBox::new(0, 0, 2, 2).unwrap()]),
        };
        let v = serde_json::to_value(req.to_body().unwrap()).unwrap();
        assert_eq!(v["prompt_mode"], "boxes");
        assert_eq!(v["boxes"], serde_json::json!([[0, 0, 2, 2]]));
        assert!(v.get("text").is_none());
        let back: SegmentRequestBody = serde_json::from_value(v).unwrap();
        assert_eq!(SegmentRequest::from_body(&back).unwrap(), req);
    }

    #[test]
    fn prompt_fields_must_match_mode() {
        let img = encode_image(&ImageBuffer::filled(2, 2, [0, 0, 0]).unwrap()).unwrap();
        let body = SegmentRequestBody {
            image_png_b64: img,
            prompt_mode: PromptMode::Text,
            text: None,
            boxes: Some(vec![]),
        };
        assert!(SegmentRequest::from_body(&body).is_err());
    }

    #[test]
    fn mask_codec_round_trip() {
        let mut m = BinaryMask::empty(7, 5, 0.75).unwrap();
        m.set(1, 2, true);
        m.set(6, 4, true);
        let back = decode_mask(&encode_mask(&m).unwrap(), 0.75).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn error_body_shape() {
        let v = serde_json::to_value(ErrorBody::new("not_found", "nope")).unwrap();
        assert_eq!(v, serde_json::json!({"error": {"code": "not_found", "message": "nope"}}));
    }
}
