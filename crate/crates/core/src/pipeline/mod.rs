//! The grounding orchestrator.
//!
//! One task runs as a fixed sequence: enhance the image, rewrite the query,
//! ask the editor to highlight the target, decode the highlights into cue
//! boxes, segment each cue, refine each candidate on its own crop with the
//! segmenter picked by crop area, then pick a single final box. Failures in
//! segmentation fall back from the chosen segmenter to the other one and
//! finally to the editor's cue box.

mod batch;
mod keywords;
mod trace;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{
    BackendClient, BackendEndpoint, Prompt, RequestMeta, Role, SegmentRequest, SegmentResponse,
};
use crate::cues::{extract_cues, RedCueParams};
use crate::error::{BackendError, PipelineError};
use crate::geometry::{
    area_ratio_percent, clamp_bbox, expand_bbox, mask_to_bbox, remap_to_original, BBox,
    BinaryMask, Dims,
};
use crate::imaging::{preprocess, EnhanceParams, ImageBuffer};

pub use batch::{ground_batch, run_ordered};
pub use keywords::{default_keywords, strip_directional_keywords, DEFAULT_DIRECTIONAL_KEYWORDS};
pub use trace::{
    BackendCall, CallOutcome, CandidateRecord, FallbackEvent, FallbackStep, PipelineTrace,
    Provenance, Routing, Stage, StageRecord,
};

pub const DEFAULT_EDIT_INSTRUCTION: &str =
    "Draw a red bounding box around: {query}. Do not modify anything else.";

/// How the initial segmentation is conditioned on the editor's highlights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSegmentation {
    /// Box prompts from the decoded cues, on the enhanced (unedited) image.
    CueBoxes,
    /// Box prompts from the decoded cues, on the edited image.
    EditedImageBoxes,
    /// The edited image with the rewritten query as a text prompt; masks are
    /// restricted to each cue box.
    EditedImageText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSettings {
    pub base_url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Crops covering more than this percentage of the image go to the large segmenter.
    pub p_threshold: f64,
    pub directional_keywords: Vec<String>,
    pub enhance: EnhanceParams,
    pub cue: RedCueParams,
    pub min_mask_pixels: usize,
    pub min_mask_score: f64,
    pub crop_margin: f64,
    /// Editor instruction; `{query}` is replaced by the rewritten query.
    pub edit_instruction: String,
    pub initial_segmentation: InitialSegmentation,
    pub endpoints: BTreeMap<Role, EndpointSettings>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            p_threshold: 10.0,
            directional_keywords: default_keywords(),
            enhance: EnhanceParams::default(),
            cue: RedCueParams::default(),
            min_mask_pixels: 10,
            min_mask_score: 0.0,
            crop_margin: 0.0,
            edit_instruction: DEFAULT_EDIT_INSTRUCTION.to_string(),
            initial_segmentation: InitialSegmentation::CueBoxes,
            endpoints: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.p_threshold > 0.0 && self.p_threshold < 100.0) {
            return bad(format!("p_threshold must be in (0, 100), got {}", self.p_threshold));
        }
        if !(self.crop_margin >= 0.0) {
            return bad(format!("crop_margin must be >= 0, got {}", self.crop_margin));
        }
        if !(0.0..=1.0).contains(&self.min_mask_score) {
            return bad(format!("min_mask_score must be in [0, 1], got {}", self.min_mask_score));
        }
        if let Some(k) = self.directional_keywords.iter().find(|k| {
            k.is_empty() || !k.chars().all(char::is_alphanumeric)
        }) {
            return bad(format!("directional keyword `{k}` must be a single word"));
        }
        if !self.edit_instruction.contains("{query}") {
            return bad("edit_instruction must contain `{query}`".into());
        }
        self.enhance
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.cue.validate().map_err(PipelineError::Config)?;
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn endpoint(&self, role: Role) -> Result<BackendEndpoint, PipelineError> {
        let s = self
            .endpoints
            .get(&role)
            .ok_or_else(|| PipelineError::MissingEndpoint(role.to_string()))?;
        BackendEndpoint::new(role, s.base_url.clone(), s.timeout_secs, s.retries)
            .map_err(|e| PipelineError::Config(format!("endpoint {role}: {e}")))
    }

    /// Points every role at `base_url`.
    pub fn with_all_endpoints(mut self, base_url: &str) -> Self {
        for role in Role::ALL {
            self.endpoints.insert(
                role,
                EndpointSettings {
                    base_url: base_url.to_string(),
                    timeout_secs: default_timeout(),
                    retries: default_retries(),
                },
            );
        }
        self
    }

    pub fn set_endpoint(&mut self, role: Role, base_url: &str) {
        self.endpoints.insert(
            role,
            EndpointSettings {
                base_url: base_url.to_string(),
                timeout_secs: default_timeout(),
                retries: default_retries(),
            },
        );
    }
}

/// One unit of grounding work.
#[derive(Debug, Clone)]
pub struct GroundingTask {
    pub task_id: String,
    pub image: Arc<ImageBuffer>,
    pub query: String,
    pub ground_truth: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub task_id: String,
    pub final_box: Option<BBox>,
    pub provenance: Provenance,
    /// Boxes decoded from the edited image, in cue order.
    pub cue_boxes: Vec<BBox>,
    pub trace: PipelineTrace,
}

/// Which segmenter refines a crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Large,
    Small,
}

impl Route {
    pub fn role(&self) -> Role {
        match self {
            Route::Large => Role::SegmenterLarge,
            Route::Small => Role::SegmenterSmall,
        }
    }
}

/// Large segmenter iff the crop covers strictly more than `p_threshold` percent.
pub fn select_refiner(crop_box: &BBox, dims: Dims, p_threshold: f64) -> Route {
    if area_ratio_percent(crop_box, dims) > p_threshold {
        Route::Large
    } else {
        Route::Small
    }
}

/// Best qualifying mask: highest score, then most foreground, then first.
pub fn is_valid_mask<'a>(
    resp: &'a SegmentResponse,
    min_mask_pixels: usize,
    min_mask_score: f64,
) -> Option<&'a BinaryMask> {
    let mut best: Option<(&BinaryMask, usize)> = None;
    for m in &resp.masks {
        let count = m.foreground_count();
        if count < min_mask_pixels || m.score() < min_mask_score || count == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, bc)) => m.score() > b.score() || (m.score() == b.score() && count > bc),
        };
        if better {
            best = Some((m, count));
        }
    }
    best.map(|(m, _)| m)
}

fn digest_image(img: &ImageBuffer) -> String {
    trace::digest_parts(&[
        &img.width().to_le_bytes(),
        &img.height().to_le_bytes(),
        img.pixels(),
    ])
}

fn request_id(task_id: &str, stage: Stage, index: usize, role: Role, input_digest: &str) -> String {
    trace::digest_parts(&[
        task_id.as_bytes(),
        stage.as_str().as_bytes(),
        &(index as u64).to_le_bytes(),
        role.as_str().as_bytes(),
        input_digest.as_bytes(),
    ])
}

struct Refined {
    bbox: BBox,
    score: Option<f64>,
    provenance: Provenance,
    cue_index: usize,
}

/// Clients for all four roles plus the configuration they run under.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    clients: BTreeMap<Role, BackendClient>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let clients = Role::ALL
            .into_iter()
            .map(|r| Ok((r, BackendClient::new(cfg.endpoint(r)?))))
            .collect::<Result<_, PipelineError>>()?;
        Ok(Self { cfg, clients })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn client(&self, role: Role) -> &BackendClient {
        &self.clients[&role]
    }

    /// Health-checks every endpoint, returning the roles each one advertises.
    pub fn health(&self) -> BTreeMap<Role, Result<Vec<String>, BackendError>> {
        self.clients
            .iter()
            .map(|(r, c)| (*r, c.health().map(|h| h.roles)))
            .collect()
    }

    fn timed_segment(
        &self,
        role: Role,
        req: &SegmentRequest,
        meta: &RequestMeta,
    ) -> (Result<SegmentResponse, BackendError>, f64) {
        let t0 = Instant::now();
        let r = self.client(role).segment(req, meta);
        (r, t0.elapsed().as_secs_f64() * 1e3)
    }

    /// Segments `req` with `role` and applies the mask validity rule.
    fn try_segment(
        &self,
        role: Role,
        req: &SegmentRequest,
        meta: &RequestMeta,
        rec: &mut StageRecord,
    ) -> Result<BinaryMask, String> {
        let (resp, latency_ms) = self.timed_segment(role, req, meta);
        let (outcome, result) = match resp {
            Err(e) => {
                let msg = e.to_string();
                (CallOutcome::Error { message: msg.clone() }, Err(format!("{role} error: {msg}")))
            }
            Ok(resp) => match is_valid_mask(&resp, self.cfg.min_mask_pixels, self.cfg.min_mask_score) {
                Some(m) => (CallOutcome::Ok, Ok(m.clone())),
                None => {
                    let reason = if resp.masks.is_empty() {
                        "no masks returned".to_string()
                    } else {
                        format!("none of {} masks passed the validity thresholds", resp.masks.len())
                    };
                    (
                        CallOutcome::Invalid { reason: reason.clone() },
                        Err(format!("invalid mask from {role}: {reason}")),
                    )
                }
            },
        };
        rec.calls.push(BackendCall {
            role,
            request_id: meta.request_id.clone(),
            latency_ms,
            outcome,
        });
        result
    }

    pub fn ground(&self, task: &GroundingTask) -> Result<GroundingResult, PipelineError> {
        let cfg = &self.cfg;
        let tid = task.task_id.as_str();
        let mut trace = PipelineTrace::default();
        if task.query.trim().is_empty() {
            return Err(PipelineError::Task {
                task_id: tid.to_string(),
                message: "empty query".into(),
            });
        }

        // (1) enhancement
        let rec = StageRecord::new(Stage::Preprocess, digest_image(&task.image));
        let image = preprocess(&task.image, &cfg.enhance).map_err(|source| PipelineError::Imaging {
            task_id: tid.to_string(),
            stage: "preprocess",
            source,
        })?;
        trace.stages.push(rec);
        let dims = image.dims();
        let image_digest = digest_image(&image);

        // (2) query rewrite, best effort
        let mut rec = StageRecord::new(Stage::Rewrite, trace::digest_parts(&[task.query.as_bytes()]));
        let meta = RequestMeta {
            task_id: tid.to_string(),
            request_id: request_id(tid, Stage::Rewrite, 0, Role::Rewriter, &rec.input_digest),
        };
        let t0 = Instant::now();
        let rewritten = self.client(Role::Rewriter).rewrite_query(&task.query, &meta);
        let latency_ms = t0.elapsed().as_secs_f64() * 1e3;
        let query = match rewritten {
            Ok(q) => {
                rec.calls.push(BackendCall {
                    role: Role::Rewriter,
                    request_id: meta.request_id,
                    latency_ms,
                    outcome: CallOutcome::Ok,
                });
                q
            }
            Err(e) => {
                rec.calls.push(BackendCall {
                    role: Role::Rewriter,
                    request_id: meta.request_id,
                    latency_ms,
                    outcome: CallOutcome::Error { message: e.to_string() },
                });
                rec.notes.push("rewrite failed; using original query".into());
                task.query.clone()
            }
        };
        trace.stages.push(rec);

        // (3) diffusion edit
        let instruction = cfg.edit_instruction.replace("{query}", &query);
        let mut rec = StageRecord::new(
            Stage::Edit,
            trace::digest_parts(&[image_digest.as_bytes(), instruction.as_bytes()]),
        );
        let meta = RequestMeta {
            task_id: tid.to_string(),
            request_id: request_id(tid, Stage::Edit, 0, Role::Editor, &rec.input_digest),
        };
        let t0 = Instant::now();
        let edited = self
            .client(Role::Editor)
            .edit_image(&image, &instruction, &meta)
            .map_err(|source| PipelineError::Backend {
                task_id: tid.to_string(),
                stage: "edit",
                source,
            })?;
        rec.calls.push(BackendCall {
            role: Role::Editor,
            request_id: meta.request_id,
            latency_ms: t0.elapsed().as_secs_f64() * 1e3,
            outcome: CallOutcome::Ok,
        });
        trace.stages.push(rec);

        // (4) cue decoding
        let mut rec = StageRecord::new(Stage::Cues, digest_image(&edited));
        let cues = extract_cues(&edited, &cfg.cue);
        rec.candidates = cues
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| CandidateRecord {
                cue_index: i,
                bbox: *b,
                score: None,
                provenance: None,
            })
            .collect();
        if cues.is_empty() {
            rec.notes.push("no usable cue in edited image".into());
            trace.stages.push(rec);
            return Ok(GroundingResult {
                task_id: tid.to_string(),
                final_box: None,
                provenance: Provenance::None,
                cue_boxes: Vec::new(),
                trace,
            });
        }
        trace.stages.push(rec);

        // (5) initial segmentation
        let candidates = self.initial_segmentation(tid, &image, &edited, &query, &cues.boxes, &mut trace);

        // (6) per-candidate refinement with routing and fallback
        let stripped = strip_directional_keywords(&query, &cfg.directional_keywords);
        let mut refined = Vec::with_capacity(candidates.len());
        for (i, candidate) in candidates.iter().enumerate() {
            refined.push(self.refine(tid, &image, &stripped, &query, i, candidate, &cues.boxes[i], &mut trace));
        }

        // (7) selection
        let mut rec = StageRecord::new(
            Stage::Select,
            trace::digest_parts(&[serde_json::to_vec(&refined.iter().map(|r| (r.bbox, r.score)).collect::<Vec<_>>())
                .expect("serializable")
                .as_slice()]),
        );
        rec.candidates = refined
            .iter()
            .map(|r| CandidateRecord {
                cue_index: r.cue_index,
                bbox: r.bbox,
                score: r.score,
                provenance: Some(r.provenance),
            })
            .collect();
        let winner = refined
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                let sa = a.score.unwrap_or(f64::NEG_INFINITY);
                let sb = b.score.unwrap_or(f64::NEG_INFINITY);
                sa.total_cmp(&sb)
                    .then(a.provenance.is_refined().cmp(&b.provenance.is_refined()))
                    .then(a.bbox.area().cmp(&b.bbox.area()))
                    .then(ib.cmp(ia))
            })
            .map(|(_, r)| r)
            .expect("at least one candidate");
        rec.notes.push(format!("selected cue {}", winner.cue_index));
        trace.stages.push(rec);

        // (8) finalize
        let mut rec = StageRecord::new(Stage::Finalize, trace::digest_parts(&[winner.bbox.to_string().as_bytes()]));
        rec.candidates.push(CandidateRecord {
            cue_index: winner.cue_index,
            bbox: winner.bbox,
            score: winner.score,
            provenance: Some(winner.provenance),
        });
        trace.stages.push(rec);

        debug_assert!(winner.bbox.is_within(dims));
        Ok(GroundingResult {
            task_id: tid.to_string(),
            final_box: Some(winner.bbox),
            provenance: winner.provenance,
            cue_boxes: cues.boxes.clone(),
            trace,
        })
    }

    fn initial_segmentation(
        &self,
        tid: &str,
        image: &ImageBuffer,
        edited: &ImageBuffer,
        query: &str,
        cues: &[BBox],
        trace: &mut PipelineTrace,
    ) -> Vec<BBox> {
        let cfg = &self.cfg;
        let dims = image.dims();
        let source = match cfg.initial_segmentation {
            InitialSegmentation::CueBoxes => image,
            _ => edited,
        };
        let source_digest = digest_image(source);
        let cue_json = serde_json::to_vec(cues).expect("boxes serialize");
        let mut rec = StageRecord::new(
            Stage::InitialSegment,
            trace::digest_parts(&[source_digest.as_bytes(), &cue_json]),
        );
        let role = Role::SegmenterSmall;

        let masks: Vec<Result<BinaryMask, String>> = match cfg.initial_segmentation {
            InitialSegmentation::CueBoxes | InitialSegmentation::EditedImageBoxes => cues
                .iter()
                .enumerate()
                .map(|(i, cue)| {
                    let req = SegmentRequest {
                        image: source.clone(),
                        prompt: Prompt::Boxes(vec![*cue]),
                    };
                    let rid_input = trace::digest_parts(&[source_digest.as_bytes(), cue.to_string().as_bytes()]);
                    let meta = RequestMeta {
                        task_id: tid.to_string(),
                        request_id: request_id(tid, Stage::InitialSegment, i, role, &rid_input),
                    };
                    self.try_segment(role, &req, &meta, &mut rec)
                })
                .collect(),
            InitialSegmentation::EditedImageText => {
                let req = SegmentRequest {
                    image: source.clone(),
                    prompt: Prompt::Text(query.to_string()),
                };
                let meta = RequestMeta {
                    task_id: tid.to_string(),
                    request_id: request_id(tid, Stage::InitialSegment, 0, role, &rec.input_digest),
                };
                let (resp, latency_ms) = self.timed_segment(role, &req, &meta);
                let outcome = match &resp {
                    Ok(_) => CallOutcome::Ok,
                    Err(e) => CallOutcome::Error { message: e.to_string() },
                };
                rec.calls.push(BackendCall {
                    role,
                    request_id: meta.request_id,
                    latency_ms,
                    outcome,
                });
                cues.iter()
                    .map(|cue| match &resp {
                        Err(e) => Err(e.to_string()),
                        Ok(resp) => {
                            let restricted = SegmentResponse {
                                masks: resp
                                    .masks
                                    .iter()
                                    .map(|m| {
                                        let mut m = m.clone();
                                        m.restrict_to(cue);
                                        m
                                    })
                                    .collect(),
                            };
                            is_valid_mask(&restricted, cfg.min_mask_pixels, cfg.min_mask_score)
                                .cloned()
                                .ok_or_else(|| "no valid mask inside cue".to_string())
                        }
                    })
                    .collect()
            }
        };

        let mut out = Vec::with_capacity(cues.len());
        for (i, (cue, mask)) in cues.iter().zip(masks).enumerate() {
            let (bbox, score) = match mask.ok().and_then(|m| {
                let s = m.score();
                mask_to_bbox(&m).and_then(|b| clamp_bbox(&b, dims)).map(|b| (b, s))
            }) {
                Some((b, s)) => (b, Some(s)),
                None => {
                    rec.notes.push(format!("cue {i}: initial segmentation invalid, keeping cue box"));
                    (*cue, None)
                }
            };
            rec.candidates.push(CandidateRecord {
                cue_index: i,
                bbox,
                score,
                provenance: None,
            });
            out.push(bbox);
        }
        trace.stages.push(rec);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &self,
        tid: &str,
        image: &ImageBuffer,
        stripped: &str,
        query: &str,
        index: usize,
        candidate: &BBox,
        cue: &BBox,
        trace: &mut PipelineTrace,
    ) -> Refined {
        let cfg = &self.cfg;
        let dims = image.dims();
        let crop_box = expand_bbox(candidate, cfg.crop_margin, dims);
        let crop = image.crop(&crop_box).expect("crop box clamped to image");
        let text = if stripped.trim().is_empty() { query } else { stripped };
        let crop_digest = digest_image(&crop);
        let mut rec = StageRecord::new(
            Stage::Refine,
            trace::digest_parts(&[crop_digest.as_bytes(), text.as_bytes()]),
        );
        rec.cue_index = Some(index);
        if text != stripped {
            rec.notes.push("query was only directional keywords; refining with the unstripped query".into());
        }
        let route = select_refiner(&crop_box, dims, cfg.p_threshold);
        let chosen = route.role();
        rec.routing = Some(Routing {
            chosen,
            crop: crop_box,
            area_ratio_percent: area_ratio_percent(&crop_box, dims),
            p_threshold: cfg.p_threshold,
        });
        let req = SegmentRequest {
            image: crop,
            prompt: Prompt::Text(text.to_string()),
        };
        let origin = (crop_box.x_min(), crop_box.y_min());

        let attempt = |role: Role, rec: &mut StageRecord| {
            let meta = RequestMeta {
                task_id: tid.to_string(),
                request_id: request_id(tid, Stage::Refine, index, role, &rec.input_digest),
            };
            self.try_segment(role, &req, &meta, rec).and_then(|m| {
                let local = mask_to_bbox(&m).expect("valid masks have foreground");
                clamp_bbox(&remap_to_original(&local, origin), dims)
                    .map(|b| (b, m.score()))
                    .ok_or_else(|| "mask box falls outside the image".to_string())
            })
        };

        let outcome = match attempt(chosen, &mut rec) {
            Ok((b, s)) => {
                let p = match route {
                    Route::Large => Provenance::RefinedLarge,
                    Route::Small => Provenance::RefinedSmall,
                };
                (b, Some(s), p)
            }
            Err(trigger) => {
                let alternate = chosen.alternate();
                rec.fallbacks.push(FallbackEvent {
                    from: FallbackStep::Segmenter { role: chosen },
                    to: FallbackStep::Segmenter { role: alternate },
                    trigger,
                });
                match attempt(alternate, &mut rec) {
                    Ok((b, s)) => (b, Some(s), Provenance::RefinedFallbackAlternate),
                    Err(trigger) => {
                        rec.fallbacks.push(FallbackEvent {
                            from: FallbackStep::Segmenter { role: alternate },
                            to: FallbackStep::DiffusionCue,
                            trigger,
                        });
                        (*cue, None, Provenance::DiffusionFallback)
                    }
                }
            }
        };
        let (bbox, score, provenance) = outcome;
        rec.candidates.push(CandidateRecord {
            cue_index: index,
            bbox,
            score,
            provenance: Some(provenance),
        });
        trace.stages.push(rec);
        Refined {
            bbox,
            score,
            provenance,
            cue_index: index,
        }
    }
}

/// Runs one task against the endpoints in `cfg`.
pub fn ground(task: &GroundingTask, cfg: &PipelineConfig) -> Result<GroundingResult, PipelineError> {
    Pipeline::new(cfg.clone())?.ground(task)
}

/// Draws cue boxes (red), the final box (green), and the truth box (blue).
pub fn render_overlay(
    image: &ImageBuffer,
    cues: &[BBox],
    final_box: Option<&BBox>,
    truth: Option<&BBox>,
) -> ImageBuffer {
    let mut out = image.clone();
    let stroke = (image.width().min(image.height()) / 256).max(2);
    for c in cues {
        out.draw_outline(c, [255, 0, 0], stroke);
    }
    if let Some(t) = truth {
        out.draw_outline(t, [0, 0, 255], stroke);
    }
    if let Some(f) = final_box {
        out.draw_outline(f, [0, 255, 0], stroke);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: i64, b: i64, c: i64, d: i64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    fn mask(n_pixels: u32, score: f64) -> BinaryMask {
        let mut m = BinaryMask::empty(32, 32, score).unwrap();
        for i in 0..n_pixels {
            m.set(i % 32, i / 32, true);
        }
        m
    }

    #[test]
    fn routing_examples() {
        let d = Dims::new(512, 512).unwrap();
        assert_eq!(select_refiner(&bx(0, 0, 200, 200), d, 10.0), Route::Large);
        assert_eq!(select_refiner(&bx(0, 0, 100, 100), d, 10.0), Route::Small);
        let d = Dims::new(1000, 100).unwrap();
        assert_eq!(area_ratio_percent(&bx(0, 0, 100, 100), d), 10.0);
        assert_eq!(select_refiner(&bx(0, 0, 100, 100), d, 10.0), Route::Small);
        assert_eq!(select_refiner(&bx(0, 0, 101, 100), d, 10.0), Route::Large);
    }

    #[test]
    fn mask_validity() {
        let empty = SegmentResponse::default();
        assert!(is_valid_mask(&empty, 10, 0.0).is_none());
        let tiny = SegmentResponse { masks: vec![mask(5, 0.9)] };
        assert!(is_valid_mask(&tiny, 10, 0.0).is_none());
        let two = SegmentResponse {
            masks: vec![mask(500, 0.7), mask(20, 0.9)],
        };
        let best = is_valid_mask(&two, 10, 0.0).unwrap();
        assert_eq!((best.score(), best.foreground_count()), (0.9, 20));
        let tie = SegmentResponse {
            masks: vec![mask(20, 0.5), mask(40, 0.5), mask(40, 0.5)],
        };
        assert!(std::ptr::eq(is_valid_mask(&tie, 10, 0.0).unwrap(), &tie.masks[1]));
        let low = SegmentResponse { masks: vec![mask(50, 0.2)] };
        assert!(is_valid_mask(&low, 10, 0.3).is_none());
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.p_threshold, 10.0);
        assert_eq!(cfg.min_mask_pixels, 10);
        assert_eq!(cfg.crop_margin, 0.0);
        cfg.validate().unwrap();
        for bad in [0.0, 100.0, -1.0] {
            let c = PipelineConfig { p_threshold: bad, ..Default::default() };
            assert!(c.validate().is_err());
        }
        let c = PipelineConfig {
            edit_instruction: "no placeholder".into(),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(matches!(Pipeline::new(PipelineConfig::default()), Err(PipelineError::MissingEndpoint(_))));
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = PipelineConfig::default().with_all_endpoints("http://127.0.0.1:7000");
        let text = cfg.to_toml_string();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = "p_threshold = 12.5\n[endpoints.editor]\nbase_url = \"http://h:1\"\n";
        let c = PipelineConfig::from_toml_str(partial).unwrap();
        assert_eq!(c.p_threshold, 12.5);
        assert_eq!(c.endpoints[&Role::Editor].retries, 2);
        assert!(PipelineConfig::from_toml_str("p_treshold = 3").is_err());
    }

    #[test]
    fn overlay_colors() {
        let img = ImageBuffer::filled(64, 64, [0, 0, 0]).unwrap();
        let out = render_overlay(&img, &[bx(0, 0, 10, 10)], Some(&bx(20, 20, 40, 40)), Some(&bx(45, 45, 60, 60)));
        assert_eq!(out.get(0, 0), [255, 0, 0]);
        assert_eq!(out.get(20, 20), [0, 255, 0]);
        assert_eq!(out.get(45, 45), [0, 0, 255]);
    }
}
