use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::Role;
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preprocess,
    Rewrite,
    Edit,
    Cues,
    InitialSegment,
    Refine,
    Select,
    Finalize,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Rewrite => "rewrite",
            Stage::Edit => "edit",
            Stage::Cues => "cues",
            Stage::InitialSegment => "initial_segment",
            Stage::Refine => "refine",
            Stage::Select => "select",
            Stage::Finalize => "finalize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CallOutcome {
    Ok,
    /// The call succeeded but produced nothing usable.
    Invalid { reason: String },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendCall {
    pub role: Role,
    pub request_id: String,
    /// Wall-clock latency; excluded from the trace digest.
    pub latency_ms: f64,
    pub outcome: CallOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Routing {
    pub chosen: Role,
    pub crop: BBox,
    pub area_ratio_percent: f64,
    pub p_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FallbackStep {
    Segmenter { role: Role },
    DiffusionCue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub from: FallbackStep,
    pub to: FallbackStep,
    pub trigger: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RefinedLarge,
    RefinedSmall,
    RefinedFallbackAlternate,
    DiffusionFallback,
    None,
}

impl Provenance {
    pub const ALL: [Provenance; 5] = [
        Provenance::RefinedLarge,
        Provenance::RefinedSmall,
        Provenance::RefinedFallbackAlternate,
        Provenance::DiffusionFallback,
        Provenance::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::RefinedLarge => "refined_large",
            Provenance::RefinedSmall => "refined_small",
            Provenance::RefinedFallbackAlternate => "refined_fallback_alternate",
            Provenance::DiffusionFallback => "diffusion_fallback",
            Provenance::None => "none",
        }
    }

    pub fn is_refined(&self) -> bool {
        matches!(
            self,
            Provenance::RefinedLarge | Provenance::RefinedSmall | Provenance::RefinedFallbackAlternate
        )
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Provenance::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown provenance `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub cue_index: usize,
    pub bbox: BBox,
    pub score: Option<f64>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub input_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<BackendCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<Routing>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fallbacks: Vec<FallbackEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl StageRecord {
    pub fn new(stage: Stage, input_digest: String) -> Self {
        Self {
            stage,
            input_digest,
            cue_index: None,
            calls: Vec::new(),
            routing: None,
            fallbacks: Vec::new(),
            candidates: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Ordered record of everything one grounding run did.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub stages: Vec<StageRecord>,
}

impl PipelineTrace {
    pub fn stage_names(&self) -> Vec<Stage> {
        self.stages.iter().map(|s| s.stage).collect()
    }

    pub fn stages_of(&self, stage: Stage) -> impl Iterator<Item = &StageRecord> {
        self.stages.iter().filter(move |s| s.stage == stage)
    }

    pub fn fallbacks(&self) -> impl Iterator<Item = &FallbackEvent> {
        self.stages.iter().flat_map(|s| s.fallbacks.iter())
    }

    /// Hash of the trace with timing removed; stable across reruns.
    pub fn digest(&self) -> String {
        let mut stable = self.clone();
        for call in stable.stages.iter_mut().flat_map(|s| s.calls.iter_mut()) {
            call.latency_ms = 0.0;
        }
        let bytes = serde_json::to_vec(&stable).expect("trace serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub(crate) fn digest_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..16])
}
