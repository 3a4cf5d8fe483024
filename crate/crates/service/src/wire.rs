//! Request and response bodies.

use std::path::PathBuf;

use jigsaw_core::grpo::{GrpoConfig, ObjectiveOutput, SampleLogprobs};
use jigsaw_core::harness::dataset::{DatasetConfig, SkippedFile};
use jigsaw_core::harness::ManifestRecord;
use jigsaw_core::parsing::{Payload, TagCompliance};
use jigsaw_core::scoring::{EvalMetric, RewardBreakdown, ScoredResponse};
use jigsaw_core::{GridSpec, GroundTruth, Mode, TaskKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
    /// SHA-256 of the manifest file loaded at startup, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_digest: Option<String>,
    pub records: usize,
    pub datasets: Vec<String>,
}

/// Ground truth supplied by the caller instead of a manifest id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlineQuestion {
    pub mode: Mode,
    pub ground_truth: GroundTruth,
    /// Checked against the ground truth when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

/// Exactly one of `question_id` and `inline` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineQuestion>,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub items: Vec<ScoreItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    pub payload: Payload,
    pub tags: TagCompliance,
    pub answer_found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub reward: RewardBreakdown,
    pub eval_correct: bool,
    pub eval: EvalMetric,
    pub parse: ParseDiagnostics,
    pub completion_chars: usize,
    pub completion_tokens: usize,
}

impl From<ScoredResponse> for ScoreResult {
    fn from(s: ScoredResponse) -> Self {
        Self {
            reward: s.reward,
            eval_correct: s.eval.correct,
            eval: s.eval,
            parse: ParseDiagnostics {
                answer_found: s.parsed.answer_text.is_some(),
                payload: s.parsed.payload,
                tags: s.parsed.tags,
            },
            completion_chars: s.completion_chars,
            completion_tokens: s.completion_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    /// In request order.
    pub results: Vec<ScoreResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInput {
    pub rewards: Vec<f64>,
    /// Per-sample log-probs; when present the objective and its gradient are
    /// returned as well.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<SampleLogprobs>,
}

/// The effective group size is `group_size`, else `config.group_size`,
/// else the size of the first group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningSignalRequest {
    pub groups: Vec<GroupInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<GrpoConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSignal {
    pub advantages: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningSignalResponse {
    pub config: GrpoConfig,
    pub results: Vec<GroupSignal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRequest {
    /// Directory name under the service's data directory.
    pub dataset_id: String,
    /// Image corpus directory on the server.
    pub corpus: PathBuf,
    #[serde(default)]
    pub config: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResponse {
    pub dataset_id: String,
    pub manifest_path: PathBuf,
    pub manifest_digest: String,
    pub ids: Vec<String>,
    pub skipped: Vec<SkippedFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
    pub prompt: String,
    pub record: ManifestRecord,
}
