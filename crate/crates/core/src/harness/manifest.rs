//! Line-delimited JSON records: dataset manifests and model responses.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::MaskConfig;
use crate::puzzle::{Direction, GridSpec, Permutation};
use crate::taskgen::{
    box_question, make_full, make_pair_with, BoxInstance, GroundTruth, Mode, PuzzleInstance, Question, TaskKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMetadata {
    pub first: u32,
    pub second: u32,
    pub choice_order: Vec<Direction>,
}

/// Provenance of a manifest record; enough to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub seed: u64,
    pub source_ref: String,
    /// Grid before the optional transpose.
    pub base_grid: GridSpec,
    pub transposed: bool,
    pub mask: MaskConfig,
    /// Dimensions of the image file the question refers to.
    pub image_dims: [u32; 2],
    /// Shuffle of full and pair puzzles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Permutation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "box")]
    pub box_plan: Option<BoxInstance>,
}

/// One question of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub kind: TaskKind,
    pub mode: Mode,
    pub grid: GridSpec,
    /// Relative to the manifest's directory.
    pub image_path: String,
    pub prompt: String,
    pub ground_truth: GroundTruth,
    pub metadata: RecordMetadata,
}

impl ManifestRecord {
    pub fn from_question(q: &Question, image_path: String, metadata: RecordMetadata) -> Self {
        Self {
            id: q.id.clone(),
            kind: q.kind(),
            mode: q.mode,
            grid: q.grid(),
            image_path,
            prompt: q.prompt.clone(),
            ground_truth: q.ground_truth.clone(),
            metadata,
        }
    }

    /// Rebuilds the question, prompt and ground truth from the metadata
    /// alone.
    pub fn question(&self) -> Result<Question> {
        let missing = |what: &str| Error::invalid_input(format!("{}: {what} metadata missing", self.id));
        let perm = || self.metadata.permutation.clone().ok_or_else(|| missing("permutation"));
        let instance = |perm: Permutation| -> Result<PuzzleInstance> {
            if perm.len() != self.grid.piece_count() as usize {
                return Err(Error::invalid_input(format!("{}: permutation does not fit grid {}", self.id, self.grid)));
            }
            Ok(PuzzleInstance {
                perm,
                mask: self.metadata.mask,
                transposed: self.metadata.transposed,
                source_ref: self.metadata.source_ref.clone(),
                ..PuzzleInstance::synthetic(self.id.clone(), self.grid, self.metadata.seed)
            })
        };
        match self.kind {
            TaskKind::Full => Ok(make_full(&instance(perm()?)?, self.mode)),
            TaskKind::Pair => {
                let pair = self.metadata.pair.as_ref().ok_or_else(|| missing("pair"))?;
                make_pair_with(&instance(perm()?)?, self.mode, pair.first, pair.second, &pair.choice_order)
            }
            TaskKind::Box => {
                let mut plan = self.metadata.box_plan.clone().ok_or_else(|| missing("box"))?;
                let n = plan.grid.piece_count() as usize;
                if plan.grid != self.grid
                    || plan.patch_rects.len() != n
                    || plan.swap_perm.len() != n
                    || plan.grid.position(plan.target_region).is_err()
                {
                    return Err(Error::invalid_input(format!("{}: inconsistent box metadata", self.id)));
                }
                plan.gt_bbox = plan.ground_truth_for(plan.semantics);
                Ok(box_question(self.id.clone(), &plan, self.mode))
            }
        }
    }

    /// Checks that the stored prompt and ground truth match a rebuild from
    /// the metadata.
    pub fn verify(&self) -> Result<()> {
        let q = self.question()?;
        if q.prompt != self.prompt {
            return Err(Error::invalid_input(format!("{}: prompt differs from regenerated prompt", self.id)));
        }
        if q.ground_truth != self.ground_truth {
            return Err(Error::invalid_input(format!("{}: ground truth differs from metadata", self.id)));
        }
        Ok(())
    }
}

/// An ordered collection of manifest records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(prev) = seen.insert(r.id.as_str(), i) {
                return Err(Error::invalid_input(format!(
                    "duplicate id `{}` at records {} and {}",
                    r.id,
                    prev + 1,
                    i + 1
                )));
            }
        }
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_jsonl(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.records)
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, &ManifestRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    pub fn questions(&self) -> Result<Vec<Question>> {
        self.records.iter().map(ManifestRecord::question).collect()
    }
}

/// One model completion, keyed by question id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: String,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
}

impl ResponseRecord {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            raw_text: raw_text.into(),
            step: None,
        }
    }
}

pub fn load_responses(path: &Path) -> Result<Vec<ResponseRecord>> {
    read_jsonl(path)
}

pub fn save_responses(path: &Path, responses: &[ResponseRecord]) -> Result<()> {
    write_jsonl(path, responses)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| Error::Record {
            path: path.to_owned(),
            line: i + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_jsonl(items).as_bytes())
        .map_err(|e| Error::io(path, e))
}
