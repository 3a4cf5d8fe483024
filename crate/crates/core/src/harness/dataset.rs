//! Dataset generation from an image corpus.
//!
//! Every item draws its randomness from its own seed,
//! `derive_seed(seed, stream_id("{kind}-{grid}"), j)`, so an item depends
//! only on the master seed, its kind, its grid and its index `j`. Growing
//! `count` appends items without perturbing existing ones.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::manifest::{Manifest, ManifestRecord, PairMetadata, RecordMetadata};
use crate::error::{Error, Result};
use crate::imaging::{self, MaskConfig, RasterImage};
use crate::puzzle::{self, GridSpec};
use crate::rng::{derive_seed, seeded, stream_id};
use crate::taskgen::{
    self, BoxAnswerSemantics, Mode, PuzzleInstance, QuestionDetails, TaskKind, DEFAULT_PATCH_SCALE,
};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const IMAGE_DIR: &str = "images";

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

/// Share of a dataset assigned to one grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub grid: GridSpec,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub kinds: Vec<TaskKind>,
    pub grids: Vec<GridSpec>,
    pub mode: Mode,
    /// Total number of questions.
    pub count: usize,
    pub seed: u64,
    /// Transpose each non-square puzzle with probability 1/2.
    pub transpose_50: bool,
    /// Per-grid shares; overrides `grids` when set.
    pub mix: Option<Vec<MixEntry>>,
    pub mask: MaskConfig,
    pub patch_scale: f64,
    pub box_semantics: BoxAnswerSemantics,
    pub id_prefix: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kinds: vec![TaskKind::Pair],
            grids: vec![GridSpec::new(2, 1).expect("2x1 is a valid grid")],
            mode: Mode::Thinking,
            count: 1000,
            seed: 0,
            transpose_50: false,
            mix: None,
            mask: MaskConfig::disabled(),
            patch_scale: DEFAULT_PATCH_SCALE,
            box_semantics: BoxAnswerSemantics::default(),
            id_prefix: String::new(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::invalid_argument("at least one task kind is required"));
        }
        if self.mix.is_none() && self.grids.is_empty() {
            return Err(Error::invalid_argument("at least one grid is required"));
        }
        if let Some(mix) = &self.mix {
            if mix.is_empty() {
                return Err(Error::invalid_argument("mix is empty"));
            }
            if mix.iter().any(|e| !(e.ratio.is_finite() && e.ratio > 0.0)) {
                return Err(Error::invalid_argument("mix ratios must be positive"));
            }
            for (i, e) in mix.iter().enumerate() {
                if mix[..i].iter().any(|p| p.grid == e.grid) {
                    return Err(Error::invalid_argument(format!("grid {} appears twice in mix", e.grid)));
                }
            }
        }
        if !(self.patch_scale > 0.0 && self.patch_scale <= 1.0) {
            return Err(Error::invalid_argument(format!(
                "patch scale {} outside (0, 1]",
                self.patch_scale
            )));
        }
        if self.id_prefix.contains(['/', '\\']) {
            return Err(Error::invalid_argument("id prefix must not contain path separators"));
        }
        Ok(())
    }

    /// Number of items per `(kind, grid)` in generation order.
    pub fn allocation(&self) -> Result<Vec<(TaskKind, GridSpec, usize)>> {
        self.validate()?;
        let shares: Vec<(GridSpec, f64)> = match &self.mix {
            Some(mix) => mix.iter().map(|e| (e.grid, e.ratio)).collect(),
            None => self.grids.iter().map(|&g| (g, 1.0)).collect(),
        };
        let weights: Vec<f64> = shares.iter().map(|s| s.1).collect();
        let per_grid = largest_remainder(self.count, &weights);
        let mut out = Vec::new();
        for ((grid, _), n) in shares.iter().zip(per_grid) {
            let per_kind = largest_remainder(n, &vec![1.0; self.kinds.len()]);
            for (&kind, k) in self.kinds.iter().zip(per_kind) {
                out.push((kind, *grid, k));
            }
        }
        Ok(out)
    }
}

/// Splits `total` proportionally to `weights`, handing leftover units to the
/// largest fractional parts (earlier entries win ties).
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

/// Readable images under a directory, in sorted path order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    /// Paths relative to `root`, with `/` separators.
    pub images: Vec<String>,
    pub skipped: Vec<SkippedFile>,
}

impl Corpus {
    /// Finds png/jpeg files and keeps those that decode.
    pub fn scan(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
            ));
        }
        let mut candidates = Vec::new();
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(root).to_owned();
                Error::io(path, e.into())
            })?;
            let is_image = entry
                .path()
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if entry.file_type().is_file() && is_image {
                candidates.push(entry.into_path());
            }
        }
        let checked: Vec<(String, Option<String>)> = candidates
            .par_iter()
            .map(|path| {
                let rel = relative_name(root, path);
                match RasterImage::load(path) {
                    Ok(_) => (rel, None),
                    Err(e) => (rel, Some(e.to_string())),
                }
            })
            .collect();
        let mut images = Vec::new();
        let mut skipped = Vec::new();
        for (rel, err) in checked {
            match err {
                None => images.push(rel),
                Some(reason) => {
                    log::warn!("skipping unreadable image {rel}: {reason}");
                    skipped.push(SkippedFile { path: rel, reason });
                }
            }
        }
        if images.is_empty() {
            return Err(Error::invalid_input(format!(
                "no readable images under {}",
                root.display()
            )));
        }
        Ok(Self {
            root: root.to_owned(),
            images,
            skipped,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn load(&self, index: usize) -> Result<RasterImage> {
        RasterImage::load(&self.root.join(&self.images[index]))
    }
}

fn relative_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone)]
pub struct BuildReport {
    pub manifest: Manifest,
    pub skipped: Vec<SkippedFile>,
    pub manifest_path: PathBuf,
}

/// Position of one item within a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemKey {
    pub kind: TaskKind,
    pub grid: GridSpec,
    pub index: usize,
}

impl ItemKey {
    pub fn id(&self, prefix: &str) -> String {
        format!("{prefix}{}-{}-{:06}", self.kind, self.grid, self.index)
    }

    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(master, stream_id(&format!("{}-{}", self.kind, self.grid)), self.index as u64)
    }
}

pub fn item_keys(cfg: &DatasetConfig) -> Result<Vec<ItemKey>> {
    let mut keys = Vec::with_capacity(cfg.count);
    for (kind, grid, n) in cfg.allocation()? {
        keys.extend((0..n).map(|index| ItemKey { kind, grid, index }));
    }
    Ok(keys)
}

/// Generates one item: its manifest record and the image to store at
/// `record.image_path`.
pub fn generate_item(corpus: &Corpus, cfg: &DatasetConfig, key: &ItemKey) -> Result<(ManifestRecord, RasterImage)> {
    let id = key.id(&cfg.id_prefix);
    let seed = key.seed(cfg.seed);
    let mut rng = seeded(seed);
    let source = rng.random_range(0..corpus.len());
    let img = corpus.load(source)?;

    let base_grid = key.grid;
    let perm = puzzle::shuffle_with(base_grid.piece_count() as usize, &mut rng);
    let (grid, perm, transposed) = if cfg.transpose_50 {
        puzzle::transpose_augment(base_grid, &perm, &mut rng)
    } else {
        (base_grid, perm, false)
    };
    let trimmed = imaging::trim_to_grid(&img, grid)?;
    let image_path = format!("{IMAGE_DIR}/{id}.png");
    let mut metadata = RecordMetadata {
        seed,
        source_ref: corpus.images[source].clone(),
        base_grid,
        transposed,
        mask: cfg.mask,
        image_dims: [0, 0],
        permutation: None,
        pair: None,
        box_plan: None,
    };

    let (question, image) = match key.kind {
        TaskKind::Full | TaskKind::Pair => {
            let patches = imaging::slice_patches(&trimmed, grid)?;
            let composed = imaging::compose_shuffled(&patches, &perm, grid, cfg.mask)?;
            let instance = PuzzleInstance {
                source_ref: metadata.source_ref.clone(),
                perm: perm.clone(),
                mask: cfg.mask,
                transposed,
                image_path: Some(image_path.clone()),
                trimmed_dims: Some([trimmed.width(), trimmed.height()]),
                patch_dims: Some([patches[0].width(), patches[0].height()]),
                ..PuzzleInstance::synthetic(id.clone(), grid, seed)
            };
            let question = if key.kind == TaskKind::Full {
                taskgen::make_full(&instance, cfg.mode)
            } else {
                let q = taskgen::make_pair(&instance, cfg.mode, &mut rng);
                if let QuestionDetails::Pair { first, second, choices, .. } = &q.details {
                    metadata.pair = Some(PairMetadata {
                        first: *first,
                        second: *second,
                        choice_order: choices.directions(),
                    });
                }
                q
            };
            metadata.permutation = Some(perm);
            (question, composed)
        }
        TaskKind::Box => {
            let plan = taskgen::plan_box(
                [trimmed.width(), trimmed.height()],
                grid,
                None,
                cfg.patch_scale,
                cfg.box_semantics,
                &mut rng,
            )?;
            let rendered = imaging::render_box_swap(&trimmed, &plan)?;
            let question = taskgen::box_question(id.clone(), &plan, cfg.mode);
            metadata.box_plan = Some(plan);
            (question, rendered)
        }
    };
    metadata.image_dims = [image.width(), image.height()];
    Ok((ManifestRecord::from_question(&question, image_path, metadata), image))
}

/// Writes `images/*.png` and `manifest.jsonl` under `out_dir`. Items are
/// generated in parallel; the manifest lists them in allocation order.
pub fn build_dataset(corpus: &Corpus, cfg: &DatasetConfig, out_dir: &Path) -> Result<BuildReport> {
    let keys = item_keys(cfg)?;
    let image_dir = out_dir.join(IMAGE_DIR);
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let records = keys
        .par_iter()
        .map(|key| {
            let (record, image) = generate_item(corpus, cfg, key)?;
            image.save_png(&out_dir.join(&record.image_path))?;
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(records)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    Ok(BuildReport {
        manifest,
        skipped: corpus.skipped.clone(),
        manifest_path,
    })
}

/// Builds the records only, without touching the filesystem beyond reading
/// the corpus.
pub fn generate_records(corpus: &Corpus, cfg: &DatasetConfig) -> Result<Manifest> {
    let keys = item_keys(cfg)?;
    let records = keys
        .par_iter()
        .map(|key| generate_item(corpus, cfg, key).map(|(record, _)| record))
        .collect::<Result<Vec<_>>>()?;
    Manifest::new(records)
}
