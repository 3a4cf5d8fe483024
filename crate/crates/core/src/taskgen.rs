//! Question generation: full, pair and box puzzles with their ground truth.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{MaskConfig, PixelRect};
use crate::prompting;
use crate::puzzle::{self, relative_direction, shuffle_with, Direction, GridSpec, Permutation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Full,
    Pair,
    Box,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Full, TaskKind::Pair, TaskKind::Box];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Full => "full",
            TaskKind::Pair => "pair",
            TaskKind::Box => "box",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(TaskKind::Full),
            "pair" => Ok(TaskKind::Pair),
            "box" => Ok(TaskKind::Box),
            other => Err(Error::invalid_argument(format!("unknown question kind `{other}`"))),
        }
    }
}

/// Response protocol requested by the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `<think>...</think><answer>...</answer>`
    Thinking,
    /// Bare final answer.
    NonThinking,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Thinking => "thinking",
            Mode::NonThinking => "non-thinking",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "think" | "thinking" => Ok(Mode::Thinking),
            "nothink" | "no-think" | "non-thinking" | "nonthinking" => Ok(Mode::NonThinking),
            other => Err(Error::invalid_argument(format!("unknown mode `{other}`"))),
        }
    }
}

/// A shuffled puzzle image and everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleInstance {
    pub id: String,
    pub source_ref: String,
    pub grid: GridSpec,
    pub perm: Permutation,
    pub seed: u64,
    pub mask: MaskConfig,
    pub transposed: bool,
    pub image_path: Option<String>,
    pub trimmed_dims: Option<[u32; 2]>,
    pub patch_dims: Option<[u32; 2]>,
}

impl PuzzleInstance {
    /// Instance without backing pixels, for answer-only simulations.
    pub fn synthetic(id: impl Into<String>, grid: GridSpec, seed: u64) -> Self {
        Self {
            id: id.into(),
            source_ref: "synthetic".to_owned(),
            grid,
            perm: puzzle::random_permutation(grid, seed),
            seed,
            mask: MaskConfig::disabled(),
            transposed: false,
            image_path: None,
            trimmed_dims: None,
            patch_dims: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairChoice {
    pub letter: char,
    pub direction: Direction,
    pub sentence: String,
}

/// Lettered answer options of a pair question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairChoiceSet {
    pub options: Vec<PairChoice>,
    pub correct_letter: char,
}

impl PairChoiceSet {
    /// Letters the directions `A, B, ...` in the given order. `order` must be
    /// exactly the legal directions of the grid in some order.
    pub fn new(grid: GridSpec, first: u32, second: u32, order: &[Direction], truth: Direction) -> Result<Self> {
        let mut legal = grid.legal_directions();
        let mut given = order.to_vec();
        legal.sort();
        given.sort();
        if legal != given {
            return Err(Error::invalid_argument(format!(
                "choice order {order:?} is not a permutation of the directions legal on {grid}"
            )));
        }
        let options: Vec<PairChoice> = order
            .iter()
            .zip('A'..)
            .map(|(&direction, letter)| PairChoice {
                letter,
                direction,
                sentence: format!("{first} {} {second}", direction.phrase()),
            })
            .collect();
        let correct_letter = options
            .iter()
            .find(|o| o.direction == truth)
            .map(|o| o.letter)
            .ok_or_else(|| Error::invalid_argument(format!("{truth:?} is not legal on {grid}")))?;
        Ok(Self {
            options,
            correct_letter,
        })
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.options.iter().map(|o| o.direction).collect()
    }

    /// `"(A) ..."` lines in stored order.
    pub fn render(&self) -> String {
        self.options
            .iter()
            .map(|o| format!("({}) {}", o.letter, o.sentence))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Which patch a box question asks about.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxAnswerSemantics {
    /// Original location of the patch now shown in the target region (the
    /// wording of the box prompt).
    #[default]
    OriginOfOccupant,
    /// Current location of the patch that originally belonged to the target
    /// region.
    LocationOfDisplaced,
}

/// Layout of a box puzzle: equal-size patches cut from each region and
/// shuffled across regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxInstance {
    pub grid: GridSpec,
    pub image_dims: [u32; 2],
    pub region_rects: Vec<PixelRect>,
    pub patch_rects: Vec<PixelRect>,
    /// Slot `s` shows the patch cut from region `swap_perm.origin_of(s)`.
    pub swap_perm: Permutation,
    pub target_region: u32,
    pub gt_bbox: PixelRect,
    pub patch_scale: f64,
    pub semantics: BoxAnswerSemantics,
}

impl BoxInstance {
    pub fn ground_truth_for(&self, semantics: BoxAnswerSemantics) -> PixelRect {
        let region = match semantics {
            BoxAnswerSemantics::OriginOfOccupant => self.swap_perm.origin_of(self.target_region),
            BoxAnswerSemantics::LocationOfDisplaced => self.swap_perm.slot_of(self.target_region),
        };
        self.patch_rects[region as usize - 1]
    }
}

/// Expected answer of a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GroundTruth {
    Grid { grid: GridSpec, values: Vec<u32> },
    Letter { letter: char, num_choices: u32 },
    Bbox { rect: PixelRect },
}

impl GroundTruth {
    pub fn kind(&self) -> TaskKind {
        match self {
            GroundTruth::Grid { .. } => TaskKind::Full,
            GroundTruth::Letter { .. } => TaskKind::Pair,
            GroundTruth::Bbox { .. } => TaskKind::Box,
        }
    }

    pub fn schema(&self) -> AnswerSchema {
        match *self {
            GroundTruth::Grid { grid, .. } => AnswerSchema::Grid { grid },
            GroundTruth::Letter { num_choices, .. } => AnswerSchema::Letter { num_choices },
            GroundTruth::Bbox { .. } => AnswerSchema::Bbox,
        }
    }

    /// The answer as it should appear inside a response.
    pub fn render(&self) -> String {
        match self {
            GroundTruth::Grid { grid, values } => puzzle::render_rows(values, grid.cols()),
            GroundTruth::Letter { letter, .. } => letter.to_string(),
            GroundTruth::Bbox { rect } => rect.render(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroundTruth::Grid { grid, values } => {
                if values.len() != grid.piece_count() as usize {
                    return Err(Error::invalid_argument(format!(
                        "grid ground truth for {grid} needs {} values, got {}",
                        grid.piece_count(),
                        values.len()
                    )));
                }
            }
            GroundTruth::Letter { letter, num_choices } => {
                if !matches!(num_choices, 2 | 8) {
                    return Err(Error::invalid_argument(format!(
                        "pair questions have 2 or 8 choices, got {num_choices}"
                    )));
                }
                let last = (b'A' + *num_choices as u8 - 1) as char;
                if !('A'..=last).contains(letter) {
                    return Err(Error::invalid_argument(format!(
                        "letter {letter:?} outside A..={last}"
                    )));
                }
            }
            GroundTruth::Bbox { rect } => {
                PixelRect::new(rect.x1, rect.y1, rect.x2, rect.y2)?;
            }
        }
        Ok(())
    }
}

/// Shape a parsed answer must have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AnswerSchema {
    Grid { grid: GridSpec },
    Letter { num_choices: u32 },
    Bbox,
}

/// Kind-specific inputs of the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuestionDetails {
    Full {
        grid: GridSpec,
    },
    Pair {
        grid: GridSpec,
        first: u32,
        second: u32,
        choices: PairChoiceSet,
    },
    Box {
        grid: GridSpec,
        target_region: u32,
        image_dims: [u32; 2],
    },
}

impl QuestionDetails {
    pub fn kind(&self) -> TaskKind {
        match self {
            QuestionDetails::Full { .. } => TaskKind::Full,
            QuestionDetails::Pair { .. } => TaskKind::Pair,
            QuestionDetails::Box { .. } => TaskKind::Box,
        }
    }

    pub fn grid(&self) -> GridSpec {
        match *self {
            QuestionDetails::Full { grid }
            | QuestionDetails::Pair { grid, .. }
            | QuestionDetails::Box { grid, .. } => grid,
        }
    }
}

/// The model-facing unit: rendered prompt plus ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub mode: Mode,
    pub details: QuestionDetails,
    pub ground_truth: GroundTruth,
    pub prompt: String,
}

impl Question {
    pub fn new(id: impl Into<String>, mode: Mode, details: QuestionDetails, ground_truth: GroundTruth) -> Self {
        let prompt = prompting::render(&details, mode);
        Self {
            id: id.into(),
            mode,
            details,
            ground_truth,
            prompt,
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.details.kind()
    }

    pub fn grid(&self) -> GridSpec {
        self.details.grid()
    }
}

pub fn make_full(instance: &PuzzleInstance, mode: Mode) -> Question {
    let grid = instance.grid;
    Question::new(
        instance.id.clone(),
        mode,
        QuestionDetails::Full { grid },
        GroundTruth::Grid {
            grid,
            values: instance.perm.as_slice().to_vec(),
        },
    )
}

/// Pair question over two distinct current positions drawn uniformly, with
/// the answer options in uniformly random order.
pub fn make_pair<R: Rng + ?Sized>(instance: &PuzzleInstance, mode: Mode, rng: &mut R) -> Question {
    let grid = instance.grid;
    let n = grid.piece_count();
    let first = rng.random_range(1..=n);
    let mut second = rng.random_range(1..n);
    if second >= first {
        second += 1;
    }
    let legal = grid.legal_directions();
    let order: Vec<Direction> = shuffle_with(legal.len(), rng)
        .as_slice()
        .iter()
        .map(|&k| legal[k as usize - 1])
        .collect();
    make_pair_with(instance, mode, first, second, &order).expect("positions and order are valid by construction")
}

/// Pair question with explicit positions and option order.
pub fn make_pair_with(
    instance: &PuzzleInstance,
    mode: Mode,
    first: u32,
    second: u32,
    order: &[Direction],
) -> Result<Question> {
    let grid = instance.grid;
    let a = grid.position(first)?;
    let b = grid.position(second)?;
    let truth = relative_direction(
        grid.position(instance.perm.origin_of(a.get()))?,
        grid.position(instance.perm.origin_of(b.get()))?,
        grid,
    )?;
    let choices = PairChoiceSet::new(grid, first, second, order, truth)?;
    let ground_truth = GroundTruth::Letter {
        letter: choices.correct_letter,
        num_choices: choices.len() as u32,
    };
    Ok(Question::new(
        instance.id.clone(),
        mode,
        QuestionDetails::Pair {
            grid,
            first,
            second,
            choices,
        },
        ground_truth,
    ))
}

pub const DEFAULT_PATCH_SCALE: f64 = 0.5;

/// Plans a box puzzle on an image of `image_dims` (already trimmed to the
/// grid). A random target region is chosen when `target` is `None`.
pub fn plan_box<R: Rng + ?Sized>(
    image_dims: [u32; 2],
    grid: GridSpec,
    target: Option<u32>,
    patch_scale: f64,
    semantics: BoxAnswerSemantics,
    rng: &mut R,
) -> Result<BoxInstance> {
    if !(patch_scale > 0.0 && patch_scale <= 1.0) {
        return Err(Error::invalid_input(format!(
            "patch scale {patch_scale} outside (0, 1]"
        )));
    }
    let [w, h] = image_dims;
    let region_w = w / grid.cols();
    let region_h = h / grid.rows();
    let patch_w = (f64::from(region_w) * patch_scale).floor() as u32;
    let patch_h = (f64::from(region_h) * patch_scale).floor() as u32;
    if patch_w == 0 || patch_h == 0 {
        return Err(Error::invalid_input(format!(
            "{w}x{h} image with grid {grid} and patch scale {patch_scale} gives empty patches"
        )));
    }
    let n = grid.piece_count();
    let target_region = match target {
        Some(t) => grid.position(t)?.get(),
        None => rng.random_range(1..=n),
    };

    let mut region_rects = Vec::with_capacity(n as usize);
    let mut patch_rects = Vec::with_capacity(n as usize);
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let region = PixelRect::from_origin(c * region_w, r * region_h, region_w, region_h)?;
            let x = region.x1 + rng.random_range(0..=region_w - patch_w);
            let y = region.y1 + rng.random_range(0..=region_h - patch_h);
            region_rects.push(region);
            patch_rects.push(PixelRect::from_origin(x, y, patch_w, patch_h)?);
        }
    }

    // Uniform over permutations that move the target region's patch.
    let swap_perm = loop {
        let p = shuffle_with(n as usize, rng);
        if p.origin_of(target_region) != target_region {
            break p;
        }
    };

    let mut plan = BoxInstance {
        grid,
        image_dims,
        region_rects,
        patch_rects,
        swap_perm,
        target_region,
        gt_bbox: PixelRect { x1: 0, y1: 0, x2: 1, y2: 1 },
        patch_scale,
        semantics,
    };
    plan.gt_bbox = plan.ground_truth_for(semantics);
    Ok(plan)
}

pub fn box_question(id: impl Into<String>, plan: &BoxInstance, mode: Mode) -> Question {
    Question::new(
        id,
        mode,
        QuestionDetails::Box {
            grid: plan.grid,
            target_region: plan.target_region,
            image_dims: plan.image_dims,
        },
        GroundTruth::Bbox { rect: plan.gt_bbox },
    )
}

/// Plans a box puzzle for `img` and builds its question.
pub fn make_box<R: Rng + ?Sized>(
    id: impl Into<String>,
    img: &crate::imaging::RasterImage,
    grid: GridSpec,
    target: Option<u32>,
    patch_scale: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(BoxInstance, Question)> {
    let plan = plan_box(
        [img.width(), img.height()],
        grid,
        target,
        patch_scale,
        BoxAnswerSemantics::default(),
        rng,
    )?;
    let question = box_question(id, &plan, mode);
    Ok((plan, question))
}
