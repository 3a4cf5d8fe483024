//! Puzzle geometry: grids, row-major position indices, shuffles and the
//! relative-direction algebra used by pair questions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// An `rows x cols` partition of an image. Holds at least two cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct GridSpec {
    rows: u32,
    cols: u32,
}

impl GridSpec {
    pub fn new(rows: u32, cols: u32) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid_argument(format!(
                "grid {rows}x{cols} must have at least one row and one column"
            )));
        }
        if u64::from(rows) * u64::from(cols) < 2 {
            return Err(Error::invalid_argument(format!(
                "grid {rows}x{cols} must have at least two pieces"
            )));
        }
        if u64::from(rows) * u64::from(cols) > u64::from(u32::MAX) {
            return Err(Error::invalid_argument(format!("grid {rows}x{cols} is too large")));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(self) -> u32 {
        self.rows
    }

    pub fn cols(self) -> u32 {
        self.cols
    }

    pub fn piece_count(self) -> u32 {
        self.rows * self.cols
    }

    pub fn is_single_row(self) -> bool {
        self.rows == 1
    }

    pub fn is_single_column(self) -> bool {
        self.cols == 1
    }

    pub fn is_square(self) -> bool {
        self.rows == self.cols
    }

    pub fn transposed(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
        }
    }

    pub fn position(self, index: u32) -> Result<PositionIndex> {
        PositionIndex::new(index, self)
    }

    /// 1-based row of a position.
    pub fn row_of(self, pos: PositionIndex) -> u32 {
        (pos.0 - 1) / self.cols + 1
    }

    /// 1-based column of a position.
    pub fn col_of(self, pos: PositionIndex) -> u32 {
        (pos.0 - 1) % self.cols + 1
    }

    /// Position at a 1-based `(row, col)`.
    pub fn at(self, row: u32, col: u32) -> PositionIndex {
        debug_assert!(row >= 1 && row <= self.rows && col >= 1 && col <= self.cols);
        PositionIndex((row - 1) * self.cols + col)
    }

    pub fn positions(self) -> impl Iterator<Item = PositionIndex> {
        (1..=self.piece_count()).map(PositionIndex)
    }

    /// The index diagram shown in prompts, e.g. `"1 2\n3 4"` for 2x2.
    pub fn diagram(self) -> String {
        let values: Vec<u32> = (1..=self.piece_count()).collect();
        render_rows(&values, self.cols)
    }

    /// Directions that can relate two distinct cells of this grid.
    pub fn legal_directions(self) -> Vec<Direction> {
        if self.is_single_row() {
            vec![Direction::Left, Direction::Right]
        } else if self.is_single_column() {
            vec![Direction::Above, Direction::Below]
        } else {
            Direction::ALL.to_vec()
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (m, n) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::invalid_argument(format!("grid `{s}` is not of the form MxN")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::invalid_argument(format!("grid `{s}` is not of the form MxN")))
        };
        GridSpec::new(parse(m)?, parse(n)?)
    }
}

impl TryFrom<[u32; 2]> for GridSpec {
    type Error = Error;

    fn try_from([rows, cols]: [u32; 2]) -> Result<Self> {
        GridSpec::new(rows, cols)
    }
}

impl From<GridSpec> for [u32; 2] {
    fn from(g: GridSpec) -> Self {
        [g.rows, g.cols]
    }
}

pub(crate) fn render_rows<T: fmt::Display>(values: &[T], cols: u32) -> String {
    values
        .chunks(cols as usize)
        .map(|row| {
            row.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// 1-based row-major cell label: 1 is top-left, `m*n` is bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionIndex(u32);

impl PositionIndex {
    pub fn new(value: u32, grid: GridSpec) -> Result<Self> {
        if value == 0 || value > grid.piece_count() {
            return Err(Error::invalid_argument(format!(
                "position {value} outside 1..={} for grid {grid}",
                grid.piece_count()
            )));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for PositionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Shuffle state of a puzzle.
///
/// `mapping[x - 1]` is the original position of the patch currently shown at
/// shuffled position `x`. This is exactly the grid a full question expects as
/// its answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Permutation {
    mapping: Vec<u32>,
}

impl Permutation {
    pub fn identity(len: usize) -> Self {
        Self {
            mapping: (1..=len as u32).collect(),
        }
    }

    pub fn from_mapping(mapping: Vec<u32>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &v in &mapping {
            let slot = (v as usize)
                .checked_sub(1)
                .filter(|&i| i < n)
                .ok_or_else(|| Error::invalid_argument(format!("value {v} outside 1..={n}")))?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::invalid_argument(format!("value {v} repeated")));
            }
        }
        Ok(Self { mapping })
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.mapping
    }

    /// Original position of the patch at shuffled position `x` (1-based).
    pub fn origin_of(&self, x: u32) -> u32 {
        self.mapping[x as usize - 1]
    }

    /// Shuffled position currently holding the patch from original position `y`.
    pub fn slot_of(&self, y: u32) -> u32 {
        self.mapping.iter().position(|&v| v == y).expect("bijection") as u32 + 1
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (x, &y) in self.mapping.iter().enumerate() {
            inv[y as usize - 1] = x as u32 + 1;
        }
        Self { mapping: inv }
    }

    /// `(self ∘ other)[x] = self[other[x]]`.
    pub fn compose(&self, other: &Permutation) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            mapping: other.mapping.iter().map(|&x| self.origin_of(x)).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &v)| v as usize == i + 1)
    }

    /// Answer grid text, `cols` integers per line.
    pub fn render_grid(&self, cols: u32) -> String {
        render_rows(&self.mapping, cols)
    }
}

impl TryFrom<Vec<u32>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        Permutation::from_mapping(v)
    }
}

impl From<Permutation> for Vec<u32> {
    fn from(p: Permutation) -> Self {
        p.mapping
    }
}

/// Uniform permutation of `len` elements by Fisher-Yates, drawing from `rng`.
pub fn shuffle_with<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Permutation {
    let mut mapping: Vec<u32> = (1..=len as u32).collect();
    for i in (1..len).rev() {
        let j = rng.random_range(0..=i);
        mapping.swap(i, j);
    }
    Permutation { mapping }
}

/// Uniformly random shuffle for `grid`, fully determined by `seed`.
/// The identity is a possible outcome.
pub fn random_permutation(grid: GridSpec, seed: u64) -> Permutation {
    shuffle_with(grid.piece_count() as usize, &mut rng::seeded(seed))
}

/// Relative direction between two cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    UpperLeft,
    Above,
    UpperRight,
    Left,
    Right,
    LowerLeft,
    Below,
    LowerRight,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::UpperLeft,
        Direction::Above,
        Direction::UpperRight,
        Direction::Left,
        Direction::Right,
        Direction::LowerLeft,
        Direction::Below,
        Direction::LowerRight,
    ];

    /// Direction for the signs of `(row(a) - row(b), col(a) - col(b))`.
    /// `None` for `(0, 0)`.
    pub fn from_signs(drow: i64, dcol: i64) -> Option<Self> {
        use std::cmp::Ordering::*;
        Some(match (drow.cmp(&0), dcol.cmp(&0)) {
            (Less, Less) => Direction::UpperLeft,
            (Less, Equal) => Direction::Above,
            (Less, Greater) => Direction::UpperRight,
            (Equal, Less) => Direction::Left,
            (Equal, Equal) => return None,
            (Equal, Greater) => Direction::Right,
            (Greater, Less) => Direction::LowerLeft,
            (Greater, Equal) => Direction::Below,
            (Greater, Greater) => Direction::LowerRight,
        })
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::UpperLeft => Direction::LowerRight,
            Direction::Above => Direction::Below,
            Direction::UpperRight => Direction::LowerLeft,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::LowerLeft => Direction::UpperRight,
            Direction::Below => Direction::Above,
            Direction::LowerRight => Direction::UpperLeft,
        }
    }

    pub fn is_diagonal(self) -> bool {
        matches!(
            self,
            Direction::UpperLeft | Direction::UpperRight | Direction::LowerLeft | Direction::LowerRight
        )
    }

    /// Wording used in answer options: `"{a} {phrase} {b}"`.
    pub fn phrase(self) -> &'static str {
        match self {
            Direction::UpperLeft => "is on the upper left of",
            Direction::Above => "is directly above",
            Direction::UpperRight => "is on the upper right of",
            Direction::Left => "is directly to the left of",
            Direction::Right => "is directly to the right of",
            Direction::LowerLeft => "is on the lower left of",
            Direction::Below => "is directly below",
            Direction::LowerRight => "is on the lower right of",
        }
    }
}

/// Where `a` lies relative to `b`. Only the sign of each offset matters, so
/// cells 1 and 4 of a 4x1 grid are "directly above" one another.
pub fn relative_direction(a: PositionIndex, b: PositionIndex, grid: GridSpec) -> Result<Direction> {
    if a == b {
        return Err(Error::invalid_argument(format!(
            "relative direction of position {a} to itself"
        )));
    }
    let drow = i64::from(grid.row_of(a)) - i64::from(grid.row_of(b));
    let dcol = i64::from(grid.col_of(a)) - i64::from(grid.col_of(b));
    Ok(Direction::from_signs(drow, dcol).expect("distinct positions"))
}

/// Position `p` of `grid` after transposing the grid.
pub fn transpose_position(p: u32, grid: GridSpec) -> u32 {
    let pos = PositionIndex(p);
    grid.transposed().at(grid.col_of(pos), grid.row_of(pos)).get()
}

/// Transposes a non-square puzzle with probability 1/2.
///
/// Both the shuffled slots and the original positions are relabelled to the
/// row-major order of the transposed grid. Square grids are returned as-is
/// without consuming randomness. The flag reports whether a transpose took
/// place.
pub fn transpose_augment<R: Rng + ?Sized>(
    grid: GridSpec,
    perm: &Permutation,
    rng: &mut R,
) -> (GridSpec, Permutation, bool) {
    if grid.is_square() || !rng.random_bool(0.5) {
        return (grid, perm.clone(), false);
    }
    let (t_grid, t_perm) = transpose(grid, perm);
    (t_grid, t_perm, true)
}

/// Deterministic transpose of a puzzle's grid and shuffle.
pub fn transpose(grid: GridSpec, perm: &Permutation) -> (GridSpec, Permutation) {
    let t_grid = grid.transposed();
    let mut mapping = vec![0; perm.len()];
    for x in 1..=grid.piece_count() {
        let tx = transpose_position(x, grid);
        mapping[tx as usize - 1] = transpose_position(perm.origin_of(x), grid);
    }
    (t_grid, Permutation { mapping })
}
