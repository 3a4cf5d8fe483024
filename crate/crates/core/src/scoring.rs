//! Rule-based rewards and evaluation metrics.
//!
//! The reward is `accuracy + format`. Accuracy is the fraction of correct
//! positions (full), choice correctness (pair) or IoU (box). Format is 0.5 when
//! the answer parses under the prompt's schema and, in thinking mode, each tag
//! appears exactly once in order. The two parts are scored independently, so a
//! response with misordered tags can still earn accuracy.

use serde::{Deserialize, Serialize};

use crate::imaging::PixelRect;
use crate::parsing::{self, ParsedResponse, Payload};
use crate::puzzle::GridSpec;
use crate::taskgen::{GroundTruth, Mode, TaskKind};

pub const FORMAT_REWARD: f64 = 0.5;

/// IoU at or above which a box answer counts as correct in evaluation.
pub const BOX_CORRECT_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: f64,
    pub format: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(accuracy: f64, format: f64) -> Self {
        Self {
            accuracy,
            format,
            total: accuracy + format,
        }
    }
}

pub fn format_reward(parsed: &ParsedResponse, mode: Mode) -> f64 {
    let tags_ok = match mode {
        Mode::Thinking => parsed.tags.correct_order,
        Mode::NonThinking => true,
    };
    if tags_ok && parsed.payload.is_parsed() {
        FORMAT_REWARD
    } else {
        0.0
    }
}

pub fn accuracy_reward(payload: &Payload, truth: &GroundTruth) -> f64 {
    match (payload, truth) {
        (Payload::Grid { rows, cols, values }, GroundTruth::Grid { grid, values: expected }) => {
            if (*rows, *cols) != (grid.rows(), grid.cols()) || values.len() != expected.len() {
                return 0.0;
            }
            let hits = values
                .iter()
                .zip(expected)
                .filter(|(&got, &want)| got == i64::from(want))
                .count();
            hits as f64 / expected.len() as f64
        }
        (Payload::Letter { letter }, GroundTruth::Letter { letter: want, .. }) => {
            if letter == want {
                1.0
            } else {
                0.0
            }
        }
        (Payload::Bbox { coords }, GroundTruth::Bbox { rect }) => iou(*coords, rect),
        _ => 0.0,
    }
}

/// IoU of a predicted `[x1, y1, x2, y2]` against a half-open pixel rect.
/// Empty or inverted predictions score 0.
pub fn iou(pred: [i64; 4], truth: &PixelRect) -> f64 {
    let [px1, py1, px2, py2] = pred;
    if px1 >= px2 || py1 >= py2 {
        return 0.0;
    }
    let [tx1, ty1, tx2, ty2] = truth.as_array();
    let iw = (px2.min(tx2) - px1.max(tx1)).max(0) as i128;
    let ih = (py2.min(ty2) - py1.max(ty1)).max(0) as i128;
    let inter = iw * ih;
    let pred_area = i128::from(px2 - px1) * i128::from(py2 - py1);
    let union = pred_area + i128::from(truth.area()) - inter;
    inter as f64 / union as f64
}

/// Table metric for one answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetric {
    /// Exact grid match (full), correct letter (pair), IoU >= 0.5 (box).
    pub correct: bool,
    /// Percent-scale contribution to a table cell: 0/1 for full and pair,
    /// the IoU for box.
    pub score: f64,
    pub iou: Option<f64>,
}

pub fn eval_metric(payload: &Payload, truth: &GroundTruth) -> EvalMetric {
    match truth.kind() {
        TaskKind::Full | TaskKind::Pair => {
            let correct = accuracy_reward(payload, truth) == 1.0;
            EvalMetric {
                correct,
                score: if correct { 1.0 } else { 0.0 },
                iou: None,
            }
        }
        TaskKind::Box => {
            let v = accuracy_reward(payload, truth);
            EvalMetric {
                correct: v >= BOX_CORRECT_IOU,
                score: v,
                iou: Some(v),
            }
        }
    }
}

/// Everything derived from scoring one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub reward: RewardBreakdown,
    pub eval: EvalMetric,
    pub parsed: ParsedResponse,
    pub completion_chars: usize,
    pub completion_tokens: usize,
}

pub fn score_response(raw: &str, mode: Mode, truth: &GroundTruth) -> ScoredResponse {
    let parsed = parsing::parse_response(raw, mode, truth.schema());
    let reward = RewardBreakdown::new(accuracy_reward(&parsed.payload, truth), format_reward(&parsed, mode));
    let eval = eval_metric(&parsed.payload, truth);
    ScoredResponse {
        reward,
        eval,
        parsed,
        completion_chars: raw.chars().count(),
        completion_tokens: raw.split_whitespace().count(),
    }
}

/// Helper for grid ground truth from raw values.
pub fn grid_truth(grid: GridSpec, values: &[u32]) -> GroundTruth {
    GroundTruth::Grid {
        grid,
        values: values.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(m: u32, n: u32) -> GridSpec {
        GridSpec::new(m, n).unwrap()
    }

    fn rect(x1: u32, y1: u32, x2: u32, y2: u32) -> PixelRect {
        PixelRect::new(x1, y1, x2, y2).unwrap()
    }

    /// Counts covered pixels one by one.
    fn pixel_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
        if a[0] >= a[2] || a[1] >= a[3] {
            return 0.0;
        }
        let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
        let (lo_x, hi_x) = (a[0].min(b[0]), a[2].max(b[2]));
        let (lo_y, hi_y) = (a[1].min(b[1]), a[3].max(b[3]));
        let (mut inter, mut union) = (0u64, 0u64);
        for y in lo_y..hi_y {
            for x in lo_x..hi_x {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += u64::from(ia && ib);
                union += u64::from(ia || ib);
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn format_examples() {
        let truth = grid_truth(g(2, 2), &[2, 1, 4, 3]);
        let ok = score_response("<think>hm</think><answer>2 1\n4 3</answer>", Mode::Thinking, &truth);
        assert_eq!(ok.reward, RewardBreakdown::new(1.0, 0.5));
        let dup = score_response(
            "<think>a</think><think>b</think><answer>2 1\n4 3</answer>",
            Mode::Thinking,
            &truth,
        );
        assert_eq!(dup.reward.format, 0.0);
        assert_eq!(dup.reward.accuracy, 1.0);
        let pair = GroundTruth::Letter { letter: 'B', num_choices: 8 };
        assert_eq!(score_response("B", Mode::NonThinking, &pair).reward.format, 0.5);
    }

    #[test]
    fn tags_without_valid_answer_get_no_format() {
        let truth = grid_truth(g(2, 2), &[2, 1, 4, 3]);
        let r = score_response("<think>x</think><answer>dunno</answer>", Mode::Thinking, &truth);
        assert_eq!(r.reward, RewardBreakdown::new(0.0, 0.0));
        let r = score_response("", Mode::NonThinking, &truth);
        assert_eq!(r.reward.total, 0.0);
    }

    #[test]
    fn accuracy_examples() {
        let truth = grid_truth(g(2, 2), &[2, 1, 4, 3]);
        let pred = Payload::Grid { rows: 2, cols: 2, values: vec![2, 1, 3, 4] };
        assert_eq!(accuracy_reward(&pred, &truth), 0.5);
        let dupes = Payload::Grid { rows: 2, cols: 2, values: vec![2, 2, 2, 2] };
        assert_eq!(accuracy_reward(&dupes, &truth), 0.25);

        let boxed = GroundTruth::Bbox { rect: rect(0, 0, 100, 100) };
        assert_eq!(accuracy_reward(&Payload::Bbox { coords: [0, 0, 100, 100] }, &boxed), 1.0);
        assert_eq!(accuracy_reward(&Payload::Bbox { coords: [200, 200, 300, 300] }, &boxed), 0.0);
        let third = accuracy_reward(&Payload::Bbox { coords: [50, 0, 150, 100] }, &boxed);
        assert_eq!(third, pixel_iou([50, 0, 150, 100], [0, 0, 100, 100]));
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(accuracy_reward(&Payload::Bbox { coords: [10, 0, 5, 100] }, &boxed), 0.0);
        assert_eq!(accuracy_reward(&Payload::Unparseable, &boxed), 0.0);
        assert_eq!(accuracy_reward(&Payload::Letter { letter: 'A' }, &boxed), 0.0);
    }

    #[test]
    fn eval_uses_exact_match_for_full() {
        let truth = grid_truth(g(2, 2), &[2, 1, 4, 3]);
        let half = Payload::Grid { rows: 2, cols: 2, values: vec![2, 1, 3, 4] };
        assert!(!eval_metric(&half, &truth).correct);
        let all = Payload::Grid { rows: 2, cols: 2, values: vec![2, 1, 4, 3] };
        let m = eval_metric(&all, &truth);
        assert!(m.correct);
        assert_eq!(accuracy_reward(&all, &truth), 1.0);
    }

    #[test]
    fn full_accuracy_matches_exhaustive_2x2() {
        let mut perms = Vec::new();
        for a in 1..=4u32 {
            for b in (1..=4).filter(|&b| b != a) {
                for c in (1..=4).filter(|&c| c != a && c != b) {
                    perms.push([a, b, c, 10 - a - b - c]);
                }
            }
        }
        for truth in &perms {
            let gt = grid_truth(g(2, 2), truth);
            for pred in &perms {
                let matches = (0..4).filter(|&k| pred[k] == truth[k]).count();
                let payload = Payload::Grid { rows: 2, cols: 2, values: pred.iter().map(|&v| i64::from(v)).collect() };
                assert_eq!(accuracy_reward(&payload, &gt), matches as f64 / 4.0);
            }
        }
    }

    #[test]
    fn completion_lengths() {
        let truth = GroundTruth::Letter { letter: 'A', num_choices: 2 };
        let r = score_response("héllo  world\nA", Mode::NonThinking, &truth);
        assert_eq!(r.completion_chars, 14);
        assert_eq!(r.completion_tokens, 3);
    }

    fn rect_strategy() -> impl Strategy<Value = [i64; 4]> {
        (0i64..64, 0i64..64, 1i64..=64, 1i64..=64).prop_map(|(x, y, w, h)| [x, y, (x + w).min(64), (y + h).min(64)])
    }

    proptest! {
        #[test]
        fn iou_properties(a in rect_strategy(), b in rect_strategy()) {
            prop_assume!(a[0] < a[2] && a[1] < a[3] && b[0] < b[2] && b[1] < b[3]);
            let ra = rect(a[0] as u32, a[1] as u32, a[2] as u32, a[3] as u32);
            let rb = rect(b[0] as u32, b[1] as u32, b[2] as u32, b[3] as u32);
            let ab = iou(a, &rb);
            prop_assert_eq!(ab, iou(b, &ra));
            prop_assert_eq!(iou(a, &ra), 1.0);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - pixel_iou(a, b)).abs() <= 1e-12);
        }

        #[test]
        fn correcting_a_cell_never_lowers_reward(
            seed in any::<u64>(),
            wrong in proptest::collection::vec(0i64..10, 6),
            fix in 0usize..6,
        ) {
            let grid = g(2, 3);
            let truth_perm = crate::puzzle::random_permutation(grid, seed);
            let truth = grid_truth(grid, truth_perm.as_slice());
            let render = |vals: &[i64]| {
                format!("<think>t</think><answer>{}</answer>", crate::puzzle::render_rows(vals, 3))
            };
            let before = score_response(&render(&wrong), Mode::Thinking, &truth).reward;
            let mut fixed = wrong.clone();
            fixed[fix] = i64::from(truth_perm.as_slice()[fix]);
            let after = score_response(&render(&fixed), Mode::Thinking, &truth).reward;
            prop_assert!(after.total >= before.total);
            prop_assert_eq!(after.format, before.format);
        }

        #[test]
        fn reward_bounds(raw in ".{0,80}", think in any::<bool>()) {
            let mode = if think { Mode::Thinking } else { Mode::NonThinking };
            for truth in [
                grid_truth(g(2, 1), &[2, 1]),
                GroundTruth::Letter { letter: 'A', num_choices: 8 },
                GroundTruth::Bbox { rect: rect(0, 0, 10, 10) },
            ] {
                let r = score_response(&raw, mode, &truth);
                prop_assert!(r.reward.total >= 0.0 && r.reward.total <= 1.5);
                prop_assert_eq!(r.reward.total, r.reward.accuracy + r.reward.format);
                if !r.parsed.payload.is_parsed() {
                    prop_assert_eq!(r.reward.total, 0.0);
                }
            }
        }
    }
}
