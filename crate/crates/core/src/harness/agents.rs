//! Baseline responders: a uniform random guesser and a ground-truth oracle.

use rand::Rng;

use crate::parsing::{ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN};
use crate::puzzle::shuffle_with;
use crate::taskgen::{GroundTruth, Mode, Question, QuestionDetails};

const STUB_THOUGHT: &str = "Compare the edges of adjacent patches.";

/// Wraps an answer in the response protocol of `mode`.
pub fn wrap_answer(answer: &str, mode: Mode) -> String {
    match mode {
        Mode::Thinking => format!("{THINK_OPEN}{STUB_THOUGHT}{THINK_CLOSE}\n{ANSWER_OPEN}\n{answer}\n{ANSWER_CLOSE}"),
        Mode::NonThinking => answer.to_owned(),
    }
}

/// Answers uniformly at random within the answer schema: a random
/// permutation (full), a random letter (pair), or a random in-image box with
/// the ground-truth patch size (box).
pub fn random_agent<R: Rng + ?Sized>(question: &Question, rng: &mut R) -> String {
    let answer = match (&question.details, &question.ground_truth) {
        (QuestionDetails::Full { grid }, _) => shuffle_with(grid.piece_count() as usize, rng).render_grid(grid.cols()),
        (QuestionDetails::Pair { choices, .. }, _) => {
            let k = rng.random_range(0..choices.len() as u8);
            char::from(b'A' + k).to_string()
        }
        (QuestionDetails::Box { image_dims, .. }, GroundTruth::Bbox { rect }) => {
            let (w, h) = (rect.width(), rect.height());
            let x = rng.random_range(0..=image_dims[0].saturating_sub(w));
            let y = rng.random_range(0..=image_dims[1].saturating_sub(h));
            format!("{},{},{},{}", x, y, x + w, y + h)
        }
        (QuestionDetails::Box { .. }, _) => unreachable!("box questions carry bbox ground truth"),
    };
    wrap_answer(&answer, question.mode)
}

/// Emits the ground truth in the canonical format.
pub fn oracle_agent(question: &Question) -> String {
    wrap_answer(&question.ground_truth.render(), question.mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::GridSpec;
    use crate::rng::seeded;
    use crate::scoring::score_response;
    use crate::taskgen::{make_full, make_pair, plan_box, box_question, BoxAnswerSemantics, PuzzleInstance};

    fn questions(mode: Mode) -> Vec<Question> {
        let mut rng = seeded(5);
        let mut out = Vec::new();
        for (i, (m, n)) in [(2, 1), (1, 3), (2, 2), (3, 3)].into_iter().enumerate() {
            let grid = GridSpec::new(m, n).unwrap();
            let inst = PuzzleInstance::synthetic(format!("q{i}"), grid, i as u64);
            out.push(make_full(&inst, mode));
            out.push(make_pair(&inst, mode, &mut rng));
            let plan = plan_box([97, 61], grid, None, 0.5, BoxAnswerSemantics::default(), &mut rng).unwrap();
            out.push(box_question("b", &plan, mode));
        }
        out
    }

    #[test]
    fn oracle_scores_the_maximum() {
        for mode in [Mode::Thinking, Mode::NonThinking] {
            for q in questions(mode) {
                let s = score_response(&oracle_agent(&q), mode, &q.ground_truth);
                assert_eq!(s.reward.total, 1.5, "{:?}", q.details);
                assert!(s.eval.correct);
            }
        }
    }

    #[test]
    fn random_answers_are_always_well_formed() {
        let mut rng = seeded(9);
        for mode in [Mode::Thinking, Mode::NonThinking] {
            for q in questions(mode) {
                for _ in 0..50 {
                    let s = score_response(&random_agent(&q, &mut rng), mode, &q.ground_truth);
                    assert_eq!(s.reward.format, 0.5);
                }
            }
        }
    }
}
