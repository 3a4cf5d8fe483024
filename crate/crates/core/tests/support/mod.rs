//! Independent reference implementations used by the integration and
//! acceptance tests, plus generators for synthetic response corpora.
#![allow(dead_code, clippy::needless_range_loop)]

use jigsaw_core::grpo::{grpo_objective, Aggregation, GrpoConfig, KlEstimator, SampleLogprobs};
use jigsaw_core::imaging::PixelRect;
use jigsaw_core::parsing::Payload;
use jigsaw_core::taskgen::AnswerSchema;
use jigsaw_core::{GridSpec, Mode};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use regex::Regex;
use std::sync::LazyLock;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn word(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '_'
}

// ---------------------------------------------------------------- parsing

/// Tag counts and the ordering verdict, computed by scanning every offset.
pub fn oracle_tags(raw: &str) -> ([usize; 4], bool) {
    let tags = ["<think>", "</think>", "<answer>", "</answer>"];
    let mut counts = [0; 4];
    let mut first = [usize::MAX; 4];
    for i in 0..raw.len() {
        for (k, t) in tags.iter().enumerate() {
            if raw.is_char_boundary(i) && raw[i..].starts_with(t) {
                counts[k] += 1;
                first[k] = first[k].min(i);
            }
        }
    }
    let ordered = counts == [1; 4] && first[0] < first[1] && first[1] < first[2] && first[2] < first[3];
    (counts, ordered)
}

pub fn oracle_answer_region(raw: &str, mode: Mode) -> Option<String> {
    match mode {
        Mode::NonThinking => Some(raw.to_owned()),
        Mode::Thinking => {
            let (_, after) = raw.rsplit_once("<answer>")?;
            let (inside, _) = after.split_once("</answer>")?;
            Some(inside.to_owned())
        }
    }
}

pub fn oracle_grid(region: &str, m: usize, n: usize) -> Option<Vec<i64>> {
    static ROW: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[\s,]*-?[0-9]+(?:[\s,]+-?[0-9]+)*[\s,]*$").unwrap());
    static INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?[0-9]+").unwrap());
    let (row, int) = (&*ROW, &*INT);
    let rows: Vec<Option<Vec<i64>>> = region
        .split('\n')
        .map(|line| {
            if !row.is_match(line) {
                return None;
            }
            let vals: Option<Vec<i64>> = int.find_iter(line).map(|t| t.as_str().parse().ok()).collect();
            vals.filter(|v| v.len() == n)
        })
        .collect();
    let mut best = None;
    for start in 0..rows.len() {
        if start + m <= rows.len() && rows[start..start + m].iter().all(Option::is_some) {
            best = Some(rows[start..start + m].iter().flat_map(|r| r.clone().unwrap()).collect());
        }
    }
    best
}

pub fn oracle_letter(region: &str, num_choices: u32) -> Option<char> {
    let last = (b'A' + num_choices as u8 - 1) as char;
    region
        .split(|c: char| !word(c))
        .filter(|tok| tok.chars().count() == 1)
        .filter_map(|tok| tok.chars().next())
        .filter(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_uppercase())
        .rfind(|c| ('A'..=last).contains(c))
}

/// True when the integer starting at byte `start` (at a digit or a '-') is
/// not glued to a word character or decimal point on its left.
fn clean_left(text: &str, start: usize) -> bool {
    let starts_with_minus = text[start..].starts_with('-');
    match text[..start].chars().next_back() {
        None => true,
        Some(c) => !(word(c) || c == '.' || (!starts_with_minus && c == '-')),
    }
}

fn clean_right(text: &str, end: usize) -> bool {
    let mut rest = text[end..].chars();
    match rest.next() {
        None => true,
        Some('.') => !rest.next().is_some_and(|c| c.is_ascii_digit()),
        Some(c) => !word(c),
    }
}

pub fn oracle_bbox(region: &str) -> Option<[i64; 4]> {
    static FOUR: LazyLock<Regex> = LazyLock::new(|| {
        Regex::new(r"^(-?[0-9]+)\s*,\s*(-?[0-9]+)\s*,\s*(-?[0-9]+)\s*,\s*(-?[0-9]+)").unwrap()
    });
    static BEFORE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([0-9]+)\s*,\s*$").unwrap());
    static AFTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*,\s*(-?[0-9]+)").unwrap());
    let (four, before, after) = (&*FOUR, &*BEFORE, &*AFTER);
    let mut best = None;
    for start in 0..region.len() {
        if !region.is_char_boundary(start) {
            continue;
        }
        let Some(c) = four.captures(&region[start..]) else { continue };
        let end = start + c.get(0).unwrap().end();
        // Every digit run must be maximal and unglued.
        if !clean_left(region, start) || !clean_right(region, end) {
            continue;
        }
        let Ok(vals) = (1..=4).map(|k| c[k].parse::<i64>()).collect::<Result<Vec<_>, _>>() else {
            continue;
        };
        // A valid integer joined on either side would make the chain longer
        // than four.
        // Leftmost match, so the capture is a whole digit run.
        if let Some(p) = before.captures(&region[..start]) {
            let m = p.get(1).unwrap();
            let tok_start = if region[..m.start()].ends_with('-') { m.start() - 1 } else { m.start() };
            if clean_left(region, tok_start) && region[tok_start..m.end()].parse::<i64>().is_ok() {
                continue;
            }
        }
        if let Some(nx) = after.captures(&region[end..]) {
            let m = nx.get(1).unwrap();
            if clean_right(region, end + m.end()) && m.as_str().parse::<i64>().is_ok() {
                continue;
            }
        }
        best = Some([vals[0], vals[1], vals[2], vals[3]]);
    }
    best
}

pub fn oracle_payload(region: &str, schema: AnswerSchema) -> Payload {
    match schema {
        AnswerSchema::Grid { grid } => match oracle_grid(region, grid.rows() as usize, grid.cols() as usize) {
            Some(values) => Payload::Grid { rows: grid.rows(), cols: grid.cols(), values },
            None => Payload::Unparseable,
        },
        AnswerSchema::Letter { num_choices } => match oracle_letter(region, num_choices) {
            Some(letter) => Payload::Letter { letter },
            None => Payload::Unparseable,
        },
        AnswerSchema::Bbox => match oracle_bbox(region) {
            Some(coords) => Payload::Bbox { coords },
            None => Payload::Unparseable,
        },
    }
}

pub fn oracle_parse(raw: &str, mode: Mode, schema: AnswerSchema) -> Payload {
    match oracle_answer_region(raw, mode) {
        Some(region) => oracle_payload(&region, schema),
        None => Payload::Unparseable,
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub raw: String,
    pub mode: Mode,
    pub schema: AnswerSchema,
}

const PROSE: &[&str] = &[
    "Let me look at the edges of each patch.",
    "The sky should be at the top, so this patch goes first.",
    "I think the answer is",
    "Option (C) seems wrong because the shadows do not line up.",
    "Wait, let me recheck the bottom row.",
    "The final answer is:",
    "Answer:",
    "Hmm, 3 patches show grass and 1 shows water.",
    "It's a tricky one; maybe A or maybe not.",
    "So the layout is",
    "Coordinates were approximately 12.5 wide.",
    "Region 4 looks unnatural.",
];

fn grid_text<R: Rng>(rng: &mut R, m: u32, n: u32) -> String {
    let sep = *[" ", "  ", ", ", ",", "\t"].choose(rng).unwrap();
    (0..m)
        .map(|_| {
            let row: Vec<String> = (0..n).map(|_| rng.random_range(1..=m * n + 1).to_string()).collect();
            row.join(sep)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn grid_near_miss<R: Rng>(rng: &mut R, m: u32, n: u32) -> String {
    match rng.random_range(0..4) {
        0 => grid_text(rng, m.saturating_sub(1).max(1), n),
        1 => grid_text(rng, m, n + 1),
        2 => format!("{} x", grid_text(rng, m, n)),
        _ => grid_text(rng, m, n).replace('\n', " "),
    }
}

fn letter_text<R: Rng>(rng: &mut R, k: u32) -> String {
    let c = (b'A' + rng.random_range(0..k) as u8) as char;
    let c = if rng.random_bool(0.3) { c.to_ascii_lowercase() } else { c };
    match rng.random_range(0..4) {
        0 => c.to_string(),
        1 => format!("({c})"),
        2 => format!("The answer is {c}."),
        _ => format!("Option {c}"),
    }
}

fn letter_near_miss<R: Rng>(rng: &mut R) -> String {
    ["Z", "(X)", "AB", "A1", "B's", "c_d", "it is I", "x"].choose(rng).unwrap().to_string()
}

fn bbox_text<R: Rng>(rng: &mut R) -> String {
    let v: Vec<i64> = (0..4).map(|_| rng.random_range(0..400)).collect();
    let sep = *[",", ", ", " , ", ",\t"].choose(rng).unwrap();
    let body = v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep);
    match rng.random_range(0..3) {
        0 => body,
        1 => format!("[{body}]"),
        _ => format!("({body})"),
    }
}

fn bbox_near_miss<R: Rng>(rng: &mut R) -> String {
    match rng.random_range(0..5) {
        0 => "10, 20, 110".to_owned(),
        1 => "1, 2, 3, 4, 5".to_owned(),
        2 => "1.5, 2, 3, 4".to_owned(),
        3 => "x1, 2, 3, 4".to_owned(),
        _ => "10,, 20, 30, 40".to_owned(),
    }
}

fn body<R: Rng>(rng: &mut R, schema: AnswerSchema) -> String {
    let mut parts = Vec::new();
    for _ in 0..rng.random_range(1..5) {
        let piece = match rng.random_range(0..3) {
            0 => PROSE.choose(rng).unwrap().to_string(),
            1 => match schema {
                AnswerSchema::Grid { grid } => grid_text(rng, grid.rows(), grid.cols()),
                AnswerSchema::Letter { num_choices } => letter_text(rng, num_choices),
                AnswerSchema::Bbox => bbox_text(rng),
            },
            _ => match schema {
                AnswerSchema::Grid { grid } => grid_near_miss(rng, grid.rows(), grid.cols()),
                AnswerSchema::Letter { .. } => letter_near_miss(rng),
                AnswerSchema::Bbox => bbox_near_miss(rng),
            },
        };
        parts.push(piece);
    }
    let mut out = String::new();
    for p in parts {
        if !out.is_empty() {
            out.push_str(["\n", "\n\n", " "].choose(rng).unwrap());
        }
        out.push_str(&p);
    }
    out
}

fn wrap_thinking<R: Rng>(rng: &mut R, think: &str, answer: &str) -> String {
    match rng.random_range(0..8) {
        0 => format!("<answer>{answer}</answer><think>{think}</think>"),
        1 => format!("<think>{think}</think><answer>{think}</answer>\n<answer>{answer}</answer>"),
        2 => format!("<think>{think}</think>\n{answer}"),
        3 => format!("<think>{think}<answer>{answer}</answer>"),
        4 => format!("<THINK>{think}</THINK><answer>{answer}</answer>"),
        _ => format!("<think>{think}</think>\n<answer>{answer}</answer>"),
    }
}

/// Deterministic mix of realistic, near-miss and malformed responses over
/// every schema and mode.
pub fn synthetic_corpus(count: usize, seed: u64) -> Vec<Sample> {
    let mut rng = rng(seed);
    let schemas = [
        AnswerSchema::Grid { grid: GridSpec::new(2, 1).unwrap() },
        AnswerSchema::Grid { grid: GridSpec::new(1, 3).unwrap() },
        AnswerSchema::Grid { grid: GridSpec::new(2, 2).unwrap() },
        AnswerSchema::Grid { grid: GridSpec::new(3, 3).unwrap() },
        AnswerSchema::Letter { num_choices: 2 },
        AnswerSchema::Letter { num_choices: 8 },
        AnswerSchema::Bbox,
    ];
    (0..count)
        .map(|i| {
            let schema = schemas[i % schemas.len()];
            let mode = if (i / schemas.len()).is_multiple_of(2) { Mode::Thinking } else { Mode::NonThinking };
            let answer = body(&mut rng, schema);
            let raw = match mode {
                Mode::Thinking => {
                    let think = body(&mut rng, schema);
                    wrap_thinking(&mut rng, &think, &answer)
                }
                Mode::NonThinking => answer,
            };
            Sample { raw, mode, schema }
        })
        .collect()
}

/// Random byte soup and mutations of corpus samples.
pub fn fuzz_input<R: Rng>(rng: &mut R, seeds: &[Sample]) -> String {
    const ALPHABET: &[&str] = &[
        "<think>", "</think>", "<answer>", "</answer>", "<", ">", "/", "\n", "\r\n", " ", "\t", ",", ".", "-", "(",
        ")", "[", "]", "0", "1", "7", "42", "99999999999999999999", "A", "b", "H", "Z", "_", "'", "é", "中", "\u{0}",
        "\u{2028}", "\u{a0}",
    ];
    match rng.random_range(0..3) {
        0 => {
            let len = rng.random_range(0..64);
            (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
        }
        1 => {
            let bytes: Vec<u8> = (0..rng.random_range(0..96)).map(|_| rng.random()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        _ => {
            let mut s: Vec<char> = seeds.choose(rng).unwrap().raw.chars().collect();
            for _ in 0..rng.random_range(1..6) {
                let at = rng.random_range(0..=s.len());
                match rng.random_range(0..3) {
                    0 if at < s.len() => {
                        s.remove(at);
                    }
                    _ => {
                        for c in ALPHABET.choose(rng).unwrap().chars().rev() {
                            s.insert(at, c);
                        }
                    }
                }
            }
            s.into_iter().collect()
        }
    }
}

// ---------------------------------------------------------------- scoring

/// Fraction of positions where prediction equals truth.
pub fn oracle_full_accuracy(pred: &[u32], truth: &[u32]) -> f64 {
    let mut hits = 0;
    for i in 0..truth.len() {
        if pred[i] == truth[i] {
            hits += 1;
        }
    }
    hits as f64 / truth.len() as f64
}

/// IoU by testing every pixel of the bounding canvas for membership.
pub fn oracle_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let (mut inter, mut union) = (0u64, 0u64);
    let lo_x = a[0].min(b[0]);
    let hi_x = a[2].max(b[2]);
    let lo_y = a[1].min(b[1]);
    let hi_y = a[3].max(b[3]);
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += u64::from(ia && ib);
            union += u64::from(ia || ib);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn random_rect<R: Rng>(rng: &mut R, size: u32) -> PixelRect {
    let x1 = rng.random_range(0..size);
    let y1 = rng.random_range(0..size);
    let x2 = rng.random_range(x1 + 1..=size);
    let y2 = rng.random_range(y1 + 1..=size);
    PixelRect::new(x1, y1, x2, y2).unwrap()
}

// ---------------------------------------------------------------- grpo

pub struct GradientCheck {
    pub max_rel_error: f64,
    pub tokens: usize,
}

/// Central differences of the objective against its analytic gradient on a
/// random group. The error is `max|analytic - numeric| / max|numeric|`.
pub fn gradient_check(seed: u64, step: f64) -> GradientCheck {
    let mut rng = rng(seed);
    let group = rng.random_range(2..=8);
    let cfg = GrpoConfig {
        group_size: group,
        clip_eps: rng.random_range(0.05..0.4),
        kl_coeff: rng.random_range(0.0..0.2),
        kl_estimator: if rng.random_bool(0.5) { KlEstimator::K3 } else { KlEstimator::K1 },
        aggregation: if rng.random_bool(0.5) { Aggregation::SampleMean } else { Aggregation::TokenMean },
        ..GrpoConfig::default()
    };
    let samples: Vec<SampleLogprobs> = (0..group)
        .map(|_| {
            let len = rng.random_range(1..24);
            let current: Vec<f64> = (0..len).map(|_| rng.random_range(-4.0..-0.01)).collect();
            let old = current.iter().map(|c| c + rng.random_range(-0.5..0.5)).collect();
            let reference = current.iter().map(|c| c + rng.random_range(-1.0..1.0)).collect();
            let mask = rng.random_bool(0.3).then(|| (0..len).map(|_| rng.random_bool(0.8)).collect());
            SampleLogprobs { current, old, reference, mask }
        })
        .collect();
    let adv: Vec<f64> = (0..group).map(|_| rng.random_range(-2.0..2.0)).collect();
    let analytic = grpo_objective(&samples, &adv, &cfg).unwrap().grad;

    let (mut max_err, mut max_ref, mut tokens) = (0.0f64, 0.0f64, 0);
    for i in 0..group {
        for t in 0..samples[i].current.len() {
            let eval = |h: f64| {
                let mut s = samples.clone();
                s[i].current[t] += h;
                grpo_objective(&s, &adv, &cfg).unwrap().loss
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            max_err = max_err.max((analytic[i][t] - numeric).abs());
            max_ref = max_ref.max(numeric.abs());
            tokens += 1;
        }
    }
    GradientCheck { max_rel_error: max_err / max_ref.max(f64::MIN_POSITIVE), tokens }
}
