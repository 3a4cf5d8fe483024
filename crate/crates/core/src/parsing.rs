//! Answer extraction from raw model output.
//!
//! Every function here is total: malformed text yields compliance flags or
//! [`Payload::Unparseable`], never an error.
//!
//! Extraction rules:
//! - Tags are matched as exact, case-sensitive strings (`<think>`, `</think>`,
//!   `<answer>`, `</answer>`).
//! - In thinking mode the answer region is the text between the last
//!   `<answer>` and the first `</answer>` after it. In non-thinking mode it is
//!   the whole output.
//! - Within a region the last well-formed candidate wins.
//! - Grid: a block of `m` consecutive lines, each holding exactly `n` integers
//!   separated by whitespace and/or commas and nothing else.
//! - Letter: a single ASCII letter standing alone (no adjacent letters, digits,
//!   underscores or apostrophes), case-insensitive, within the first
//!   `num_choices` letters of the alphabet.
//! - Bbox: exactly four integers joined by commas (spaces allowed around the
//!   commas). Integers touching letters, digits or a decimal point do not count.

use serde::{Deserialize, Serialize};

use crate::puzzle::GridSpec;
use crate::taskgen::{AnswerSchema, Mode};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCompliance {
    pub think_open: usize,
    pub think_close: usize,
    pub answer_open: usize,
    pub answer_close: usize,
    /// Each tag exactly once, in `<think></think><answer></answer>` order.
    pub correct_order: bool,
}

/// Structured answer pulled out of a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Payload {
    Grid { rows: u32, cols: u32, values: Vec<i64> },
    Letter { letter: char },
    Bbox { coords: [i64; 4] },
    Unparseable,
}

impl Payload {
    pub fn is_parsed(&self) -> bool {
        !matches!(self, Payload::Unparseable)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think_text: Option<String>,
    pub answer_text: Option<String>,
    pub payload: Payload,
    pub tags: TagCompliance,
}

/// Counts tags and locates the think and answer regions.
pub fn extract_regions(raw: &str, mode: Mode) -> ParsedResponse {
    let tags = tag_compliance(raw);
    let think_text = between(raw, raw.find(THINK_OPEN), THINK_OPEN, THINK_CLOSE);
    let answer_text = match mode {
        Mode::Thinking => between(raw, raw.rfind(ANSWER_OPEN), ANSWER_OPEN, ANSWER_CLOSE),
        Mode::NonThinking => Some(raw.to_owned()),
    };
    ParsedResponse {
        think_text,
        answer_text,
        payload: Payload::Unparseable,
        tags,
    }
}

fn between(raw: &str, open_at: Option<usize>, open: &str, close: &str) -> Option<String> {
    let start = open_at? + open.len();
    let len = raw[start..].find(close)?;
    Some(raw[start..start + len].to_owned())
}

fn tag_compliance(raw: &str) -> TagCompliance {
    let think_open = raw.matches(THINK_OPEN).count();
    let think_close = raw.matches(THINK_CLOSE).count();
    let answer_open = raw.matches(ANSWER_OPEN).count();
    let answer_close = raw.matches(ANSWER_CLOSE).count();
    let once = think_open == 1 && think_close == 1 && answer_open == 1 && answer_close == 1;
    let correct_order = once && {
        let pos = |t: &str| raw.find(t).expect("counted once");
        pos(THINK_OPEN) < pos(THINK_CLOSE)
            && pos(THINK_CLOSE) < pos(ANSWER_OPEN)
            && pos(ANSWER_OPEN) < pos(ANSWER_CLOSE)
    };
    TagCompliance {
        think_open,
        think_close,
        answer_open,
        answer_close,
        correct_order,
    }
}

/// Extracts regions and parses the answer region against `schema`.
pub fn parse_response(raw: &str, mode: Mode, schema: AnswerSchema) -> ParsedResponse {
    let mut parsed = extract_regions(raw, mode);
    if let Some(region) = parsed.answer_text.as_deref() {
        parsed.payload = parse_payload(region, schema);
    }
    parsed
}

pub fn parse_payload(region: &str, schema: AnswerSchema) -> Payload {
    match schema {
        AnswerSchema::Grid { grid } => parse_grid(region, grid),
        AnswerSchema::Letter { num_choices } => parse_letter(region, num_choices),
        AnswerSchema::Bbox => parse_bbox(region),
    }
}

/// Integers of a line made only of integers, whitespace and commas.
fn integer_row(line: &str) -> Option<Vec<i64>> {
    let values = line
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(parse_int)
        .collect::<Option<Vec<_>>>()?;
    (!values.is_empty()).then_some(values)
}

fn parse_int(token: &str) -> Option<i64> {
    let digits = token.strip_prefix('-').unwrap_or(token);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}

/// Last block of `m` consecutive lines holding `n` integers each.
pub fn parse_grid(region: &str, grid: GridSpec) -> Payload {
    let (m, n) = (grid.rows() as usize, grid.cols() as usize);
    let mut run: Vec<Vec<i64>> = Vec::new();
    let mut best: Option<Vec<i64>> = None;
    let mut flush = |run: &mut Vec<Vec<i64>>| {
        if run.len() >= m {
            best = Some(run[run.len() - m..].concat());
        }
        run.clear();
    };
    for line in region.lines() {
        match integer_row(line) {
            Some(row) if row.len() == n => run.push(row),
            _ => flush(&mut run),
        }
    }
    flush(&mut run);
    match best {
        Some(values) => Payload::Grid {
            rows: grid.rows(),
            cols: grid.cols(),
            values,
        },
        None => Payload::Unparseable,
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '_'
}

/// Last standalone letter within the first `num_choices` letters.
pub fn parse_letter(region: &str, num_choices: u32) -> Payload {
    let last_valid = (b'A' as u32 + num_choices.clamp(1, 26) - 1) as u8 as char;
    let chars: Vec<char> = region.chars().collect();
    let mut found = None;
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_alphabetic() {
            continue;
        }
        let prev_ok = i == 0 || !is_word_char(chars[i - 1]);
        let next_ok = i + 1 == chars.len() || !is_word_char(chars[i + 1]);
        let upper = c.to_ascii_uppercase();
        if prev_ok && next_ok && ('A'..=last_valid).contains(&upper) {
            found = Some(upper);
        }
    }
    match found {
        Some(letter) => Payload::Letter { letter },
        None => Payload::Unparseable,
    }
}

#[derive(Debug, Clone, Copy)]
struct IntToken {
    start: usize,
    end: usize,
    value: Option<i64>,
}

/// Integer tokens of `text` with byte spans. Tokens glued to letters or
/// decimal points carry `value: None` and break comma chains.
fn integer_tokens(text: &str) -> Vec<IntToken> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let mut start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let end = i;
        if start > 0 && bytes[start - 1] == b'-' {
            start -= 1;
        }
        let before = text[..start].chars().next_back();
        let after = text[end..].chars().next();
        let glued_before = before.is_some_and(|c| is_word_char(c) || c == '.');
        let glued_after = after.is_some_and(is_word_char)
            || (after == Some('.') && bytes.get(end + 1).is_some_and(u8::is_ascii_digit));
        let value = if glued_before || glued_after {
            None
        } else {
            text[start..end].parse().ok()
        };
        out.push(IntToken { start, end, value });
    }
    out
}

fn is_comma_gap(gap: &str) -> bool {
    let trimmed = gap.trim();
    trimmed == "," && gap.matches(',').count() == 1
}

/// Last run of exactly four comma-joined integers.
pub fn parse_bbox(region: &str) -> Payload {
    let tokens = integer_tokens(region);
    let mut found = None;
    let mut run: Vec<IntToken> = Vec::new();
    let mut flush = |run: &mut Vec<IntToken>| {
        if run.len() == 4 {
            let coords = [0, 1, 2, 3].map(|k| run[k].value.expect("valid tokens only"));
            found = Some(coords);
        }
        run.clear();
    };
    for tok in tokens {
        if tok.value.is_none() {
            flush(&mut run);
            continue;
        }
        let joined = run
            .last()
            .is_some_and(|prev| is_comma_gap(&region[prev.end..tok.start]));
        if !joined {
            flush(&mut run);
        }
        run.push(tok);
    }
    flush(&mut run);
    match found {
        Some(coords) => Payload::Bbox { coords },
        None => Payload::Unparseable,
    }
}
