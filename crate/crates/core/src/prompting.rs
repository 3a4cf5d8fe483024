//! Prompt rendering.
//!
//! Templates live in `templates/*.txt` and use `{name}` placeholders. Each
//! kind has one body template; the mode only changes the `{instruction}`
//! sentence. Rendered prompts use `\n` line endings and carry no trailing
//! newline.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::taskgen::{Mode, QuestionDetails, TaskKind};

const FULL: &str = include_str!("../templates/full.txt");
const PAIR: &str = include_str!("../templates/pair.txt");
const BOX: &str = include_str!("../templates/box.txt");
const THINKING: &str = include_str!("../templates/instruction_thinking.txt");
const NON_THINKING: &str = include_str!("../templates/instruction_non_thinking.txt");

const PLACEHOLDERS: &[&str] = &[
    "m",
    "n",
    "mn",
    "grid_diagram",
    "positions",
    "num_choices",
    "choice_block",
    "target_region",
    "instruction",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

/// A parsed template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    segments: Vec<Segment>,
}

impl PromptTemplate {
    /// Parses `{name}` placeholders. Unknown names and unbalanced braces are
    /// errors; `{{` and `}}` are literal braces.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.replace("\r\n", "\n");
        let text = text.strip_suffix('\n').unwrap_or(&text);
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut chars = text.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    literal.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    literal.push('}');
                }
                '{' => {
                    let name: String = chars.by_ref().take_while(|&c| c != '}').collect();
                    if !PLACEHOLDERS.contains(&name.as_str()) {
                        return Err(Error::invalid_input(format!("unknown placeholder `{{{name}}}`")));
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(name));
                }
                '}' => return Err(Error::invalid_input("unbalanced `}` in template")),
                c => literal.push(c),
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Text(literal));
        }
        Ok(Self { segments })
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(name) => Some(name.as_str()),
            Segment::Text(_) => None,
        })
    }

    pub fn render(&self, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => out.push_str(
                    &lookup(name).ok_or_else(|| Error::invalid_input(format!("no value for `{{{name}}}`")))?,
                ),
            }
        }
        Ok(out)
    }
}

struct Templates {
    full: PromptTemplate,
    pair: PromptTemplate,
    boxed: PromptTemplate,
    thinking: String,
    non_thinking: String,
}

fn templates() -> &'static Templates {
    static TEMPLATES: OnceLock<Templates> = OnceLock::new();
    TEMPLATES.get_or_init(|| Templates {
        full: PromptTemplate::parse(FULL).expect("bundled full template"),
        pair: PromptTemplate::parse(PAIR).expect("bundled pair template"),
        boxed: PromptTemplate::parse(BOX).expect("bundled box template"),
        thinking: THINKING.trim_end().to_owned(),
        non_thinking: NON_THINKING.trim_end().to_owned(),
    })
}

pub fn template(kind: TaskKind) -> &'static PromptTemplate {
    let t = templates();
    match kind {
        TaskKind::Full => &t.full,
        TaskKind::Pair => &t.pair,
        TaskKind::Box => &t.boxed,
    }
}

pub fn instruction(mode: Mode) -> &'static str {
    match mode {
        Mode::Thinking => &templates().thinking,
        Mode::NonThinking => &templates().non_thinking,
    }
}

/// Prompt text for a question.
pub fn render(details: &QuestionDetails, mode: Mode) -> String {
    let grid = details.grid();
    let lookup = |name: &str| -> Option<String> {
        Some(match (name, details) {
            ("m", _) => grid.rows().to_string(),
            ("n", _) => grid.cols().to_string(),
            ("mn", _) => grid.piece_count().to_string(),
            ("grid_diagram", _) => grid.diagram(),
            ("instruction", _) => instruction(mode).to_owned(),
            ("positions", QuestionDetails::Pair { first, second, .. }) => format!("{first} and {second}"),
            ("num_choices", QuestionDetails::Pair { choices, .. }) => choices.len().to_string(),
            ("choice_block", QuestionDetails::Pair { choices, .. }) => choices.render(),
            ("target_region", QuestionDetails::Box { target_region, .. }) => target_region.to_string(),
            _ => return None,
        })
    };
    template(details.kind())
        .render(lookup)
        .expect("bundled templates only use placeholders their kind provides")
}
