//! Training-dynamics measurements over response corpora: keyword frequency
//! and completion length per step, with exponential smoothing.
//!
//! Lengths are tokenizer-free proxies: Unicode scalar values and
//! whitespace-delimited tokens.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::manifest::ResponseRecord;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.1;

/// A named family of terms counted together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordGroup {
    pub name: String,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSpec {
    pub groups: Vec<KeywordGroup>,
}

impl Default for KeywordSpec {
    /// Backtracking and backward-chaining terms. The misspelling
    /// "reexmamine" is matched alongside the standard spelling.
    fn default() -> Self {
        let group = |name: &str, terms: &[&str]| KeywordGroup {
            name: name.to_owned(),
            terms: terms.iter().map(|t| (*t).to_owned()).collect(),
        };
        Self {
            groups: vec![
                group(
                    "backtracking",
                    &["recheck", "reverify", "reevaluate", "reexamine", "reexmamine"],
                ),
                group("backward_chaining", &["work backwards"]),
            ],
        }
    }
}

/// Case-insensitive, word-bounded matcher for a [`KeywordSpec`]. Words
/// inside a multi-word term are separated by exactly one space.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    groups: Vec<(String, Regex)>,
}

impl KeywordMatcher {
    pub fn new(spec: &KeywordSpec) -> Result<Self> {
        let mut groups = Vec::with_capacity(spec.groups.len());
        for g in &spec.groups {
            if g.terms.is_empty() || g.terms.iter().any(|t| t.trim().is_empty()) {
                return Err(Error::invalid_argument(format!("keyword group `{}` has an empty term", g.name)));
            }
            let alternation = g.terms.iter().map(|t| regex::escape(t)).collect::<Vec<_>>().join("|");
            let re = Regex::new(&format!(r"(?i)\b(?:{alternation})\b"))
                .map_err(|e| Error::invalid_argument(format!("keyword group `{}`: {e}", g.name)))?;
            groups.push((g.name.clone(), re));
        }
        Ok(Self { groups })
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|(name, _)| name.as_str())
    }

    /// Matches per group in `text`.
    pub fn count(&self, text: &str) -> Vec<usize> {
        self.groups.iter().map(|(_, re)| re.find_iter(text).count()).collect()
    }
}

/// Raw values and their exponentially smoothed counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl Series {
    fn new(raw: Vec<f64>, alpha: f64) -> Self {
        let smoothed = smooth(&raw, alpha);
        Self { raw, smoothed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub alpha: f64,
    /// Step labels in ascending order; responses without a step count as
    /// step 0.
    pub steps: Vec<u64>,
    pub responses: Vec<usize>,
    pub mean_chars: Series,
    pub mean_tokens: Series,
    /// Mean matches per response, by keyword group. Can exceed 1.
    pub keywords: BTreeMap<String, Series>,
    /// Total matches per group over the whole corpus.
    pub keyword_totals: BTreeMap<String, usize>,
}

/// `s_0 = x_0`, `s_t = alpha * x_t + (1 - alpha) * s_{t-1}`.
pub fn smooth(xs: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    for (t, &x) in xs.iter().enumerate() {
        let s = if t == 0 { x } else { alpha * x + (1.0 - alpha) * out[t - 1] };
        out.push(s);
    }
    out
}

pub fn analyze(responses: &[ResponseRecord], spec: &KeywordSpec, alpha: f64) -> Result<AnalysisReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid_argument(format!("smoothing factor {alpha} outside (0, 1]")));
    }
    let matcher = KeywordMatcher::new(spec)?;
    let n_groups = spec.groups.len();

    #[derive(Default)]
    struct Acc {
        n: usize,
        chars: usize,
        tokens: usize,
        hits: Vec<usize>,
    }
    let mut by_step: BTreeMap<u64, Acc> = BTreeMap::new();
    for r in responses {
        let acc = by_step.entry(r.step.unwrap_or(0)).or_default();
        acc.hits.resize(n_groups, 0);
        acc.n += 1;
        acc.chars += r.raw_text.chars().count();
        acc.tokens += r.raw_text.split_whitespace().count();
        for (h, c) in acc.hits.iter_mut().zip(matcher.count(&r.raw_text)) {
            *h += c;
        }
    }

    let steps: Vec<u64> = by_step.keys().copied().collect();
    let accs: Vec<&Acc> = by_step.values().collect();
    let mean = |f: &dyn Fn(&Acc) -> usize| -> Vec<f64> { accs.iter().map(|a| f(a) as f64 / a.n as f64).collect() };
    let mut keywords = BTreeMap::new();
    let mut keyword_totals = BTreeMap::new();
    for (g, name) in matcher.group_names().enumerate() {
        keywords.insert(name.to_owned(), Series::new(mean(&|a| a.hits[g]), alpha));
        keyword_totals.insert(name.to_owned(), accs.iter().map(|a| a.hits[g]).sum());
    }
    Ok(AnalysisReport {
        alpha,
        steps,
        responses: accs.iter().map(|a| a.n).collect(),
        mean_chars: Series::new(mean(&|a| a.chars), alpha),
        mean_tokens: Series::new(mean(&|a| a.tokens), alpha),
        keywords,
        keyword_totals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matcher() -> KeywordMatcher {
        KeywordMatcher::new(&KeywordSpec::default()).unwrap()
    }

    #[test]
    fn keyword_boundaries_and_case() {
        let m = matcher();
        assert_eq!(m.count("Let me RECHECK. recheck, rechecking, prerecheck"), vec![2, 0]);
        assert_eq!(m.count("I will Work Backwards; work  backwards; work\nbackwards"), vec![0, 1]);
        assert_eq!(m.count("reexmamine and reexamine"), vec![2, 0]);
        assert_eq!(m.count("two people waiting for trains"), vec![0, 0]);
    }

    #[test]
    fn one_recheck_per_response_gives_frequency_one() {
        let rs: Vec<ResponseRecord> = (0..10)
            .map(|i| ResponseRecord {
                step: Some(i / 5),
                ..ResponseRecord::new(format!("{i}"), "ok, let me recheck that")
            })
            .collect();
        let report = analyze(&rs, &KeywordSpec::default(), DEFAULT_ALPHA).unwrap();
        assert_eq!(report.steps, vec![0, 1]);
        assert_eq!(report.keywords["backtracking"].raw, vec![1.0, 1.0]);
        assert_eq!(report.keyword_totals["backtracking"], 10);
        assert_eq!(report.mean_tokens.raw, vec![5.0, 5.0]);
        assert_eq!(report.mean_chars.raw, vec![23.0, 23.0]);
    }

    #[test]
    fn smoothing() {
        let xs = [1.0, 0.0, 0.0, 4.0];
        assert_eq!(smooth(&xs, 1.0), xs.to_vec());
        let s = smooth(&xs, 0.5);
        assert_eq!(s, vec![1.0, 0.5, 0.25, 2.125]);
        assert!(smooth(&[], 0.1).is_empty());
    }

    #[test]
    fn missing_steps_are_step_zero_and_alpha_is_checked() {
        let rs = vec![ResponseRecord::new("a", "x"), ResponseRecord { step: Some(2), ..ResponseRecord::new("b", "y z") }];
        let r = analyze(&rs, &KeywordSpec::default(), 1.0).unwrap();
        assert_eq!(r.steps, vec![0, 2]);
        assert_eq!(r.mean_tokens.smoothed, vec![1.0, 2.0]);
        assert!(analyze(&rs, &KeywordSpec::default(), 0.0).is_err());
        assert!(analyze(&rs, &KeywordSpec::default(), 1.5).is_err());
    }
}
