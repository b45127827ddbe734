//! Deterministic task oracle over released content.

use serde::{Deserialize, Serialize};

use crate::benchgen::{GoldSpan, PromptInstance, SlotNeed};
use crate::extraction::normalize_surface;
use crate::sanitizer::surrogate::{parse_placeholder, AbstractionTemplates};
use crate::sanitizer::MediationResult;
use crate::text::slice_chars;
use crate::vault::find_tokens;

/// How a slot region reads after mediation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reading {
    Raw,
    Placeholder(String),
    Token(String),
    Abstraction(String),
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotResult {
    pub gold: usize,
    pub need: SlotNeed,
    pub tool_arg: bool,
    pub reading: Reading,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub slots: Vec<SlotResult>,
    pub success: bool,
    pub execution_reached: bool,
    /// Tool arguments as executed, after any restoration.
    pub tool_args: Vec<String>,
}

impl TaskOutcome {
    /// Whether the prompt's outcome is an execution state rather than a
    /// free-form answer.
    pub fn is_execution(&self) -> bool {
        self.execution_reached && !self.tool_args.is_empty()
    }
}

/// Char range in the sanitized text that covers original range `[gs, ge)`.
/// A boundary inside a replacement widens to the whole surrogate.
pub fn map_region(m: &MediationResult, gs: usize, ge: usize) -> (usize, usize) {
    let ranges = m.sanitized_ranges();
    let pairs = || m.replacements.iter().zip(ranges.iter().copied());
    let shifted = |p: usize| -> usize {
        let d: isize = pairs()
            .filter(|(r, _)| r.span.end <= p)
            .map(|(r, (ss, se))| (se - ss) as isize - (r.span.end - r.span.start) as isize)
            .sum();
        (p as isize + d) as usize
    };
    let start = pairs()
        .find(|(r, _)| r.span.start <= gs && gs < r.span.end)
        .map(|(_, (ss, _))| ss)
        .unwrap_or_else(|| shifted(gs));
    let end = pairs()
        .find(|(r, _)| r.span.start < ge && ge <= r.span.end)
        .map(|(_, (_, se))| se)
        .unwrap_or_else(|| shifted(ge));
    (start, end.max(start))
}

pub fn classify(text: &str, gold: &GoldSpan, templates: &AbstractionTemplates) -> Reading {
    if normalize_surface(text) == normalize_surface(&gold.surface) {
        return Reading::Raw;
    }
    let toks = find_tokens(text);
    if toks.len() == 1 && toks[0].0 == 0 && toks[0].1 == text.chars().count() {
        return Reading::Token(toks[0].2.clone());
    }
    if parse_placeholder(text).is_some() {
        return Reading::Placeholder(text.to_string());
    }
    if templates.recognizes(gold.category, text) {
        return Reading::Abstraction(text.to_string());
    }
    Reading::Other(text.to_string())
}

/// The sanitized text covering gold span `g`.
pub fn slot_text(m: &MediationResult, g: &GoldSpan) -> String {
    let (s, e) = map_region(m, g.start, g.end);
    slice_chars(&m.sanitized, s, e).map(str::to_string).unwrap_or_default()
}

/// Scores every slot. `resolve(i, released)` gives what the consuming stage
/// sees for slot `i` after any authorized restoration.
pub fn task_oracle(
    prompt: &PromptInstance,
    mediation: &MediationResult,
    templates: &AbstractionTemplates,
    mut resolve: impl FnMut(usize, &str) -> String,
) -> TaskOutcome {
    let mut results: Vec<SlotResult> = Vec::with_capacity(prompt.slots.len());
    let mut views: Vec<String> = Vec::with_capacity(prompt.slots.len());
    let mut tool_args = Vec::new();
    for (i, s) in prompt.slots.iter().enumerate() {
        let g = &prompt.gold[s.gold];
        let released = slot_text(mediation, g);
        let seen = resolve(i, &released);
        let reading = classify(&released, g, templates);
        let raw_after = normalize_surface(&seen) == normalize_surface(&g.surface);
        let satisfied = match s.need {
            SlotNeed::Exact => raw_after,
            SlotNeed::Role => match &reading {
                Reading::Raw | Reading::Token(_) => true,
                Reading::Placeholder(p) => parse_placeholder(p).is_some_and(|(c, _)| c == g.category),
                _ => raw_after,
            },
            SlotNeed::Meaning => matches!(reading, Reading::Raw | Reading::Abstraction(_)) || raw_after,
        };
        if s.tool_arg {
            tool_args.push(seen.clone());
        }
        views.push(released);
        results.push(SlotResult { gold: s.gold, need: s.need, tool_arg: s.tool_arg, reading, satisfied });
    }
    // Role slots that collapse distinct entities onto one surrogate lose the role.
    for i in 0..results.len() {
        for j in 0..results.len() {
            if i == j || results[i].need != SlotNeed::Role {
                continue;
            }
            let (gi, gj) = (&prompt.gold[results[i].gold], &prompt.gold[results[j].gold]);
            if views[i] == views[j] && normalize_surface(&gi.surface) != normalize_surface(&gj.surface) {
                results[i].satisfied = false;
            }
        }
    }
    let success = results.iter().all(|r| r.satisfied);
    TaskOutcome {
        slots: results,
        success,
        execution_reached: prompt.tool.is_some(),
        tool_args,
    }
}
