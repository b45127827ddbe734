//! Sensitive-span extraction: normalization, pattern rules, lexicon NER, a
//! contextual judge and an OCR-aware pass, merged by threshold and overlap
//! resolution.

pub mod context;
pub mod gazetteer;
pub mod normalize;
pub mod rules;
pub mod visual;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::category::PrivacyCategory;
use crate::error::{Error, Result};
use crate::text::CharIndex;

pub use context::ContextJudge;
pub use gazetteer::Gazetteer;
pub use normalize::{normalize, normalize_surface, Normalized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpanSource {
    Rule,
    Ner,
    Context,
    Visual,
}

/// Detector output before thresholding, in the coordinates of the text it
/// was run on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub start: usize,
    pub end: usize,
    pub category: PrivacyCategory,
    pub confidence: f64,
    pub source: SpanSource,
}

impl Candidate {
    fn len(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
    pub category: PrivacyCategory,
    pub confidence: f64,
    pub source: SpanSource,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub prompt_id: String,
    pub spans: Vec<SpanAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfidences {
    pub rule: f64,
    pub ner: f64,
    pub ner_partial: f64,
    pub context: f64,
    pub visual: f64,
}

impl Default for SourceConfidences {
    fn default() -> Self {
        SourceConfidences { rule: 1.0, ner: 0.85, ner_partial: 0.45, context: 0.50, visual: 0.80 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub tau: f64,
    pub high_risk: BTreeSet<PrivacyCategory>,
    pub confidences: SourceConfidences,
    pub normalize: bool,
    pub rules: bool,
    pub ner: bool,
    pub ner_partial: bool,
    pub context: bool,
    pub context_window: usize,
    pub context_second_pass: bool,
    pub visual: bool,
    /// Runs the visual repair pass on text input too.
    pub visual_always: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        use PrivacyCategory::*;
        DetectorConfig {
            tau: 0.55,
            high_risk: [NationalId, Account, Medical, ContextSensitive].into_iter().collect(),
            confidences: SourceConfidences::default(),
            normalize: true,
            rules: true,
            ner: true,
            ner_partial: true,
            context: true,
            context_window: 6,
            context_second_pass: false,
            visual: true,
            visual_always: false,
        }
    }
}

/// Configured span extractor. Stateless across calls.
#[derive(Debug, Clone)]
pub struct Detector {
    pub config: DetectorConfig,
    gazetteer: &'static Gazetteer,
    judge: ContextJudge,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.tau) || config.tau.is_nan() {
            return Err(Error::InvalidThreshold(config.tau));
        }
        let judge = ContextJudge::new(config.context_window, config.context_second_pass);
        Ok(Detector { config, gazetteer: Gazetteer::shipped(), judge })
    }

    fn raw_candidates(&self, text: &str) -> Vec<Candidate> {
        let c = &self.config;
        let mut out = Vec::new();
        if c.rules {
            out.extend(rules::run_rules(text, c.confidences.rule));
        }
        if c.ner {
            let partial = c.ner_partial.then_some(c.confidences.ner_partial);
            out.extend(self.gazetteer.find(text, c.confidences.ner, partial));
        }
        if c.context {
            out.extend(self.judge.find(text, c.confidences.context));
        }
        out
    }

    fn visual_candidates(&self, text: &str, base: &[Candidate]) -> Vec<Candidate> {
        let c = &self.config;
        let fixed = visual::deconfuse(text, self.gazetteer);
        let mut found = Vec::new();
        if c.rules {
            found.extend(rules::run_rules(&fixed.text, c.confidences.visual));
        }
        if c.ner {
            found.extend(self.gazetteer.find(&fixed.text, c.confidences.visual, None));
        }
        let mut out: Vec<Candidate> = Vec::new();
        for f in found {
            let (start, end) = fixed.to_original(f.start, f.end);
            if base.iter().any(|b| b.start == start && b.end == end && b.category == f.category) {
                continue;
            }
            out.push(Candidate { start, end, source: SpanSource::Visual, ..f });
        }
        for (s, e) in visual::id_like_tokens(&fixed.text) {
            let (start, end) = fixed.to_original(s, e);
            let overlaps = |x: &Candidate| x.start < end && start < x.end;
            if !base.iter().any(overlaps) && !out.iter().any(overlaps) {
                out.push(Candidate {
                    start,
                    end,
                    category: PrivacyCategory::VisualText,
                    confidence: c.confidences.visual,
                    source: SpanSource::Visual,
                });
            }
        }
        out
    }

    /// Detects spans in `text`. `visual_input` marks image-derived text.
    pub fn extract(&self, prompt_id: &str, text: &str, visual_input: bool) -> Result<Annotation> {
        let norm = if self.config.normalize {
            normalize(text)
        } else {
            let n = text.chars().count();
            Normalized { text: text.to_string(), map: (0..=n).collect() }
        };
        let mut cands = self.raw_candidates(&norm.text);
        if self.config.visual && (visual_input || self.config.visual_always) {
            let extra = self.visual_candidates(&norm.text, &cands);
            cands.extend(extra);
        }
        let tau = self.config.tau;
        cands.retain(|c| c.confidence >= tau || self.config.high_risk.contains(&c.category));
        let kept = resolve_overlaps(cands);
        let idx = CharIndex::new(text);
        let spans = kept
            .into_iter()
            .map(|c| {
                let (start, end) = norm.to_original(c.start, c.end);
                SpanAnnotation {
                    start,
                    end,
                    category: c.category,
                    confidence: c.confidence,
                    source: c.source,
                    surface: idx.slice(text, start, end).to_string(),
                }
            })
            .collect();
        Ok(Annotation { prompt_id: prompt_id.to_string(), spans })
    }
}

/// Longest span wins; ties go to higher confidence, then the leftmost start,
/// then category order. Output is sorted by start.
pub fn resolve_overlaps(mut cands: Vec<Candidate>) -> Vec<Candidate> {
    cands.retain(|c| c.end > c.start);
    cands.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then(b.confidence.total_cmp(&a.confidence))
            .then(a.start.cmp(&b.start))
            .then(a.category.cmp(&b.category))
            .then(a.source.cmp(&b.source))
    });
    let mut kept: Vec<Candidate> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| k.end <= c.start || c.end <= k.start) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| c.start);
    kept
}

/// Extracts with the default detector at threshold `tau` and the given
/// high-risk override set.
pub fn extract_spans(
    text: &str,
    tau: f64,
    high_risk: &BTreeSet<PrivacyCategory>,
) -> Result<Vec<SpanAnnotation>> {
    let det = Detector::new(DetectorConfig { tau, high_risk: high_risk.clone(), ..Default::default() })?;
    Ok(det.extract("", text, false)?.spans)
}
