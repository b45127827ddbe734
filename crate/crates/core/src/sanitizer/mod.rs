//! Applies routed replacement modes to detected spans.

pub mod ldp;
pub mod surrogate;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::category::PrivacyCategory;
use crate::error::{Error, Result};
use crate::extraction::{normalize_surface, SpanAnnotation};
use crate::policy::{PolicyConfig, PolicyProfile, Router, RoutingState, SanitizationMode};
use crate::vault::{token_text, RestorationPolicy, SessionId, Vault};

pub use ldp::{composed_epsilon, ldp_epsilon, randomized_replace};
pub use surrogate::{typed_placeholder, AbstractionTemplates};

pub const REDACTED: &str = "[REDACTED]";

/// How modes are chosen for each span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Router argmin per span.
    Routed,
    /// Typed placeholder for every span.
    PlaceholderOnly,
    /// Abstraction wherever a template exists, router elsewhere.
    AbstractPreferred,
    /// One uniform redaction token for every span.
    UniformRedaction,
}

/// Task metadata that feeds routing state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskContext {
    pub tool_categories: BTreeSet<PrivacyCategory>,
    pub has_tool: bool,
    pub restoration: Option<RestorationPolicy>,
    pub latency_sensitive: bool,
}

impl TaskContext {
    fn restoration_authorized(&self) -> bool {
        self.has_tool && !matches!(self.restoration, None | Some(RestorationPolicy::None))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub span: SpanAnnotation,
    pub mode: SanitizationMode,
    pub surrogate: String,
    pub vault_token: Option<String>,
    pub ldp_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationResult {
    pub prompt_id: String,
    pub original_len: usize,
    pub sanitized: String,
    pub replacements: Vec<Replacement>,
    pub epsilon_total: f64,
}

impl MediationResult {
    /// Unmediated pass-through.
    pub fn identity(prompt_id: &str, text: &str) -> Self {
        MediationResult {
            prompt_id: prompt_id.to_string(),
            original_len: text.chars().count(),
            sanitized: text.to_string(),
            replacements: Vec::new(),
            epsilon_total: 0.0,
        }
    }

    /// Sanitized-text char range of each replacement, in ledger order.
    pub fn sanitized_ranges(&self) -> Vec<(usize, usize)> {
        let mut shift: isize = 0;
        self.replacements
            .iter()
            .map(|r| {
                let start = (r.span.start as isize + shift) as usize;
                let len = r.surrogate.chars().count();
                shift += len as isize - (r.span.end - r.span.start) as isize;
                (start, start + len)
            })
            .collect()
    }

    /// Rebuilds the original text from the sanitized text and the ledger.
    pub fn reconstruct(&self) -> String {
        let edits: Vec<(usize, usize, String)> = self
            .sanitized_ranges()
            .into_iter()
            .zip(&self.replacements)
            .map(|((s, e), r)| (s, e, r.span.surface.clone()))
            .collect();
        crate::text::apply_edits(&self.sanitized, &edits).expect("ledger ranges are disjoint")
    }
}

/// Optional randomized-response layer over surrogate sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpConfig {
    pub keep_probability: f64,
    pub placeholder_set_size: usize,
}

impl Default for LdpConfig {
    fn default() -> Self {
        LdpConfig { keep_probability: 0.9, placeholder_set_size: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct Sanitizer {
    router: Router,
    tiers: BTreeMap<PrivacyCategory, crate::category::RiskTier>,
    templates: &'static AbstractionTemplates,
    ldp: Option<LdpConfig>,
}

fn validate_spans(text_len: usize, spans: &[SpanAnnotation]) -> Result<()> {
    let mut prev_end = 0;
    for (i, s) in spans.iter().enumerate() {
        if s.end > text_len {
            return Err(Error::OutOfBounds { start: s.start, end: s.end, len: text_len });
        }
        if s.start >= s.end {
            return Err(Error::EmptySpan(s.start, s.end));
        }
        if i > 0 && s.start < prev_end {
            return Err(Error::OverlappingSpans(s.start, s.end));
        }
        prev_end = s.end;
    }
    Ok(())
}

impl Sanitizer {
    pub fn new(policy: &PolicyConfig) -> Self {
        Sanitizer {
            router: policy.router(),
            tiers: policy.risk_tiers.clone(),
            templates: AbstractionTemplates::shipped(),
            ldp: None,
        }
    }

    pub fn with_ldp(mut self, ldp: Option<LdpConfig>) -> Self {
        self.ldp = ldp;
        self
    }

    pub fn templates(&self) -> &AbstractionTemplates {
        self.templates
    }

    pub fn routing_state(&self, span: &SpanAnnotation, task: &TaskContext) -> RoutingState {
        let tier = self.tiers.get(&span.category).copied().unwrap_or_else(|| span.category.default_tier());
        RoutingState {
            exact_value_required: task.tool_categories.contains(&span.category),
            restoration_authorized: task.restoration_authorized(),
            latency_sensitive: task.latency_sensitive,
            ..RoutingState::new(span.category, span.confidence, tier)
        }
    }

    fn choose_mode(&self, span: &SpanAnnotation, profile: &PolicyProfile, strategy: Strategy, task: &TaskContext) -> SanitizationMode {
        let routed = || {
            let m = self.router.select_mode(&self.routing_state(span, task), profile);
            if m == SanitizationMode::Abstract && !self.templates.has_template(span.category) {
                SanitizationMode::Placeholder
            } else {
                m
            }
        };
        match strategy {
            Strategy::Routed => routed(),
            Strategy::PlaceholderOnly | Strategy::UniformRedaction => SanitizationMode::Placeholder,
            Strategy::AbstractPreferred => {
                if self.templates.has_template(span.category) {
                    SanitizationMode::Abstract
                } else {
                    routed()
                }
            }
        }
    }

    fn randomize<R: Rng + ?Sized>(
        &self,
        mode: SanitizationMode,
        category: PrivacyCategory,
        intended: String,
        rng: &mut R,
    ) -> Result<(String, Option<f64>)> {
        let Some(cfg) = &self.ldp else {
            return Ok((intended, None));
        };
        let set: Vec<String> = match mode {
            SanitizationMode::Placeholder => {
                (1..=cfg.placeholder_set_size).map(|k| typed_placeholder(category, k)).collect()
            }
            SanitizationMode::Abstract => self.templates.phrases(category),
            SanitizationMode::Symbolic => return Ok((intended, None)),
        };
        if set.len() < 2 || !set.contains(&intended) {
            return Ok((intended, None));
        }
        let eps = ldp_epsilon(cfg.keep_probability, set.len())?;
        Ok((randomized_replace(&intended, &set, cfg.keep_probability, rng)?, Some(eps)))
    }

    /// Replaces every span in `text`. Spans must be sorted and disjoint.
    /// Symbolic replacement needs a vault session.
    #[allow(clippy::too_many_arguments)]
    pub fn sanitize<R: Rng + ?Sized>(
        &self,
        prompt_id: &str,
        text: &str,
        spans: &[SpanAnnotation],
        profile: &PolicyProfile,
        strategy: Strategy,
        task: &TaskContext,
        mut vault: Option<(&mut Vault, SessionId)>,
        rng: &mut R,
    ) -> Result<MediationResult> {
        let text_len = text.chars().count();
        validate_spans(text_len, spans)?;
        let mut counters: BTreeMap<PrivacyCategory, BTreeMap<String, usize>> = BTreeMap::new();
        let mut replacements = Vec::with_capacity(spans.len());
        for span in spans {
            let mode = self.choose_mode(span, profile, strategy, task);
            let (surrogate, vault_token) = match (strategy, mode) {
                (Strategy::UniformRedaction, _) => (REDACTED.to_string(), None),
                (_, SanitizationMode::Placeholder) => {
                    let seen = counters.entry(span.category).or_default();
                    let next = seen.len() + 1;
                    let k = *seen.entry(normalize_surface(&span.surface)).or_insert(next);
                    (typed_placeholder(span.category, k), None)
                }
                (_, SanitizationMode::Abstract) => {
                    let a = self
                        .templates
                        .abstract_surface(span.category, &span.surface)
                        .ok_or_else(|| Error::Invariant(format!("no template for {}", span.category)))?;
                    (a, None)
                }
                (_, SanitizationMode::Symbolic) => {
                    let (v, session) = vault.as_mut().ok_or(Error::VaultUnavailable)?;
                    let id = v.store(&span.surface, span.category, *session)?;
                    (token_text(&id), Some(id))
                }
            };
            let (surrogate, eps) = if strategy == Strategy::UniformRedaction {
                (surrogate, None)
            } else {
                self.randomize(mode, span.category, surrogate, rng)?
            };
            replacements.push(Replacement { span: span.clone(), mode, surrogate, vault_token, ldp_epsilon: eps });
        }
        let edits: Vec<(usize, usize, String)> =
            replacements.iter().map(|r| (r.span.start, r.span.end, r.surrogate.clone())).collect();
        let sanitized = crate::text::apply_edits(text, &edits)?;
        let eps: Vec<f64> = replacements.iter().filter_map(|r| r.ldp_epsilon).collect();
        Ok(MediationResult {
            prompt_id: prompt_id.to_string(),
            original_len: text_len,
            sanitized,
            replacements,
            epsilon_total: composed_epsilon(&eps),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{Detector, DetectorConfig};
    use crate::policy::ProfileName;
    use crate::vault::Boundary;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assert_ne, prop_oneof, proptest, Just};
    use super::Strategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (PolicyConfig, Sanitizer, Detector) {
        let cfg = PolicyConfig::shipped();
        let s = Sanitizer::new(&cfg);
        let d = Detector::new(DetectorConfig::default()).unwrap();
        (cfg, s, d)
    }

    fn run(text: &str, task: &TaskContext, strategy: Strategy, vault: Option<(&mut Vault, SessionId)>) -> MediationResult {
        let (cfg, s, d) = setup();
        let spans = d.extract("p", text, false).unwrap().spans;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        s.sanitize("p", text, &spans, cfg.profile(ProfileName::Balanced), strategy, task, vault, &mut rng)
            .unwrap()
    }

    #[test]
    fn worked_placeholder_example() {
        let r = run(
            "Send the contract update to Sarah Chen at sarah.chen@vendor.example.",
            &TaskContext::default(),
            Strategy::Routed,
            None,
        );
        assert_eq!(r.sanitized, "Send the contract update to <PERSON_1> at <EMAIL_1>.");
    }

    #[test]
    fn worked_abstraction_examples() {
        let r = run(
            "Summarise care for a patient with stage III pancreatic cancer at 17 Anzac Avenue, Auckland.",
            &TaskContext::default(),
            Strategy::Routed,
            None,
        );
        assert_eq!(
            r.sanitized,
            "Summarise care for a patient with a serious oncological condition at an address in central Auckland."
        );
        assert!(r.replacements.iter().all(|x| x.mode == SanitizationMode::Abstract));
    }

    #[test]
    fn tool_exact_value_becomes_token() {
        let mut v = Vault::new(17);
        let sid = v.open_session();
        let task = TaskContext {
            tool_categories: [PrivacyCategory::NationalId].into_iter().collect(),
            has_tool: true,
            restoration: Some(RestorationPolicy::Late),
            latency_sensitive: false,
        };
        let r = run("Verify passport NZ3812745 for travel.", &task, Strategy::Routed, Some((&mut v, sid)));
        let rep = &r.replacements[0];
        assert_eq!(rep.mode, SanitizationMode::Symbolic);
        let id = rep.vault_token.clone().unwrap();
        assert_eq!(rep.surrogate, format!("[TOKEN_{id}]"));
        assert!(regex::Regex::new(r"^Verify passport \[TOKEN_[0-9a-f]{5}\] for travel\.$").unwrap().is_match(&r.sanitized));
        let ctx = v.context(Boundary::ToolExec, sid, RestorationPolicy::Late);
        assert_eq!(v.restore_entities(&r.sanitized, &ctx), "Verify passport NZ3812745 for travel.");
    }

    #[test]
    fn symbolic_without_vault_fails() {
        let (cfg, s, d) = setup();
        let task = TaskContext {
            tool_categories: [PrivacyCategory::NationalId].into_iter().collect(),
            has_tool: true,
            restoration: Some(RestorationPolicy::Late),
            latency_sensitive: false,
        };
        let text = "Verify NZ3812745.";
        let spans = d.extract("p", text, false).unwrap().spans;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = s.sanitize("p", text, &spans, cfg.profile(ProfileName::Balanced), Strategy::Routed, &task, None, &mut rng);
        assert!(matches!(err, Err(Error::VaultUnavailable)));
    }

    #[test]
    fn zero_spans_is_identity() {
        let r = run("Nothing sensitive here.", &TaskContext::default(), Strategy::Routed, None);
        assert_eq!(r.sanitized, "Nothing sensitive here.");
        assert!(r.replacements.is_empty());
    }

    #[test]
    fn repeated_and_distinct_people_get_consistent_indices() {
        let r = run(
            "Sarah Chen met Aroha Ngata; later Sarah Chen called.",
            &TaskContext::default(),
            Strategy::Routed,
            None,
        );
        assert_eq!(r.sanitized, "<PERSON_1> met <PERSON_2>; later <PERSON_1> called.");
    }

    #[test]
    fn uniform_redaction_and_placeholder_only() {
        let t = "Patient with severe asthma, contact 021-555-0147.";
        let r = run(t, &TaskContext::default(), Strategy::UniformRedaction, None);
        assert_eq!(r.sanitized, "Patient with [REDACTED], contact [REDACTED].");
        let r = run(t, &TaskContext::default(), Strategy::PlaceholderOnly, None);
        assert_eq!(r.sanitized, "Patient with <MEDICAL_1>, contact <PHONE_1>.");
    }

    #[test]
    fn abstract_preferred_uses_templates_where_present() {
        let r = run(
            "Ask Sarah Chen about INV-2041-77 and 021-555-0147.",
            &TaskContext::default(),
            Strategy::AbstractPreferred,
            None,
        );
        assert_eq!(r.sanitized, "Ask a named individual about a financial reference and <PHONE_1>.");
    }

    #[test]
    fn invalid_spans_rejected() {
        let (cfg, s, _) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = cfg.profile(ProfileName::Balanced);
        let sp = |start, end| SpanAnnotation {
            start,
            end,
            category: PrivacyCategory::Person,
            confidence: 1.0,
            source: crate::extraction::SpanSource::Rule,
            surface: String::new(),
        };
        let t = TaskContext::default();
        assert!(matches!(
            s.sanitize("p", "abc", &[sp(0, 9)], p, Strategy::Routed, &t, None, &mut rng),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            s.sanitize("p", "abcdef", &[sp(0, 3), sp(2, 4)], p, Strategy::Routed, &t, None, &mut rng),
            Err(Error::OverlappingSpans(..))
        ));
        assert!(matches!(
            s.sanitize("p", "abc", &[sp(1, 1)], p, Strategy::Routed, &t, None, &mut rng),
            Err(Error::EmptySpan(..))
        ));
    }

    #[test]
    fn ldp_layer_records_epsilon_and_keeps_set_membership() {
        let cfg = PolicyConfig::shipped();
        let s = Sanitizer::new(&cfg).with_ldp(Some(LdpConfig::default()));
        let d = Detector::new(DetectorConfig::default()).unwrap();
        let text = "Mail sarah.chen@vendor.example about a patient with chronic kidney disease.";
        let spans = d.extract("p", text, false).unwrap().spans;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = s
            .sanitize("p", text, &spans, cfg.profile(ProfileName::Balanced), Strategy::Routed, &TaskContext::default(), None, &mut rng)
            .unwrap();
        let e = ldp_epsilon(0.9, 10).unwrap();
        assert_eq!(r.replacements.len(), 2);
        assert!(r.replacements.iter().all(|x| x.ldp_epsilon == Some(e)));
        assert!((r.epsilon_total - 2.0 * e).abs() < 1e-12);
        assert!(surrogate::parse_placeholder(&r.replacements[0].surrogate).is_some());
        assert!(s.templates().recognizes(PrivacyCategory::Medical, &r.replacements[1].surrogate));
    }

    proptest! {
        #[test]
        fn reconstruction_and_idempotence(parts in proptest::collection::vec(prop_oneof![
            Just("Sarah Chen"), Just("Aroha"), Just("sarah.chen@vendor.example"), Just("021-555-0147"),
            Just("patient with stage III pancreatic cancer"), Just("17 Anzac Avenue, Auckland"),
            Just("about my divorce"), Just("INV-2041-77"), Just("NZ3812745"), Just("Project Bluefin"),
            Just("please"), Just("review"), Just("the"), Just("notes."),
        ], 0..12), tool in any::<bool>()) {
            let text = parts.join(" ");
            let (cfg, s, d) = setup();
            let task = TaskContext {
                tool_categories: if tool { PrivacyCategory::ALL.into_iter().collect() } else { BTreeSet::new() },
                has_tool: tool,
                restoration: Some(RestorationPolicy::Late),
                latency_sensitive: false,
            };
            let p = cfg.profile(ProfileName::Balanced);
            let mut v = Vault::new(5);
            let sid = v.open_session();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let spans = d.extract("p", &text, false).unwrap().spans;
            let r = s.sanitize("p", &text, &spans, p, Strategy::Routed, &task, Some((&mut v, sid)), &mut rng).unwrap();
            prop_assert_eq!(r.reconstruct(), text.clone());
            let ranges = r.sanitized_ranges();
            let mut next: BTreeMap<PrivacyCategory, usize> = BTreeMap::new();
            for (rep, (a, b)) in r.replacements.iter().zip(ranges) {
                prop_assert!(!rep.surrogate.is_empty());
                prop_assert_eq!(rep.vault_token.is_some(), rep.mode == SanitizationMode::Symbolic);
                let placed = crate::text::slice_chars(&r.sanitized, a, b).unwrap();
                prop_assert_ne!(normalize_surface(placed), normalize_surface(&rep.span.surface));
                // Placeholder indices follow first appearance per category.
                if let Some((c, k)) = surrogate::parse_placeholder(&rep.surrogate) {
                    let seen = next.entry(c).or_insert(0);
                    prop_assert!(k <= *seen + 1);
                    *seen = (*seen).max(k);
                }
            }
            let again = d.extract("p", &r.sanitized, false).unwrap().spans;
            prop_assert!(again.is_empty(), "{:?} -> {:?}", r.sanitized, again);
        }
    }
}
