use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privmed_core::extraction::normalize_surface;
use privmed_core::policy::PolicyConfig;
use privmed_core::sanitizer::{TaskContext, REDACTED};
use privmed_core::vault::find_tokens;
use privmed_core::{
    extract_spans, AuditOutcome, Boundary, PrivacyCategory, ProfileName, RestorationPolicy, Sanitizer,
    SanitizationMode, Strategy, Vault,
};

const CONTRACT: &str = "Send the contract update to Sarah Chen at sarah.chen@vendor.example.";

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

#[test]
fn contract_prompt_is_routed_to_typed_placeholders() {
    let policy = PolicyConfig::shipped();
    let profile = policy.profile(ProfileName::Balanced);
    let spans = extract_spans(CONTRACT, profile.tau, &BTreeSet::new()).unwrap();
    let cats: Vec<PrivacyCategory> = spans.iter().map(|s| s.category).collect();
    assert_eq!(cats, vec![PrivacyCategory::Person, PrivacyCategory::Email]);

    let s = Sanitizer::new(&policy);
    let r = s
        .sanitize("p", CONTRACT, &spans, profile, Strategy::Routed, &TaskContext::default(), None, &mut rng())
        .unwrap();
    assert_eq!(r.sanitized, "Send the contract update to <PERSON_1> at <EMAIL_1>.");
    assert_eq!(r.reconstruct(), CONTRACT);

    // Surrogates match no recognizer, so a second pass changes nothing.
    let again = extract_spans(&r.sanitized, profile.tau, &BTreeSet::new()).unwrap();
    assert!(again.is_empty(), "{again:?}");
}

#[test]
fn uniform_redaction_replaces_every_span() {
    let policy = PolicyConfig::shipped();
    let profile = policy.profile(ProfileName::Balanced);
    let spans = extract_spans(CONTRACT, profile.tau, &BTreeSet::new()).unwrap();
    let r = Sanitizer::new(&policy)
        .sanitize("p", CONTRACT, &spans, profile, Strategy::UniformRedaction, &TaskContext::default(), None, &mut rng())
        .unwrap();
    assert_eq!(r.sanitized, format!("Send the contract update to {REDACTED} at {REDACTED}."));
}

#[test]
fn exact_tool_argument_round_trips_only_at_the_tool() {
    let policy = PolicyConfig::shipped();
    let profile = policy.profile(ProfileName::Balanced);
    let text = "Renew passport NZ3812745 for the traveller.";
    let spans = extract_spans(text, profile.tau, &BTreeSet::new()).unwrap();
    assert_eq!(spans.len(), 1, "{spans:?}");
    let task = TaskContext {
        tool_categories: [spans[0].category].into_iter().collect(),
        has_tool: true,
        restoration: Some(RestorationPolicy::Late),
        latency_sensitive: false,
    };
    let mut vault = Vault::new(11);
    let session = vault.open_session();
    let r = Sanitizer::new(&policy)
        .sanitize("p", text, &spans, profile, Strategy::Routed, &task, Some((&mut vault, session)), &mut rng())
        .unwrap();
    assert_eq!(r.replacements[0].mode, SanitizationMode::Symbolic);
    let toks = find_tokens(&r.sanitized);
    assert_eq!(toks.len(), 1);
    assert_eq!(toks[0].2.len(), 5);
    assert!(toks[0].2.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));

    for b in [Boundary::Retrieval, Boundary::Memory, Boundary::Planning, Boundary::Logging] {
        let ctx = vault.context(b, session, RestorationPolicy::Late);
        assert_eq!(vault.restore_entities(&r.sanitized, &ctx), r.sanitized, "{b:?}");
    }
    let ctx = vault.context(Boundary::ToolExec, session, RestorationPolicy::Late);
    assert_eq!(vault.restore_entities(&r.sanitized, &ctx), text);
    assert_eq!(vault.outcome_count(AuditOutcome::Denied), 4);
    assert_eq!(vault.outcome_count(AuditOutcome::Restored), 1);
    assert!(vault
        .audit()
        .iter()
        .filter(|e| e.outcome == AuditOutcome::Restored)
        .all(|e| e.boundary == Some(Boundary::ToolExec)));

    assert_eq!(vault.expire_session(session).unwrap(), 1);
    assert_eq!(vault.restore_entities(&r.sanitized, &ctx), r.sanitized);
}

#[test]
fn homoglyph_input_is_caught_after_normalization() {
    let policy = PolicyConfig::shipped();
    let profile = policy.profile(ProfileName::Balanced);
    let clean = "Call me at 021-555-0147 about the invoice.";
    let attacked = "Сall mе at 021-555-0147 about the invoice.";
    assert_eq!(normalize_surface(attacked), clean);
    let a = extract_spans(attacked, profile.tau, &BTreeSet::new()).unwrap();
    let c = extract_spans(clean, profile.tau, &BTreeSet::new()).unwrap();
    let offsets = |v: &[privmed_core::SpanAnnotation]| v.iter().map(|s| (s.start, s.end, s.category)).collect::<Vec<_>>();
    assert_eq!(offsets(&a), offsets(&c));
    assert!(a.iter().any(|s| s.category == PrivacyCategory::Phone));
}
