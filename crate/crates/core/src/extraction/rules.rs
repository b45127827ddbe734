//! Pattern recognizers for structured identifiers.

use once_cell::sync::Lazy;
use regex::Regex;

use super::{Candidate, SpanSource};
use crate::category::PrivacyCategory;
use crate::text::CharIndex;

struct Rule {
    category: PrivacyCategory,
    re: Regex,
}

static RULES: Lazy<Vec<Rule>> = Lazy::new(|| {
    let r = |category, pat: &str| Rule {
        category,
        re: Regex::new(pat).expect("rule pattern"),
    };
    vec![
        r(
            PrivacyCategory::Email,
            r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+\b",
        ),
        r(
            PrivacyCategory::Phone,
            r"(?:\+64[ -]?|\b0)\d{1,2}[ -]\d{3}[ -]\d{3,4}\b",
        ),
        r(PrivacyCategory::NationalId, r"\b[A-Z]{2}\d{7}\b"),
        r(PrivacyCategory::NationalId, r"\b[1-9]\d{2}-\d{3}-\d{3}\b"),
        r(PrivacyCategory::Account, r"\b\d{4}-\d{4}-\d{4}-\d{4}\b"),
        r(PrivacyCategory::Account, r"\b\d{2}-\d{4}-\d{7}-\d{2,3}\b"),
        r(PrivacyCategory::FinancialRef, r"\b(?:INV|PO|CLM)-\d{4}-\d{2,3}\b"),
        r(PrivacyCategory::DateOfBirth, r"\b\d{2}/\d{2}/\d{4}\b"),
    ]
});

/// Runs every pattern over `text` and returns char-offset candidates.
pub fn run_rules(text: &str, confidence: f64) -> Vec<Candidate> {
    let idx = CharIndex::new(text);
    let mut out = Vec::new();
    for rule in RULES.iter() {
        for m in rule.re.find_iter(text) {
            out.push(Candidate {
                start: idx.char_of(m.start()),
                end: idx.char_of(m.end()),
                category: rule.category,
                confidence,
                source: SpanSource::Rule,
            });
        }
    }
    out
}
