//! Surrogate construction: typed placeholders and category abstractions.

use std::collections::{BTreeMap, HashMap};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::Deserialize;

use crate::category::PrivacyCategory;
use crate::error::{Error, Result};
use crate::text::contains_bounded;

pub const SHIPPED_TEMPLATES: &str = include_str!("../../data/abstraction.toml");

static SHIPPED: Lazy<AbstractionTemplates> =
    Lazy::new(|| AbstractionTemplates::parse(SHIPPED_TEMPLATES).expect("shipped templates parse"));

static PLACEHOLDER_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^<([A-Z_]+)_(\d+)>$").unwrap());

pub fn typed_placeholder(category: PrivacyCategory, k: usize) -> String {
    format!("<{}_{}>", category.as_str(), k)
}

/// Parses `<CATEGORY_k>`.
pub fn parse_placeholder(s: &str) -> Option<(PrivacyCategory, usize)> {
    let c = PLACEHOLDER_RE.captures(s)?;
    Some((c[1].parse().ok()?, c[2].parse().ok()?))
}

#[derive(Debug, Clone, Deserialize)]
struct RawTemplate {
    template: String,
    fallback: Option<String>,
    attribute: Option<String>,
    #[serde(default)]
    values: Vec<String>,
    #[serde(default)]
    classes: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
enum Attribute {
    None,
    Locality(Vec<String>),
    Keyword(HashMap<String, String>),
}

#[derive(Debug, Clone)]
pub struct Template {
    template: String,
    fallback: String,
    attribute: Attribute,
    recognizer: Regex,
}

impl Template {
    fn fill(&self, surface: &str) -> String {
        let attr = match &self.attribute {
            Attribute::None => return self.template.clone(),
            Attribute::Locality(values) => {
                let tail = surface.rsplit(',').next().unwrap_or("").trim();
                values.iter().find(|v| v.as_str() == tail).cloned()
            }
            Attribute::Keyword(map) => surface
                .split(|c: char| c.is_whitespace() || c == ',')
                .find_map(|w| map.get(&w.to_lowercase()).cloned()),
        };
        match attr {
            Some(a) => self.template.replace("{attr}", &a),
            None => self.fallback.clone(),
        }
    }

    /// Every phrase this template can emit.
    fn phrases(&self) -> Vec<String> {
        let mut out: Vec<String> = match &self.attribute {
            Attribute::None => vec![self.template.clone()],
            Attribute::Locality(v) => v.iter().map(|a| self.template.replace("{attr}", a)).collect(),
            Attribute::Keyword(m) => {
                let mut classes: Vec<&String> = m.values().collect();
                classes.sort();
                classes.dedup();
                classes.into_iter().map(|a| self.template.replace("{attr}", a)).collect()
            }
        };
        if !out.contains(&self.fallback) {
            out.push(self.fallback.clone());
        }
        out
    }
}

/// Shipped per-category abstraction templates.
#[derive(Debug, Clone)]
pub struct AbstractionTemplates {
    by_category: BTreeMap<PrivacyCategory, Template>,
}

impl AbstractionTemplates {
    pub fn parse(src: &str) -> Result<Self> {
        let raw: BTreeMap<String, RawTemplate> = toml::from_str(src)?;
        let mut by_category = BTreeMap::new();
        for (name, t) in raw {
            let category: PrivacyCategory = name.parse()?;
            let attribute = match t.attribute.as_deref() {
                None => Attribute::None,
                Some("locality") => Attribute::Locality(t.values),
                Some("keyword") => {
                    let mut m = HashMap::new();
                    for (class, words) in t.classes {
                        for w in words {
                            m.insert(w.to_lowercase(), class.clone());
                        }
                    }
                    Attribute::Keyword(m)
                }
                Some(other) => return Err(Error::Config(format!("unknown attribute `{other}`"))),
            };
            if !matches!(attribute, Attribute::None) && !t.template.contains("{attr}") {
                return Err(Error::Config(format!("{name} template lacks {{attr}}")));
            }
            let fallback = t.fallback.unwrap_or_else(|| t.template.clone());
            let pattern = format!(
                "^(?:{}|{})$",
                regex::escape(&t.template).replace(r"\{attr\}", ".+?"),
                regex::escape(&fallback)
            );
            let recognizer = Regex::new(&pattern).map_err(|e| Error::Config(e.to_string()))?;
            by_category.insert(category, Template { template: t.template, fallback, attribute, recognizer });
        }
        Ok(AbstractionTemplates { by_category })
    }

    pub fn shipped() -> &'static AbstractionTemplates {
        &SHIPPED
    }

    pub fn has_template(&self, c: PrivacyCategory) -> bool {
        self.by_category.contains_key(&c)
    }

    pub fn abstract_surface(&self, c: PrivacyCategory, surface: &str) -> Option<String> {
        self.by_category.get(&c).map(|t| t.fill(surface))
    }

    /// True when `text` is an abstraction this category could produce.
    pub fn recognizes(&self, c: PrivacyCategory, text: &str) -> bool {
        self.by_category.get(&c).is_some_and(|t| t.recognizer.is_match(text))
    }

    pub fn phrases(&self, c: PrivacyCategory) -> Vec<String> {
        self.by_category.get(&c).map(|t| t.phrases()).unwrap_or_default()
    }
}

/// Tokens of `surface` that would reveal it on their own: the street part
/// of an address, lexicon head terms of contextual spans, and every word of
/// a name.
pub fn salient_heads(c: PrivacyCategory, surface: &str) -> Vec<String> {
    let lex = crate::extraction::context::ContextLexicon::shipped();
    let words = || {
        surface
            .split(|ch: char| ch.is_whitespace() || ch == ',')
            .filter(|w| !w.is_empty())
            .map(str::to_string)
    };
    match c {
        PrivacyCategory::Address => {
            let street = surface.split(',').next().unwrap_or(surface);
            street
                .split_whitespace()
                .filter(|w| !w.chars().any(|ch| ch.is_ascii_digit()))
                .map(str::to_string)
                .collect()
        }
        PrivacyCategory::Medical | PrivacyCategory::ContextSensitive => {
            words().filter(|w| lex.head_category(w).is_some()).collect()
        }
        PrivacyCategory::Person | PrivacyCategory::OrgTerm => words().collect(),
        _ => vec![surface.to_string()],
    }
}

/// Direct-exposure check for an abstraction of `surface`.
pub fn reveals(abstraction: &str, c: PrivacyCategory, surface: &str) -> bool {
    let lower = abstraction.to_lowercase();
    contains_bounded(abstraction, surface)
        || salient_heads(c, surface)
            .iter()
            .any(|h| contains_bounded(&lower, &h.to_lowercase()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use PrivacyCategory::*;

    #[test]
    fn placeholder_format_round_trips() {
        assert_eq!(typed_placeholder(Person, 1), "<PERSON_1>");
        assert_eq!(parse_placeholder("<NATIONAL_ID_12>"), Some((NationalId, 12)));
        assert_eq!(parse_placeholder("<PERSON_>"), None);
        assert_eq!(parse_placeholder("[REDACTED]"), None);
    }

    #[test]
    fn worked_abstractions() {
        let t = AbstractionTemplates::shipped();
        assert_eq!(
            t.abstract_surface(Medical, "stage III pancreatic cancer").unwrap(),
            "a serious oncological condition"
        );
        assert_eq!(
            t.abstract_surface(Address, "17 Anzac Avenue, Auckland").unwrap(),
            "an address in central Auckland"
        );
        assert_eq!(t.abstract_surface(Address, "17 Anzac Avenue").unwrap(), "an address in the region");
        assert_eq!(t.abstract_surface(ContextSensitive, "custody proceedings").unwrap(), "confidential family matter");
        assert_eq!(t.abstract_surface(Email, "a@b.io"), None);
    }

    #[test]
    fn recognizer_matches_only_template_output() {
        let t = AbstractionTemplates::shipped();
        assert!(t.recognizes(Medical, "a serious renal condition"));
        assert!(t.recognizes(Medical, "a serious medical condition"));
        assert!(!t.recognizes(Medical, "stage III pancreatic cancer"));
        assert!(!t.recognizes(Address, "a serious renal condition"));
    }

    #[test]
    fn abstractions_never_reveal_surface_or_head() {
        let t = AbstractionTemplates::shipped();
        let cases = [
            (Medical, "stage III pancreatic cancer"),
            (Medical, "chronic kidney disease"),
            (Medical, "HIV"),
            (Address, "17 Anzac Avenue, Auckland"),
            (Address, "4 Cuba Street, Wellington"),
            (ContextSensitive, "a disciplinary investigation"),
            (ContextSensitive, "visa appeal"),
            (Person, "Sarah Chen"),
            (OrgTerm, "Project Bluefin"),
            (DateOfBirth, "14/03/1986"),
            (FinancialRef, "INV-2041-77"),
        ];
        for (c, s) in cases {
            let a = t.abstract_surface(c, s).unwrap();
            assert!(!reveals(&a, c, s), "{c}: {s} -> {a}");
        }
    }

    #[test]
    fn phrase_sets_include_fallback() {
        let t = AbstractionTemplates::shipped();
        let m = t.phrases(Medical);
        assert_eq!(m.len(), 10);
        assert!(m.contains(&"a serious medical condition".to_string()));
        assert_eq!(t.phrases(Person), vec!["a named individual".to_string()]);
        assert!(t.phrases(Email).is_empty());
    }

    #[test]
    fn rejects_unknown_attribute_kind() {
        let src = "[PERSON]\ntemplate = \"x {attr}\"\nattribute = \"colour\"\n";
        assert!(AbstractionTemplates::parse(src).is_err());
    }
}
