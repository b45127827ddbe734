//! Lexicon lookup for names, organizations and street addresses.

use std::collections::{HashMap, HashSet};

use once_cell::sync::Lazy;
use regex::Regex;

use super::{Candidate, SpanSource};
use crate::category::PrivacyCategory;
use crate::error::{Error, Result};
use crate::text::CharIndex;

pub const SHIPPED_LEXICONS: [(&str, &str); 3] = [
    ("person.txt", include_str!("../../data/lexicons/person.txt")),
    ("org_term.txt", include_str!("../../data/lexicons/org_term.txt")),
    ("address.txt", include_str!("../../data/lexicons/address.txt")),
];

static SHIPPED: Lazy<Gazetteer> = Lazy::new(|| {
    Gazetteer::from_lexicons(&SHIPPED_LEXICONS).expect("shipped lexicons parse")
});

static HOUSE_NUMBER: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b\d{1,4}[A-Za-z]? $").unwrap());
static LOCALITY: Lazy<Regex> = Lazy::new(|| Regex::new(r"^, [A-Z][a-z]+\b").unwrap());

#[derive(Debug, Clone)]
pub struct Gazetteer {
    full: HashMap<String, PrivacyCategory>,
    weak: HashMap<String, PrivacyCategory>,
    vocab: HashSet<String>,
    full_re: Option<Regex>,
    weak_re: Option<Regex>,
}

fn alternation(words: &HashMap<String, PrivacyCategory>) -> Option<Regex> {
    if words.is_empty() {
        return None;
    }
    let mut keys: Vec<&String> = words.keys().collect();
    keys.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let body: Vec<String> = keys.iter().map(|k| regex::escape(k)).collect();
    Some(Regex::new(&format!(r"\b(?:{})\b", body.join("|"))).expect("lexicon regex"))
}

impl Gazetteer {
    pub fn shipped() -> &'static Gazetteer {
        &SHIPPED
    }

    /// Builds a gazetteer from `(file name, contents)` pairs. The category is
    /// the file stem, upper-cased.
    pub fn from_lexicons(files: &[(&str, &str)]) -> Result<Self> {
        let mut full = HashMap::new();
        let mut weak = HashMap::new();
        let mut vocab = HashSet::new();
        for (name, body) in files {
            let stem = name.rsplit('/').next().unwrap_or(name);
            let stem = stem.split('.').next().unwrap_or(stem);
            let category: PrivacyCategory = stem.parse().map_err(|_| {
                Error::Config(format!("lexicon `{name}` does not name a category"))
            })?;
            for line in body.lines() {
                let entry = line.trim();
                if entry.is_empty() || entry.starts_with('#') {
                    continue;
                }
                full.insert(entry.to_string(), category);
                let toks: Vec<&str> = entry.split_whitespace().collect();
                for t in &toks {
                    vocab.insert(t.to_lowercase());
                }
                match category {
                    PrivacyCategory::Person => {
                        weak.insert(toks[0].to_string(), category);
                        weak.insert(toks[toks.len() - 1].to_string(), category);
                    }
                    PrivacyCategory::OrgTerm => {
                        let short = if toks[0] == "Project" && toks.len() > 1 { toks[1] } else { toks[0] };
                        weak.insert(short.to_string(), category);
                    }
                    _ => {}
                }
            }
        }
        weak.retain(|k, _| k.chars().count() >= 3 && !full.contains_key(k));
        Ok(Gazetteer {
            full_re: alternation(&full),
            weak_re: alternation(&weak),
            full,
            weak,
            vocab,
        })
    }

    /// True when the lower-cased token appears in any lexicon entry.
    pub fn knows_token(&self, token: &str) -> bool {
        self.vocab.contains(&token.to_lowercase())
    }

    pub fn category_of(&self, entry: &str) -> Option<PrivacyCategory> {
        self.full.get(entry).copied()
    }

    pub fn len(&self) -> usize {
        self.full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.full.is_empty()
    }

    /// Full-entry matches at `conf`, plus partial mentions at `weak_conf`
    /// when it is given.
    pub fn find(&self, text: &str, conf: f64, weak_conf: Option<f64>) -> Vec<Candidate> {
        let idx = CharIndex::new(text);
        let mut out = Vec::new();
        if let Some(re) = &self.full_re {
            for m in re.find_iter(text) {
                let category = self.full[m.as_str()];
                let (mut bs, mut be) = (m.start(), m.end());
                if category == PrivacyCategory::Address {
                    if let Some(h) = HOUSE_NUMBER.find(&text[..bs]) {
                        bs = h.start();
                    }
                    if let Some(l) = LOCALITY.find(&text[be..]) {
                        be += l.end();
                    }
                }
                out.push(Candidate {
                    start: idx.char_of(bs),
                    end: idx.char_of(be),
                    category,
                    confidence: conf,
                    source: SpanSource::Ner,
                });
            }
        }
        if let (Some(re), Some(wc)) = (&self.weak_re, weak_conf) {
            for m in re.find_iter(text) {
                out.push(Candidate {
                    start: idx.char_of(m.start()),
                    end: idx.char_of(m.end()),
                    category: self.weak[m.as_str()],
                    confidence: wc,
                    source: SpanSource::Ner,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str, weak: Option<f64>) -> Vec<(String, PrivacyCategory, f64)> {
        let chars: Vec<char> = text.chars().collect();
        let mut v: Vec<_> = Gazetteer::shipped()
            .find(text, 0.85, weak)
            .into_iter()
            .map(|c| (chars[c.start..c.end].iter().collect::<String>(), c.category, c.confidence))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    #[test]
    fn full_matches_carry_file_category() {
        let got = surfaces("Ask Sarah Chen at Tamarind Logistics.", None);
        assert_eq!(
            got,
            vec![
                ("Sarah Chen".into(), PrivacyCategory::Person, 0.85),
                ("Tamarind Logistics".into(), PrivacyCategory::OrgTerm, 0.85),
            ]
        );
    }

    #[test]
    fn addresses_absorb_number_and_locality() {
        let got = surfaces("Ship to 17 Anzac Avenue, Auckland today", None);
        assert_eq!(got[0].0, "17 Anzac Avenue, Auckland");
        assert_eq!(got[0].1, PrivacyCategory::Address);
    }

    #[test]
    fn partial_mentions_only_when_requested() {
        assert!(surfaces("Tell Sarah about Bluefin.", None).is_empty());
        let got = surfaces("Tell Sarah about Bluefin.", Some(0.45));
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|g| g.2 == 0.45));
    }

    #[test]
    fn word_boundaries_respected() {
        assert!(surfaces("Sarahs Chenoweth", Some(0.45)).is_empty());
    }

    #[test]
    fn rejects_unknown_lexicon_names() {
        assert!(Gazetteer::from_lexicons(&[("pets.txt", "Rex\n")]).is_err());
    }

    #[test]
    fn vocabulary_is_case_insensitive() {
        assert!(Gazetteer::shipped().knows_token("tamarind"));
        assert!(Gazetteer::shipped().knows_token("HEMI"));
        assert!(!Gazetteer::shipped().knows_token("invoice"));
    }
}
