//! Template markup parsing.

use std::collections::BTreeMap;
use std::str::FromStr;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Family, SlotNeed};
use crate::category::PrivacyCategory;
use crate::error::{Error, Result};

pub const SHIPPED_TEMPLATES: &str = include_str!("../../data/bench/templates.toml");

static MARKER: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"\{([A-Z]+[0-9]?)(?:\.(first|last|short))?(?::(exact|role|meaning))?\}").unwrap()
});

/// Entity slots a template can mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityKey {
    Person,
    Person2,
    Email,
    Phone,
    Address,
    Natid,
    Account,
    Invoice,
    Dob,
    Medical,
    Org,
    Org2,
    Context,
}

impl EntityKey {
    pub fn category(self) -> PrivacyCategory {
        use PrivacyCategory as C;
        match self {
            EntityKey::Person | EntityKey::Person2 => C::Person,
            EntityKey::Email => C::Email,
            EntityKey::Phone => C::Phone,
            EntityKey::Address => C::Address,
            EntityKey::Natid => C::NationalId,
            EntityKey::Account => C::Account,
            EntityKey::Invoice => C::FinancialRef,
            EntityKey::Dob => C::DateOfBirth,
            EntityKey::Medical => C::Medical,
            EntityKey::Org | EntityKey::Org2 => C::OrgTerm,
            EntityKey::Context => C::ContextSensitive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKey::Person => "PERSON",
            EntityKey::Person2 => "PERSON2",
            EntityKey::Email => "EMAIL",
            EntityKey::Phone => "PHONE",
            EntityKey::Address => "ADDRESS",
            EntityKey::Natid => "NATID",
            EntityKey::Account => "ACCOUNT",
            EntityKey::Invoice => "INVOICE",
            EntityKey::Dob => "DOB",
            EntityKey::Medical => "MEDICAL",
            EntityKey::Org => "ORG",
            EntityKey::Org2 => "ORG2",
            EntityKey::Context => "CONTEXT",
        }
    }

    /// Neutral wording used when a control prompt drops the entity.
    pub fn filler(self) -> &'static str {
        match self {
            EntityKey::Person => "a colleague",
            EntityKey::Person2 => "the manager",
            EntityKey::Email => "the shared inbox",
            EntityKey::Phone => "the main line",
            EntityKey::Address => "the office",
            EntityKey::Natid => "the number on file",
            EntityKey::Account => "the card on file",
            EntityKey::Invoice => "the latest invoice",
            EntityKey::Dob => "the date on file",
            EntityKey::Medical => "an illness",
            EntityKey::Org | EntityKey::Org2 => "the vendor",
            EntityKey::Context => "a personal matter",
        }
    }
}

impl FromStr for EntityKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "PERSON" => EntityKey::Person,
            "PERSON2" => EntityKey::Person2,
            "EMAIL" => EntityKey::Email,
            "PHONE" => EntityKey::Phone,
            "ADDRESS" => EntityKey::Address,
            "NATID" => EntityKey::Natid,
            "ACCOUNT" => EntityKey::Account,
            "INVOICE" => EntityKey::Invoice,
            "DOB" => EntityKey::Dob,
            "MEDICAL" => EntityKey::Medical,
            "ORG" => EntityKey::Org,
            "ORG2" => EntityKey::Org2,
            "CONTEXT" => EntityKey::Context,
            other => return Err(Error::Config(format!("unknown entity `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Full,
    First,
    Last,
    Short,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Mention { entity: EntityKey, part: Part, need: Option<SlotNeed> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub segments: Vec<Segment>,
    pub tool: Option<String>,
}

impl Pattern {
    pub fn parse(text: &str, tool: Option<String>) -> Result<Self> {
        let mut segments = Vec::new();
        let mut last = 0;
        for cap in MARKER.captures_iter(text) {
            let m = cap.get(0).unwrap();
            if m.start() > last {
                segments.push(Segment::Literal(text[last..m.start()].to_string()));
            }
            let entity: EntityKey = cap[1].parse()?;
            let part = match cap.get(2).map(|p| p.as_str()) {
                None => Part::Full,
                Some("first") => Part::First,
                Some("last") => Part::Last,
                _ => Part::Short,
            };
            let need = cap.get(3).map(|n| match n.as_str() {
                "exact" => SlotNeed::Exact,
                "role" => SlotNeed::Role,
                _ => SlotNeed::Meaning,
            });
            segments.push(Segment::Mention { entity, part, need });
            last = m.end();
        }
        if last < text.len() {
            segments.push(Segment::Literal(text[last..].to_string()));
        }
        if segments.iter().any(|s| matches!(s, Segment::Literal(l) if l.contains(['{', '}']))) {
            return Err(Error::Config(format!("malformed marker in `{text}`")));
        }
        Ok(Pattern { segments, tool })
    }

    pub fn entities(&self) -> Vec<EntityKey> {
        let mut out: Vec<EntityKey> = self
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Mention { entity, .. } => Some(*entity),
                Segment::Literal(_) => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ToolDef {
    pub args: Vec<String>,
    #[serde(default)]
    pub echo: bool,
}

#[derive(Debug, Deserialize)]
struct RawPattern {
    text: String,
    tool: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawTemplate {
    family: Family,
    category: PrivacyCategory,
    essential: Vec<RawPattern>,
    incidental: Vec<RawPattern>,
}

#[derive(Debug, Deserialize)]
struct RawFile {
    tools: BTreeMap<String, ToolDef>,
    template: Vec<RawTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub family: Family,
    pub category: PrivacyCategory,
    pub essential: [Pattern; 2],
    pub incidental: [Pattern; 2],
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub tools: BTreeMap<String, ToolDef>,
    pub templates: Vec<Template>,
}

fn pair(raw: Vec<RawPattern>, tools: &BTreeMap<String, ToolDef>) -> Result<[Pattern; 2]> {
    let parsed: Vec<Pattern> = raw
        .into_iter()
        .map(|p| {
            if let Some(t) = &p.tool {
                let def = tools.get(t).ok_or_else(|| Error::Config(format!("unknown tool `{t}`")))?;
                let pat = Pattern::parse(&p.text, p.tool.clone())?;
                let present = pat.entities();
                for a in &def.args {
                    let key: EntityKey = a.parse()?;
                    if !present.contains(&key) {
                        return Err(Error::Config(format!("tool `{t}` argument {a} absent from `{}`", p.text)));
                    }
                }
                Ok(pat)
            } else {
                Pattern::parse(&p.text, None)
            }
        })
        .collect::<Result<_>>()?;
    <[Pattern; 2]>::try_from(parsed).map_err(|v| Error::Config(format!("expected 2 patterns, got {}", v.len())))
}

impl TemplateSet {
    pub fn parse(src: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(src)?;
        let mut templates = Vec::with_capacity(raw.template.len());
        for t in raw.template {
            templates.push(Template {
                family: t.family,
                category: t.category,
                essential: pair(t.essential, &raw.tools)?,
                incidental: pair(t.incidental, &raw.tools)?,
            });
        }
        Ok(TemplateSet { tools: raw.tools, templates })
    }

    pub fn shipped() -> &'static TemplateSet {
        static SET: Lazy<TemplateSet> =
            Lazy::new(|| TemplateSet::parse(SHIPPED_TEMPLATES).expect("shipped templates parse"));
        &SET
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_markers() {
        let p = Pattern::parse("Hi {PERSON:role}, ask {PERSON2.first} about {ORG.short}.", None).unwrap();
        assert_eq!(p.segments.len(), 7);
        assert_eq!(
            p.segments[1],
            Segment::Mention { entity: EntityKey::Person, part: Part::Full, need: Some(SlotNeed::Role) }
        );
        assert_eq!(
            p.segments[3],
            Segment::Mention { entity: EntityKey::Person2, part: Part::First, need: None }
        );
        assert_eq!(p.entities(), vec![EntityKey::Person, EntityKey::Person2, EntityKey::Org]);
    }

    #[test]
    fn rejects_unknown_entity() {
        assert!(Pattern::parse("see {NOPE}", None).is_err());
        assert!(Pattern::parse("see {PERSON:wrong}", None).is_err());
    }

    #[test]
    fn shipped_set_is_complete() {
        let set = TemplateSet::shipped();
        assert_eq!(set.templates.len(), 32);
        let mut seen = std::collections::BTreeSet::new();
        for t in &set.templates {
            assert!(seen.insert((t.family, t.category)));
            for p in t.essential.iter().chain(&t.incidental) {
                assert!(!p.entities().is_empty());
            }
        }
    }
}
