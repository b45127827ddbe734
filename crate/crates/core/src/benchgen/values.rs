//! Seeded synthetic entity values.

use once_cell::sync::Lazy;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;

use super::template::{EntityKey, Part};
use crate::error::Result;
use crate::extraction::gazetteer::SHIPPED_LEXICONS;

pub const SHIPPED_VALUES: &str = include_str!("../../data/bench/values.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct ValuePools {
    pub unlisted_person: Vec<String>,
    pub unlisted_org: Vec<String>,
    pub unlisted_street: Vec<String>,
    pub unlisted_rate: f64,
    pub localities: Vec<String>,
    pub email_domains: Vec<String>,
    pub medical: Vec<String>,
    pub context: Vec<String>,
    pub ocr_confusions: Vec<(String, String)>,
    pub ocr_rate: f64,
    pub snippets: std::collections::BTreeMap<String, Vec<String>>,
    #[serde(skip)]
    pub person: Vec<String>,
    #[serde(skip)]
    pub org: Vec<String>,
    #[serde(skip)]
    pub street: Vec<String>,
}

fn lexicon(name: &str) -> Vec<String> {
    SHIPPED_LEXICONS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, body)| {
            body.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

impl ValuePools {
    pub fn parse(src: &str) -> Result<Self> {
        let mut pools: ValuePools = toml::from_str(src)?;
        pools.person = lexicon("person.txt");
        pools.org = lexicon("org_term.txt");
        pools.street = lexicon("address.txt");
        Ok(pools)
    }

    pub fn shipped() -> &'static ValuePools {
        static POOLS: Lazy<ValuePools> =
            Lazy::new(|| ValuePools::parse(SHIPPED_VALUES).expect("shipped value pools parse"));
        &POOLS
    }

    fn listed_or_not<R: Rng + ?Sized>(&self, listed: &[String], unlisted: &[String], rng: &mut R) -> String {
        let pool = if rng.gen_bool(self.unlisted_rate) { unlisted } else { listed };
        pool.choose(rng).expect("non-empty pool").clone()
    }

    fn digits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> String {
        (0..n).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect()
    }

    /// Draws a value for `key`. `cue` is the lowercased text preceding the
    /// first mention and selects the identifier format. `taken` holds values
    /// already drawn for the prompt.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        key: EntityKey,
        cue: &str,
        person: Option<&str>,
        taken: &[String],
        rng: &mut R,
    ) -> String {
        for _ in 0..64 {
            let v = self.draw_once(key, cue, person, rng);
            let clash = |t: &String| {
                t == &v
                    || t.contains(&v)
                    || v.contains(t.as_str())
                    || (matches!(key, EntityKey::Person | EntityKey::Person2 | EntityKey::Org | EntityKey::Org2)
                        && v.split_whitespace().any(|w| t.split_whitespace().any(|x| x == w)))
            };
            if !taken.iter().any(clash) {
                return v;
            }
        }
        self.draw_once(key, cue, person, rng)
    }

    fn draw_once<R: Rng + ?Sized>(&self, key: EntityKey, cue: &str, person: Option<&str>, rng: &mut R) -> String {
        match key {
            EntityKey::Person | EntityKey::Person2 => self.listed_or_not(&self.person, &self.unlisted_person, rng),
            EntityKey::Org | EntityKey::Org2 => self.listed_or_not(&self.org, &self.unlisted_org, rng),
            EntityKey::Email => {
                let name = person.map(str::to_string).unwrap_or_else(|| self.person.choose(rng).unwrap().clone());
                let toks: Vec<&str> = name.split_whitespace().collect();
                let local = format!("{}.{}", toks[0], toks[toks.len() - 1]).to_lowercase();
                format!("{local}@{}", self.email_domains.choose(rng).unwrap())
            }
            EntityKey::Phone => {
                let prefix = ["021", "022", "027", "029"].choose(rng).unwrap();
                format!("{prefix}-{}-{}", Self::digits(3, rng), Self::digits(4, rng))
            }
            EntityKey::Address => {
                let street = self.listed_or_not(&self.street, &self.unlisted_street, rng);
                let num = rng.gen_range(1..=250);
                format!("{num} {street}, {}", self.localities.choose(rng).unwrap())
            }
            EntityKey::Natid => {
                if cue.contains("ird") {
                    format!("{}{}-{}-{}", rng.gen_range(1..10), Self::digits(2, rng), Self::digits(3, rng), Self::digits(3, rng))
                } else {
                    format!("{}{}", ["NZ", "LA"].choose(rng).unwrap(), Self::digits(7, rng))
                }
            }
            EntityKey::Account => {
                if cue.contains("bank account") {
                    format!("{}-{}-{}-{}", Self::digits(2, rng), Self::digits(4, rng), Self::digits(7, rng), Self::digits(2, rng))
                } else {
                    format!("4{}-{}-{}-{}", Self::digits(3, rng), Self::digits(4, rng), Self::digits(4, rng), Self::digits(4, rng))
                }
            }
            EntityKey::Invoice => {
                let prefix = if cue.contains("purchase order") {
                    "PO"
                } else if cue.contains("claim") {
                    "CLM"
                } else {
                    "INV"
                };
                format!("{prefix}-{}-{}", rng.gen_range(2021..=2026), Self::digits(3, rng))
            }
            EntityKey::Dob => format!(
                "{:02}/{:02}/{}",
                rng.gen_range(1..=28),
                rng.gen_range(1..=12),
                rng.gen_range(1950..=2004)
            ),
            EntityKey::Medical => self.medical.choose(rng).unwrap().clone(),
            EntityKey::Context => self.context.choose(rng).unwrap().clone(),
        }
    }
}

/// The surface of `value` for a partial mention.
pub fn part_of(value: &str, part: Part) -> String {
    let toks: Vec<&str> = value.split_whitespace().collect();
    match part {
        Part::Full => value.to_string(),
        Part::First => toks[0].to_string(),
        Part::Last => toks[toks.len() - 1].to_string(),
        Part::Short => {
            if toks.len() > 1 && toks[0] == "Project" {
                toks[1].to_string()
            } else {
                toks[0].to_string()
            }
        }
    }
}
