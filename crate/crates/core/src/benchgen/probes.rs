//! Adversarial probe families derived from clean benchmark prompts.

use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mix, BenchmarkManifest, GoldSpan, Modality, PromptInstance};
use crate::category::{CategoryClass, PrivacyCategory};
use crate::error::Result;
use crate::extraction::normalize::confusables_for;
use crate::text::word_bounded;

pub const SHIPPED_PROBES: &str = include_str!("../../data/bench/probes.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeFamily {
    Homoglyph,
    Paraphrase,
    MixedLanguage,
    RestorationTrigger,
}

impl ProbeFamily {
    pub const ALL: [ProbeFamily; 4] = [
        ProbeFamily::Homoglyph,
        ProbeFamily::Paraphrase,
        ProbeFamily::MixedLanguage,
        ProbeFamily::RestorationTrigger,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeFamily::Homoglyph => "HOMOGLYPH",
            ProbeFamily::Paraphrase => "PARAPHRASE",
            ProbeFamily::MixedLanguage => "MIXED_LANGUAGE",
            ProbeFamily::RestorationTrigger => "RESTORATION_TRIGGER",
        }
    }

    fn code(self) -> &'static str {
        match self {
            ProbeFamily::Homoglyph => "HG",
            ProbeFamily::Paraphrase => "PP",
            ProbeFamily::MixedLanguage => "ML",
            ProbeFamily::RestorationTrigger => "RT",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ProbeMaterial {
    pub homoglyph_rate: f64,
    pub paraphrase: BTreeMap<String, String>,
    pub mixed_language: BTreeMap<String, String>,
    pub restoration_trigger: TriggerMaterial,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TriggerMaterial {
    pub suffixes: Vec<String>,
}

impl ProbeMaterial {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(toml::from_str(src)?)
    }

    pub fn shipped() -> &'static ProbeMaterial {
        static M: Lazy<ProbeMaterial> = Lazy::new(|| ProbeMaterial::parse(SHIPPED_PROBES).expect("probe material parses"));
        &M
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub family: ProbeFamily,
    pub base_id: String,
    pub transformation: String,
    /// Gold spans the attack aims at, as indices into `prompt.gold`.
    pub targeted: Vec<usize>,
    pub prompt: PromptInstance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub family: ProbeFamily,
    pub seed: u64,
    pub probes: Vec<Probe>,
}

impl ProbeSet {
    /// The unmodified base prompts with the same targets.
    pub fn clean_control(&self, base: &BenchmarkManifest) -> Vec<Probe> {
        self.probes
            .iter()
            .filter_map(|p| {
                let b = base.get(&p.base_id)?;
                let targeted = match self.family {
                    ProbeFamily::Homoglyph => structured_targets(b),
                    ProbeFamily::Paraphrase | ProbeFamily::MixedLanguage => contextual_targets(b),
                    ProbeFamily::RestorationTrigger => (0..b.gold.len()).collect(),
                };
                Some(Probe {
                    family: self.family,
                    base_id: b.id.clone(),
                    transformation: "none".into(),
                    targeted,
                    prompt: b.clone(),
                })
            })
            .collect()
    }
}

fn structured_targets(p: &PromptInstance) -> Vec<usize> {
    (0..p.gold.len()).filter(|&i| p.gold[i].category.class() == CategoryClass::Structured).collect()
}

fn contextual_targets(p: &PromptInstance) -> Vec<usize> {
    (0..p.gold.len())
        .filter(|&i| matches!(p.gold[i].category, PrivacyCategory::Medical | PrivacyCategory::ContextSensitive))
        .collect()
}

fn homoglyph<R: Rng + ?Sized>(p: &PromptInstance, rate: f64, rng: &mut R) -> Option<(PromptInstance, Vec<usize>, String)> {
    let targets = structured_targets(p);
    if targets.is_empty() {
        return None;
    }
    let mut chars: Vec<char> = p.text.chars().collect();
    let mut count = 0;
    for &t in &targets {
        let g = &p.gold[t];
        let eligible: Vec<usize> = (g.start..g.end).filter(|&i| !confusables_for(chars[i]).is_empty()).collect();
        let mut hit = false;
        for &i in &eligible {
            if rng.gen_bool(rate) {
                chars[i] = *confusables_for(chars[i]).choose(rng).unwrap();
                hit = true;
                count += 1;
            }
        }
        if !hit {
            let &i = eligible.choose(rng)?;
            chars[i] = *confusables_for(chars[i]).choose(rng).unwrap();
            count += 1;
        }
    }
    let text: String = chars.iter().collect();
    let gold = p
        .gold
        .iter()
        .map(|g| GoldSpan { surface: chars[g.start..g.end].iter().collect(), ..g.clone() })
        .collect();
    Some((PromptInstance { text, gold, ..p.clone() }, targets, format!("{count} confusable substitutions")))
}

/// Replaces cue phrases outside gold spans and shifts offsets.
fn rewrite_cues(p: &PromptInstance, table: &BTreeMap<String, String>) -> Option<(PromptInstance, Vec<usize>, String)> {
    let targets = contextual_targets(p);
    if targets.is_empty() {
        return None;
    }
    let chars: Vec<char> = p.text.chars().collect();
    let lower: Vec<char> = p.text.to_lowercase().chars().collect();
    if lower.len() != chars.len() {
        return None;
    }
    let mut keys: Vec<(&String, &String)> = table.iter().collect();
    keys.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
    let mut edits: Vec<(usize, usize, String)> = Vec::new();
    for (from, to) in keys {
        let f: Vec<char> = from.chars().collect();
        let mut i = 0;
        while i + f.len() <= lower.len() {
            let (s, e) = (i, i + f.len());
            let free = lower[s..e] == f[..]
                && word_bounded(&lower, s, e)
                && !p.gold.iter().any(|g| g.start < e && s < g.end)
                && !edits.iter().any(|x| x.0 < e && s < x.1);
            if free {
                let mut rep = to.clone();
                if chars[s].is_uppercase() {
                    let mut c = rep.chars();
                    rep = c.next().map(|h| h.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default();
                }
                edits.push((s, e, rep));
                i = e;
            } else {
                i += 1;
            }
        }
    }
    if edits.is_empty() {
        return None;
    }
    edits.sort_by_key(|e| e.0);
    let shift_at = |pos: usize| -> isize {
        edits
            .iter()
            .filter(|e| e.1 <= pos)
            .map(|e| e.2.chars().count() as isize - (e.1 - e.0) as isize)
            .sum()
    };
    let gold = p
        .gold
        .iter()
        .map(|g| {
            let d = shift_at(g.start);
            GoldSpan { start: (g.start as isize + d) as usize, end: (g.end as isize + d) as usize, ..g.clone() }
        })
        .collect();
    let text = crate::text::apply_edits(&p.text, &edits).ok()?;
    let desc = edits.iter().map(|(s, e, r)| format!("{}->{}", chars[*s..*e].iter().collect::<String>(), r)).collect::<Vec<_>>().join("; ");
    Some((PromptInstance { text, gold, ..p.clone() }, targets, desc))
}

fn trigger<R: Rng + ?Sized>(p: &PromptInstance, suffixes: &[String], rng: &mut R) -> Option<(PromptInstance, Vec<usize>, String)> {
    let suffix = suffixes.choose(rng)?;
    let text = format!("{} {}", p.text, suffix);
    Some((PromptInstance { text, ..p.clone() }, (0..p.gold.len()).collect(), format!("suffix: {suffix}")))
}

/// Derives one probe family from the clean text prompts of `base`.
pub fn generate_probes(family: ProbeFamily, seed: u64, base: &BenchmarkManifest) -> ProbeSet {
    let material = ProbeMaterial::shipped();
    let mut probes = Vec::new();
    for (i, p) in base.prompts.iter().enumerate() {
        if p.modality != Modality::Text || p.gold.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1000 + family as u64, i as u64));
        let made = match family {
            ProbeFamily::Homoglyph => homoglyph(p, material.homoglyph_rate, &mut rng),
            ProbeFamily::Paraphrase => rewrite_cues(p, &material.paraphrase),
            ProbeFamily::MixedLanguage => rewrite_cues(p, &material.mixed_language),
            ProbeFamily::RestorationTrigger => trigger(p, &material.restoration_trigger.suffixes, &mut rng),
        };
        if let Some((mut prompt, targeted, transformation)) = made {
            prompt.id = format!("{}-{}", family.code(), p.id);
            probes.push(Probe { family, base_id: p.id.clone(), transformation, targeted, prompt });
        }
    }
    ProbeSet { family, seed, probes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::generate_benchmark;
    use crate::extraction::normalize_surface;
    use crate::extraction::context::ContextLexicon;
    use crate::text::slice_chars;

    fn check_offsets(set: &ProbeSet) {
        for p in &set.probes {
            for g in &p.prompt.gold {
                assert_eq!(slice_chars(&p.prompt.text, g.start, g.end).unwrap(), g.surface, "{}", p.prompt.id);
            }
        }
    }

    #[test]
    fn homoglyph_substitutes_inside_each_target() {
        let m = generate_benchmark(17);
        let set = generate_probes(ProbeFamily::Homoglyph, 17, &m);
        assert!(!set.probes.is_empty());
        check_offsets(&set);
        for p in &set.probes {
            let base = m.get(&p.base_id).unwrap();
            for &t in &p.targeted {
                let (a, b) = (&p.prompt.gold[t].surface, &base.gold[t].surface);
                assert_ne!(a, b);
                assert_eq!(normalize_surface(a), *b);
            }
        }
    }

    #[test]
    fn paraphrase_removes_trigger_words() {
        let m = generate_benchmark(17);
        let set = generate_probes(ProbeFamily::Paraphrase, 17, &m);
        assert!(!set.probes.is_empty());
        check_offsets(&set);
        let triggers: Vec<String> = ContextLexicon::shipped().triggers().map(|(t, _)| t).collect();
        for p in &set.probes {
            let base = m.get(&p.base_id).unwrap();
            for &t in &p.targeted {
                assert_eq!(p.prompt.gold[t].surface, base.gold[t].surface);
            }
            let lower = p.prompt.text.to_lowercase();
            let before = triggers.iter().filter(|t| base.text.to_lowercase().contains(t.as_str())).count();
            let after = triggers.iter().filter(|t| lower.contains(t.as_str())).count();
            assert!(after < before, "{}", p.prompt.text);
        }
    }

    #[test]
    fn mixed_language_uses_foreign_cues() {
        let m = generate_benchmark(29);
        let set = generate_probes(ProbeFamily::MixedLanguage, 29, &m);
        assert!(!set.probes.is_empty());
        check_offsets(&set);
        assert!(set.probes.iter().all(|p| ["con", "avec", "sobre"].iter().any(|w| p.prompt.text.contains(w))));
    }

    #[test]
    fn restoration_trigger_keeps_gold() {
        let m = generate_benchmark(43);
        let set = generate_probes(ProbeFamily::RestorationTrigger, 43, &m);
        check_offsets(&set);
        for p in &set.probes {
            let base = m.get(&p.base_id).unwrap();
            assert!(p.prompt.text.starts_with(&base.text));
            assert!(p.prompt.text.len() > base.text.len());
            assert_eq!(p.prompt.gold, base.gold);
        }
    }

    #[test]
    fn probes_resolve_to_base_prompts() {
        let m = generate_benchmark(71);
        for f in ProbeFamily::ALL {
            let a = generate_probes(f, 71, &m);
            assert_eq!(a, generate_probes(f, 71, &m));
            assert!(a.probes.iter().all(|p| m.get(&p.base_id).is_some()));
            assert_eq!(a.clean_control(&m).len(), a.probes.len());
        }
    }
}
