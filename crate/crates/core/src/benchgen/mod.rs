//! Deterministic synthetic benchmark: 32 templates with 8 variants each,
//! gold spans, task slots, splits, an OCR-noise modality and probe sets.

pub mod ocr;
pub mod probes;
pub mod template;
pub mod values;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::category::{PrivacyCategory, RiskTier};
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;

pub use ocr::{apply_ocr_noise, NoisyText};
pub use probes::{generate_probes, Probe, ProbeFamily, ProbeSet};
pub use template::{EntityKey, Part, Pattern, Segment, TemplateSet, ToolDef};
pub use values::ValuePools;

pub const MANIFEST_VERSION: &str = "bench-1";
pub const VARIANTS: u8 = 8;

/// Primary categories in template order.
pub const PRIMARY_CATEGORIES: [PrivacyCategory; 8] = [
    PrivacyCategory::Person,
    PrivacyCategory::Email,
    PrivacyCategory::Address,
    PrivacyCategory::NationalId,
    PrivacyCategory::FinancialRef,
    PrivacyCategory::Medical,
    PrivacyCategory::OrgTerm,
    PrivacyCategory::ContextSensitive,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Direct,
    Document,
    Retrieval,
    Agent,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Direct, Family::Document, Family::Retrieval, Family::Agent];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Direct => "DIRECT",
            Family::Document => "DOCUMENT",
            Family::Retrieval => "RETRIEVAL",
            Family::Agent => "AGENT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SourceGroup {
    DialogueTemplates,
    PublicTaskSources,
    DocumentScenarios,
    AgentWorkflowTraces,
}

impl SourceGroup {
    pub const ALL: [SourceGroup; 4] = [
        SourceGroup::DialogueTemplates,
        SourceGroup::PublicTaskSources,
        SourceGroup::DocumentScenarios,
        SourceGroup::AgentWorkflowTraces,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceGroup::DialogueTemplates => "DIALOGUE_TEMPLATES",
            SourceGroup::PublicTaskSources => "PUBLIC_TASK_SOURCES",
            SourceGroup::DocumentScenarios => "DOCUMENT_SCENARIOS",
            SourceGroup::AgentWorkflowTraces => "AGENT_WORKFLOW_TRACES",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Subset {
    Essential,
    Incidental,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Essential => "ESSENTIAL",
            Subset::Incidental => "INCIDENTAL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    Text,
    Ocr,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "TEXT",
            Modality::Ocr => "OCR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "TRAIN",
            Split::Dev => "DEV",
            Split::Test => "TEST",
        }
    }
}

/// What the downstream task needs from a mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SlotNeed {
    /// The literal value.
    Exact,
    /// Which entity of which type, not its value.
    Role,
    /// The coarse meaning of the value.
    Meaning,
}

impl SlotNeed {
    pub fn as_str(self) -> &'static str {
        match self {
            SlotNeed::Exact => "EXACT",
            SlotNeed::Role => "ROLE",
            SlotNeed::Meaning => "MEANING",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub start: usize,
    pub end: usize,
    pub category: PrivacyCategory,
    pub surface: String,
    pub entity: EntityKey,
    pub partial: bool,
    pub risk_tier: RiskTier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMeta {
    /// Index into the prompt's gold spans.
    pub gold: usize,
    pub entity: EntityKey,
    pub need: SlotNeed,
    pub tool_arg: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    /// Gold span indices passed as arguments.
    pub args: Vec<usize>,
    /// Whether the tool writes its arguments into its output.
    pub echo: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub id: String,
    pub template_id: String,
    pub variant: u8,
    pub family: Family,
    pub source: SourceGroup,
    pub subset: Subset,
    pub modality: Modality,
    pub category: PrivacyCategory,
    pub split: Split,
    pub text: String,
    pub gold: Vec<GoldSpan>,
    pub slots: Vec<SlotMeta>,
    pub tool: Option<ToolSpec>,
    /// Entity mentions replaced by neutral wording.
    pub control: bool,
    pub clean_text: Option<String>,
    pub clean_gold: Option<Vec<GoldSpan>>,
    pub noise_seed: Option<u64>,
}

impl PromptInstance {
    pub fn is_privacy_bearing(&self) -> bool {
        !self.gold.is_empty()
    }

    pub fn tool_categories(&self) -> BTreeSet<PrivacyCategory> {
        self.tool
            .iter()
            .flat_map(|t| t.args.iter().map(|&g| self.gold[g].category))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub version: String,
    pub seed: u64,
    pub prompts: Vec<PromptInstance>,
}

pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn split_for(family: Family, category_index: usize) -> Split {
    if family.index() == category_index % 4 {
        Split::Test
    } else if family.index() == (category_index + 1) % 4 {
        Split::Dev
    } else {
        Split::Train
    }
}

struct Rendered {
    text: String,
    gold: Vec<GoldSpan>,
    slots: Vec<SlotMeta>,
    tool: Option<ToolSpec>,
}

fn cues(pattern: &Pattern) -> BTreeMap<EntityKey, String> {
    let mut out = BTreeMap::new();
    let mut before = String::new();
    for seg in &pattern.segments {
        match seg {
            Segment::Literal(l) => before.push_str(l),
            Segment::Mention { entity, .. } => {
                let tail: String = before.chars().rev().take(24).collect::<Vec<_>>().into_iter().rev().collect();
                out.entry(*entity).or_insert_with(|| tail.to_lowercase());
            }
        }
    }
    out
}

fn draw_values<R: rand::Rng + ?Sized>(pattern: &Pattern, pools: &ValuePools, rng: &mut R) -> BTreeMap<EntityKey, String> {
    let cues = cues(pattern);
    let mut values: BTreeMap<EntityKey, String> = BTreeMap::new();
    for (key, cue) in &cues {
        let taken: Vec<String> = values.values().cloned().collect();
        let person = values.get(&EntityKey::Person).cloned();
        let v = pools.draw(*key, cue, person.as_deref(), &taken, rng);
        values.insert(*key, v);
    }
    values
}

fn render(
    pattern: &Pattern,
    values: &BTreeMap<EntityKey, String>,
    tools: &BTreeMap<String, ToolDef>,
    tiers: &BTreeMap<PrivacyCategory, RiskTier>,
    control: bool,
) -> Result<Rendered> {
    let mut text = String::new();
    let mut pos = 0;
    let mut gold = Vec::new();
    let mut slots: Vec<SlotMeta> = Vec::new();
    for seg in &pattern.segments {
        match seg {
            Segment::Literal(l) => {
                text.push_str(l);
                pos += l.chars().count();
            }
            Segment::Mention { entity, part, need } => {
                if control {
                    let f = entity.filler();
                    text.push_str(f);
                    pos += f.chars().count();
                    continue;
                }
                let surface = values::part_of(&values[entity], *part);
                let len = surface.chars().count();
                let category = entity.category();
                if let Some(need) = need {
                    if !slots.iter().any(|s| s.entity == *entity) {
                        slots.push(SlotMeta { gold: gold.len(), entity: *entity, need: *need, tool_arg: false });
                    }
                }
                gold.push(GoldSpan {
                    start: pos,
                    end: pos + len,
                    category,
                    surface: surface.clone(),
                    entity: *entity,
                    partial: *part != Part::Full,
                    risk_tier: tiers.get(&category).copied().unwrap_or_else(|| category.default_tier()),
                });
                text.push_str(&surface);
                pos += len;
            }
        }
    }
    let tool = match &pattern.tool {
        None => None,
        Some(name) => {
            let def = &tools[name];
            let mut args = Vec::new();
            if !control {
                for a in &def.args {
                    let key: EntityKey = a.parse()?;
                    let g = gold
                        .iter()
                        .position(|g| g.entity == key && !g.partial)
                        .ok_or_else(|| Error::Config(format!("tool {name}: no full mention of {a}")))?;
                    match slots.iter_mut().find(|s| s.entity == key) {
                        Some(s) => {
                            s.gold = g;
                            s.need = SlotNeed::Exact;
                            s.tool_arg = true;
                        }
                        None => slots.push(SlotMeta { gold: g, entity: key, need: SlotNeed::Exact, tool_arg: true }),
                    }
                    args.push(g);
                }
            }
            Some(ToolSpec { name: name.clone(), args, echo: def.echo })
        }
    };
    slots.sort_by_key(|s| s.gold);
    Ok(Rendered { text, gold, slots, tool })
}

/// Generates the benchmark from the shipped templates and value pools.
pub fn generate_benchmark(seed: u64) -> BenchmarkManifest {
    generate_with(seed, TemplateSet::shipped(), ValuePools::shipped(), &PolicyConfig::shipped().risk_tiers)
        .expect("shipped benchmark material is valid")
}

pub fn generate_with(
    seed: u64,
    set: &TemplateSet,
    pools: &ValuePools,
    tiers: &BTreeMap<PrivacyCategory, RiskTier>,
) -> Result<BenchmarkManifest> {
    let mut templates: Vec<&template::Template> = set.templates.iter().collect();
    let cat_index = |c: PrivacyCategory| PRIMARY_CATEGORIES.iter().position(|&p| p == c);
    for t in &templates {
        if cat_index(t.category).is_none() {
            return Err(Error::Config(format!("{} is not a primary category", t.category)));
        }
    }
    templates.sort_by_key(|t| (t.family, cat_index(t.category)));
    let mut prompts = Vec::with_capacity(templates.len() * VARIANTS as usize);
    for (ti, t) in templates.iter().enumerate() {
        let ci = cat_index(t.category).unwrap();
        let template_id = format!("T{ti:02}");
        for v in 1..=VARIANTS {
            let subset = if v <= 4 { Subset::Essential } else { Subset::Incidental };
            let pattern = match subset {
                Subset::Essential => &t.essential[((v - 1) % 2) as usize],
                Subset::Incidental => &t.incidental[((v - 1) % 2) as usize],
            };
            let modality = if v % 4 == 0 { Modality::Ocr } else { Modality::Text };
            let control = v == 7 && ti % 4 == 3;
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, ti as u64, v as u64));
            let values = draw_values(pattern, pools, &mut rng);
            let r = render(pattern, &values, &set.tools, tiers, control)?;
            let (text, gold, clean_text, clean_gold, noise_seed) = if modality == Modality::Ocr {
                let ns = mix(seed ^ 0x0C5, ti as u64, v as u64);
                let mut nrng = ChaCha8Rng::seed_from_u64(ns);
                let noisy = apply_ocr_noise(&r.text, &pools.ocr_confusions, pools.ocr_rate, &mut nrng);
                let idx = crate::text::CharIndex::new(&noisy.text);
                let gold: Vec<GoldSpan> = r
                    .gold
                    .iter()
                    .map(|g| {
                        let (start, end) = noisy.remap(g.start, g.end);
                        GoldSpan { start, end, surface: idx.slice(&noisy.text, start, end).to_string(), ..g.clone() }
                    })
                    .collect();
                (noisy.text, gold, Some(r.text), Some(r.gold), Some(ns))
            } else {
                (r.text, r.gold, None, None, None)
            };
            prompts.push(PromptInstance {
                id: format!("{template_id}-V{v}"),
                template_id: template_id.clone(),
                variant: v,
                family: t.family,
                source: SourceGroup::ALL[(t.family.index() + ci) % 4],
                subset,
                modality,
                category: t.category,
                split: split_for(t.family, ci),
                text,
                gold,
                slots: r.slots,
                tool: r.tool,
                control,
                clean_text,
                clean_gold,
                noise_seed,
            });
        }
    }
    Ok(BenchmarkManifest { version: MANIFEST_VERSION.to_string(), seed, prompts })
}

impl BenchmarkManifest {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.prompts {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(seed: u64, src: &str) -> Result<Self> {
        let prompts = src
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<PromptInstance>, _>>()?;
        Ok(BenchmarkManifest { version: MANIFEST_VERSION.to_string(), seed, prompts })
    }

    pub fn get(&self, id: &str) -> Option<&PromptInstance> {
        self.prompts.iter().find(|p| p.id == id)
    }

    /// Checks offset integrity: every gold span slices to its surface.
    pub fn check_offsets(&self) -> Result<()> {
        for p in &self.prompts {
            for g in &p.gold {
                let s = crate::text::slice_chars(&p.text, g.start, g.end)?;
                if s != g.surface {
                    return Err(Error::IncompleteManifest(format!("{}: `{}` != `{}`", p.id, s, g.surface)));
                }
            }
        }
        Ok(())
    }

    /// Split membership, one line per template.
    pub fn split_card(&self) -> String {
        let mut by: BTreeMap<(Split, &str), Vec<&str>> = BTreeMap::new();
        for p in &self.prompts {
            by.entry((p.split, &p.template_id)).or_default().push(&p.id);
        }
        let mut out = String::from("split,template_id,prompts\n");
        for ((s, t), ids) in by {
            let _ = writeln!(out, "{},{},{}", s.as_str(), t, ids.join(" "));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingRow {
    pub dimension: String,
    pub value: String,
    pub templates: usize,
    pub prompts: usize,
    pub percent: f64,
}

/// Composition counts per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingReport {
    pub rows: Vec<AccountingRow>,
}

impl AccountingReport {
    pub fn from_manifest(m: &BenchmarkManifest) -> Self {
        let total = m.prompts.len();
        let mut groups: BTreeMap<(usize, &'static str, String), (BTreeSet<&str>, usize)> = BTreeMap::new();
        for p in &m.prompts {
            let keys: [(usize, &'static str, String); 8] = [
                (0, "total", "all".to_string()),
                (1, "subset", p.subset.as_str().to_string()),
                (2, "family", p.family.as_str().to_string()),
                (3, "source", p.source.as_str().to_string()),
                (4, "category", p.category.as_str().to_string()),
                (5, "modality", p.modality.as_str().to_string()),
                (6, "variant", format!("V{}", p.variant)),
                (7, "split", p.split.as_str().to_string()),
            ];
            for k in keys {
                let e = groups.entry(k).or_default();
                e.0.insert(&p.template_id);
                e.1 += 1;
            }
        }
        let rows = groups
            .into_iter()
            .map(|((_, dim, value), (templates, prompts))| AccountingRow {
                dimension: dim.to_string(),
                value,
                templates: templates.len(),
                prompts,
                percent: if total == 0 { 0.0 } else { 100.0 * prompts as f64 / total as f64 },
            })
            .collect();
        AccountingReport { rows }
    }

    pub fn count(&self, dimension: &str, value: &str) -> Option<&AccountingRow> {
        self.rows.iter().find(|r| r.dimension == dimension && r.value == value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dimension,value,templates,prompts,percent\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{:.1}", r.dimension, r.value, r.templates, r.prompts, r.percent);
        }
        out
    }

    /// Verifies the fixed composition; returns the first mismatch.
    pub fn verify(&self) -> Result<()> {
        let mut expect: Vec<(&str, String, usize, usize)> = vec![("total", "all".into(), 32, 256)];
        for s in ["ESSENTIAL", "INCIDENTAL"] {
            expect.push(("subset", s.into(), 32, 128));
        }
        for f in Family::ALL {
            expect.push(("family", f.as_str().into(), 8, 64));
        }
        for s in SourceGroup::ALL {
            expect.push(("source", s.as_str().into(), 8, 64));
        }
        for c in PRIMARY_CATEGORIES {
            expect.push(("category", c.as_str().into(), 4, 32));
        }
        expect.push(("modality", "TEXT".into(), 32, 192));
        expect.push(("modality", "OCR".into(), 32, 64));
        for v in 1..=VARIANTS {
            expect.push(("variant", format!("V{v}"), 32, 32));
        }
        expect.push(("split", "TRAIN".into(), 16, 128));
        expect.push(("split", "DEV".into(), 8, 64));
        expect.push(("split", "TEST".into(), 8, 64));
        for (dim, value, templates, prompts) in expect {
            match self.count(dim, &value) {
                Some(r) if r.templates == templates && r.prompts == prompts => {}
                Some(r) => {
                    return Err(Error::IncompleteManifest(format!(
                        "{dim}={value}: {} templates / {} prompts, expected {templates} / {prompts}",
                        r.templates, r.prompts
                    )))
                }
                None => return Err(Error::IncompleteManifest(format!("{dim}={value} missing"))),
            }
        }
        if self.rows.iter().filter(|r| r.dimension == "category").count() != 8 {
            return Err(Error::IncompleteManifest("unexpected category rows".into()));
        }
        Ok(())
    }
}
