//! Policy profiles and the per-span mode selector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::category::{CategoryClass, PrivacyCategory, RiskTier};
use crate::error::{Error, Result};

pub const SHIPPED_POLICY: &str = include_str!("../data/policy.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProfileName {
    Lenient,
    Balanced,
    Strict,
}

impl ProfileName {
    pub const ALL: [ProfileName; 3] = [ProfileName::Lenient, ProfileName::Balanced, ProfileName::Strict];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileName::Lenient => "LENIENT",
            ProfileName::Balanced => "BALANCED",
            ProfileName::Strict => "STRICT",
        }
    }
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProfileName::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown profile `{s}`")))
    }
}

/// Sanitization modes. Declaration order is the exact-tie precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SanitizationMode {
    Placeholder,
    Symbolic,
    Abstract,
}

impl SanitizationMode {
    pub const ALL: [SanitizationMode; 3] =
        [SanitizationMode::Placeholder, SanitizationMode::Symbolic, SanitizationMode::Abstract];

    pub fn as_str(self) -> &'static str {
        match self {
            SanitizationMode::Placeholder => "PLACEHOLDER",
            SanitizationMode::Abstract => "ABSTRACT",
            SanitizationMode::Symbolic => "SYMBOLIC",
        }
    }
}

impl fmt::Display for SanitizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyProfile {
    #[serde(skip_deserializing, default = "default_name")]
    pub name: ProfileName,
    pub tau: f64,
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub gamma: f64,
    pub lambda: f64,
    #[serde(default)]
    pub high_risk: BTreeSet<PrivacyCategory>,
}

fn default_name() -> ProfileName {
    ProfileName::Balanced
}

impl PolicyProfile {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidThreshold(self.tau));
        }
        let ws = self.alpha.iter().chain(&self.beta).chain([&self.gamma, &self.lambda]);
        if ws.clone().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("profile {} has a negative or non-finite weight", self.name)));
        }
        Ok(())
    }

    /// Same weights at a different threshold.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let p = PolicyProfile { tau, ..self.clone() };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingState {
    pub category: PrivacyCategory,
    pub confidence_milli: u16,
    pub risk_tier: RiskTier,
    pub exact_value_required: bool,
    pub restoration_authorized: bool,
    pub latency_sensitive: bool,
}

impl RoutingState {
    pub fn new(category: PrivacyCategory, confidence: f64, risk_tier: RiskTier) -> Self {
        RoutingState {
            category,
            confidence_milli: (confidence.clamp(0.0, 1.0) * 1000.0).round() as u16,
            risk_tier,
            exact_value_required: false,
            restoration_authorized: false,
            latency_sensitive: false,
        }
    }

    pub fn confidence(&self) -> f64 {
        self.confidence_milli as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerMode<T> {
    pub placeholder: T,
    pub abstract_: T,
    pub symbolic: T,
}

impl<T> PerMode<T> {
    pub fn get(&self, m: SanitizationMode) -> &T {
        match m {
            SanitizationMode::Placeholder => &self.placeholder,
            SanitizationMode::Abstract => &self.abstract_,
            SanitizationMode::Symbolic => &self.symbolic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct ModeTable<T> {
    #[serde(rename = "PLACEHOLDER")]
    placeholder: T,
    #[serde(rename = "ABSTRACT")]
    abstract_: T,
    #[serde(rename = "SYMBOLIC")]
    symbolic: T,
}

impl<T> From<ModeTable<T>> for PerMode<T> {
    fn from(t: ModeTable<T>) -> Self {
        PerMode { placeholder: t.placeholder, abstract_: t.abstract_, symbolic: t.symbolic }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct ExactValueTable {
    #[serde(rename = "PLACEHOLDER")]
    placeholder: u8,
    #[serde(rename = "ABSTRACT")]
    abstract_: u8,
    #[serde(rename = "SYMBOLIC")]
    symbolic: u8,
    symbolic_authorized: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct RawTables {
    direct_exposure: ModeTable<[[u8; 3]; 4]>,
    context_leakage: ModeTable<[u8; 4]>,
    restoration_surface: ModeTable<u8>,
    exact_value: ExactValueTable,
    semantic_drift: ModeTable<[u8; 4]>,
    latency: ModeTable<u8>,
}

/// Integer score tables in `0..=4` indexed by mode, category class and tier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreTables {
    pub direct_exposure: PerMode<[[u8; 3]; 4]>,
    pub context_leakage: PerMode<[u8; 4]>,
    pub restoration_surface: PerMode<u8>,
    pub exact_value: PerMode<u8>,
    pub exact_value_symbolic_authorized: u8,
    pub semantic_drift: PerMode<[u8; 4]>,
    pub latency: PerMode<u8>,
}

impl From<RawTables> for ScoreTables {
    fn from(r: RawTables) -> Self {
        ScoreTables {
            direct_exposure: r.direct_exposure.into(),
            context_leakage: r.context_leakage.into(),
            restoration_surface: r.restoration_surface.into(),
            exact_value: PerMode {
                placeholder: r.exact_value.placeholder,
                abstract_: r.exact_value.abstract_,
                symbolic: r.exact_value.symbolic,
            },
            exact_value_symbolic_authorized: r.exact_value.symbolic_authorized,
            semantic_drift: r.semantic_drift.into(),
            latency: r.latency.into(),
        }
    }
}

impl ScoreTables {
    pub fn direct_exposure(&self, m: SanitizationMode, class: CategoryClass, tier: RiskTier) -> u8 {
        self.direct_exposure.get(m)[class.index()][tier.index()]
    }

    fn max_entry(&self) -> u8 {
        let mut all: Vec<u8> = Vec::new();
        for m in SanitizationMode::ALL {
            all.extend(self.direct_exposure.get(m).iter().flatten());
            all.extend(self.context_leakage.get(m));
            all.extend(self.semantic_drift.get(m));
            all.push(*self.restoration_surface.get(m));
            all.push(*self.exact_value.get(m));
            all.push(*self.latency.get(m));
        }
        all.push(self.exact_value_symbolic_authorized);
        all.into_iter().max().unwrap_or(0)
    }
}

#[derive(Debug, Deserialize)]
struct RawPolicy {
    profiles: BTreeMap<ProfileName, PolicyProfile>,
    risk_tiers: BTreeMap<PrivacyCategory, RiskTier>,
    tables: RawTables,
}

/// Loaded profiles, tier assignment and score tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub profiles: BTreeMap<ProfileName, PolicyProfile>,
    pub risk_tiers: BTreeMap<PrivacyCategory, RiskTier>,
    pub tables: ScoreTables,
}

impl PolicyConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let raw: RawPolicy = toml::from_str(src)?;
        let mut profiles = raw.profiles;
        for (name, p) in profiles.iter_mut() {
            p.name = *name;
            p.validate()?;
        }
        for name in ProfileName::ALL {
            if !profiles.contains_key(&name) {
                return Err(Error::Config(format!("profile {name} missing")));
            }
        }
        let tables: ScoreTables = raw.tables.into();
        if tables.max_entry() > 4 {
            return Err(Error::Config("score table entries must lie in 0..=4".into()));
        }
        Ok(PolicyConfig { profiles, risk_tiers: raw.risk_tiers, tables })
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_POLICY).expect("shipped policy parses")
    }

    pub fn profile(&self, name: ProfileName) -> &PolicyProfile {
        &self.profiles[&name]
    }

    pub fn tier(&self, c: PrivacyCategory) -> RiskTier {
        self.risk_tiers.get(&c).copied().unwrap_or_else(|| c.default_tier())
    }

    pub fn router(&self) -> Router {
        Router { tables: self.tables.clone() }
    }
}

/// Rule-instantiated loss approximations and the argmin selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Router {
    pub tables: ScoreTables,
}

impl Router {
    pub fn privacy_loss(&self, m: SanitizationMode, s: &RoutingState, p: &PolicyProfile) -> f64 {
        let class = s.category.class();
        let t = &self.tables;
        let der = t.direct_exposure(m, class, s.risk_tier) as f64;
        let clr = t.context_leakage.get(m)[class.index()] as f64;
        let rs = if s.restoration_authorized { *t.restoration_surface.get(m) as f64 } else { 0.0 };
        p.alpha[0] * der + p.alpha[1] * clr + p.alpha[2] * rs
    }

    pub fn utility_loss(&self, m: SanitizationMode, s: &RoutingState, p: &PolicyProfile) -> f64 {
        let class = s.category.class();
        let t = &self.tables;
        let ev = match (s.exact_value_required, m, s.restoration_authorized) {
            (false, _, _) => 0.0,
            (true, SanitizationMode::Symbolic, true) => t.exact_value_symbolic_authorized as f64,
            (true, m, _) => *t.exact_value.get(m) as f64,
        };
        let sd = t.semantic_drift.get(m)[class.index()] as f64;
        let lat = if s.latency_sensitive { *t.latency.get(m) as f64 } else { 0.0 };
        p.beta[0] * ev + p.beta[1] * sd + p.beta[2] * lat
    }

    pub fn objective(&self, m: SanitizationMode, s: &RoutingState, p: &PolicyProfile) -> f64 {
        self.privacy_loss(m, s, p) + p.lambda * self.utility_loss(m, s, p)
    }

    /// Argmin over the three modes; exact ties resolve in declaration order.
    pub fn select_mode(&self, s: &RoutingState, p: &PolicyProfile) -> SanitizationMode {
        let mut best = SanitizationMode::ALL[0];
        let mut best_score = self.objective(best, s, p);
        for m in &SanitizationMode::ALL[1..] {
            let score = self.objective(*m, s, p);
            if score < best_score {
                best = *m;
                best_score = score;
            }
        }
        best
    }
}
