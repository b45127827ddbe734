//! Evaluation harness: method roster, per-seed runs, sweeps, probes and
//! latency timing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchgen::probes::{generate_probes, Probe, ProbeFamily};
use crate::benchgen::{generate_benchmark, mix, BenchmarkManifest, PromptInstance};
use crate::category::PrivacyCategory;
use crate::error::{Error, Result};
use crate::extraction::{Detector, DetectorConfig, SpanAnnotation};
use crate::metrics::{
    aggregate, compute_ac, compute_per, compute_span_prf, CategoryCounts, EpisodeMetrics, MetricReport, ReportLabels,
};
use crate::policy::{PolicyConfig, PolicyProfile, ProfileName, SanitizationMode};
use crate::sanitizer::{LdpConfig, MediationResult, Sanitizer, Strategy, TaskContext};
use crate::sim::{run_episode, Boundary, EdgeRiskModel, RestorationPolicy, SimConfig, TaskOutcome, EDGES};
use crate::vault::{AuditEvent, Vault};

/// Baseline and proposed methods, in roster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NoProtection,
    RegexOnly,
    NerOnly,
    GenericDeId,
    EnterpriseStaged,
    ProposedSemantic,
    ProposedUtilityConstrained,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::NoProtection,
        Method::RegexOnly,
        Method::NerOnly,
        Method::GenericDeId,
        Method::EnterpriseStaged,
        Method::ProposedSemantic,
        Method::ProposedUtilityConstrained,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NoProtection => "no-protection",
            Method::RegexOnly => "regex-only",
            Method::NerOnly => "ner-only",
            Method::GenericDeId => "generic-de-id",
            Method::EnterpriseStaged => "enterprise-staged",
            Method::ProposedSemantic => "proposed-semantic",
            Method::ProposedUtilityConstrained => "proposed-utility-constrained",
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            Method::GenericDeId => Strategy::UniformRedaction,
            Method::ProposedSemantic => Strategy::AbstractPreferred,
            Method::ProposedUtilityConstrained => Strategy::Routed,
            _ => Strategy::PlaceholderOnly,
        }
    }

    /// Restoration used when the caller does not override it.
    pub fn default_restoration(self) -> RestorationPolicy {
        match self {
            Method::ProposedSemantic | Method::ProposedUtilityConstrained => RestorationPolicy::Late,
            _ => RestorationPolicy::None,
        }
    }

    /// Detector settings for this method. `None` means no detection.
    pub fn detector_config(self, profile: &PolicyProfile) -> Option<DetectorConfig> {
        let off = DetectorConfig {
            tau: profile.tau,
            high_risk: profile.high_risk.clone(),
            normalize: false,
            rules: false,
            ner: false,
            ner_partial: false,
            context: false,
            visual: false,
            ..DetectorConfig::default()
        };
        match self {
            Method::NoProtection => None,
            Method::RegexOnly => Some(DetectorConfig { rules: true, ..off }),
            Method::NerOnly => Some(DetectorConfig { ner: true, ner_partial: true, high_risk: Default::default(), ..off }),
            Method::GenericDeId => Some(DetectorConfig {
                rules: true,
                ner: true,
                ner_partial: true,
                context: true,
                high_risk: Default::default(),
                ..off
            }),
            Method::EnterpriseStaged => Some(DetectorConfig {
                tau: 0.0,
                rules: true,
                ner: true,
                ner_partial: true,
                context: true,
                ..off
            }),
            Method::ProposedSemantic | Method::ProposedUtilityConstrained => Some(DetectorConfig {
                tau: profile.tau,
                high_risk: profile.high_risk.clone(),
                ..DetectorConfig::default()
            }),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// A configured detector plus sanitizer.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub name: String,
    pub detector: Option<Detector>,
    pub sanitizer: Sanitizer,
    pub profile: PolicyProfile,
    pub strategy: Strategy,
    pub restoration: RestorationPolicy,
}

impl Pipeline {
    pub fn for_method(method: Method, policy: &PolicyConfig, profile: &PolicyProfile) -> Result<Self> {
        Ok(Pipeline {
            name: method.as_str().to_string(),
            detector: method.detector_config(profile).map(Detector::new).transpose()?,
            sanitizer: Sanitizer::new(policy),
            profile: profile.clone(),
            strategy: method.strategy(),
            restoration: method.default_restoration(),
        })
    }

    pub fn custom(name: &str, detector: DetectorConfig, policy: &PolicyConfig, profile: &PolicyProfile, strategy: Strategy) -> Result<Self> {
        Ok(Pipeline {
            name: name.to_string(),
            detector: Some(Detector::new(detector)?),
            sanitizer: Sanitizer::new(policy),
            profile: profile.clone(),
            strategy,
            restoration: RestorationPolicy::Late,
        })
    }

    pub fn with_restoration(mut self, r: RestorationPolicy) -> Self {
        self.restoration = r;
        self
    }

    pub fn with_ldp(mut self, ldp: Option<LdpConfig>) -> Self {
        self.sanitizer = self.sanitizer.with_ldp(ldp);
        self
    }

    pub fn task_context(&self, prompt: &PromptInstance) -> TaskContext {
        TaskContext {
            tool_categories: prompt.tool_categories(),
            has_tool: prompt.tool.is_some(),
            restoration: Some(self.restoration),
            latency_sensitive: false,
        }
    }

    /// Detection followed by sanitization.
    pub fn mediate(
        &self,
        prompt: &PromptInstance,
        vault: &mut Vault,
        session: crate::vault::SessionId,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<SpanAnnotation>, MediationResult)> {
        let Some(det) = &self.detector else {
            return Ok((Vec::new(), MediationResult::identity(&prompt.id, &prompt.text)));
        };
        let visual = prompt.modality == crate::benchgen::Modality::Ocr;
        let spans = det.extract(&prompt.id, &prompt.text, visual)?.spans;
        let task = self.task_context(prompt);
        let m = self.sanitizer.sanitize(
            &prompt.id,
            &prompt.text,
            &spans,
            &self.profile,
            self.strategy,
            &task,
            Some((vault, session)),
            rng,
        )?;
        Ok((spans, m))
    }
}

/// One simulated episode, without raw content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub method: String,
    pub profile: String,
    pub restoration: String,
    pub seed: u64,
    pub prompt_id: String,
    pub template_id: String,
    pub family: String,
    pub category: String,
    pub modality: String,
    pub split: String,
    pub subset: String,
    pub metrics: EpisodeMetrics,
    /// Spans routed to placeholder, abstract and symbolic.
    pub modes: [usize; 3],
    pub stage_exposed: Vec<(Boundary, usize)>,
    /// Gold indices readable at ingress.
    pub ingress_exposed: Vec<usize>,
    pub edges: [bool; 9],
    pub audit: Vec<AuditEvent>,
    pub outcome: TaskOutcome,
    /// Symbolic spans whose tool-boundary restoration matched the original.
    pub round_trips: usize,
    pub symbolic: usize,
}

fn detected_counts(prompt: &PromptInstance, spans: &[SpanAnnotation], exposed: &[usize]) -> Vec<CategoryCounts> {
    let mut acc: BTreeMap<PrivacyCategory, CategoryCounts> = BTreeMap::new();
    fn get(acc: &mut BTreeMap<PrivacyCategory, CategoryCounts>, c: PrivacyCategory) -> &mut CategoryCounts {
        acc.entry(c).or_insert(CategoryCounts { category: c, gold: 0, exposed: 0, tp: 0, fp: 0, fn_: 0 })
    }
    for (i, g) in prompt.gold.iter().enumerate() {
        let c = get(&mut acc, g.category);
        c.gold += 1;
        if exposed.contains(&i) {
            c.exposed += 1;
        }
        if spans.iter().any(|s| s.start == g.start && s.end == g.end) {
            c.tp += 1;
        } else {
            c.fn_ += 1;
        }
    }
    for s in spans {
        if !prompt.gold.iter().any(|g| g.start == s.start && g.end == s.end) {
            get(&mut acc, s.category).fp += 1;
        }
    }
    acc.into_values().collect()
}

/// Runs one prompt end to end. `raw` is the unmediated outcome used for
/// answer consistency; `None` compares the episode with itself.
pub fn run_prompt(
    pipeline: &Pipeline,
    prompt: &PromptInstance,
    seed: u64,
    index: u64,
    edges: &EdgeRiskModel,
    raw: Option<&TaskOutcome>,
) -> Result<EpisodeRecord> {
    let mut vault = Vault::new(mix(seed, index, 0x7A17));
    let session = vault.open_session();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x1D9, index, 0));
    let (spans, mediation) = pipeline.mediate(prompt, &mut vault, session, &mut rng)?;
    let cfg = SimConfig { policy: pipeline.restoration, edges: edges.clone(), seed };
    let ep = run_episode(prompt, &mediation, &cfg, &mut vault, session, pipeline.sanitizer.templates());

    let per = compute_per(&prompt.gold, &mediation.sanitized);
    let ingress = ep.trace.exposed_at(Boundary::Ingress).to_vec();
    let detected: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    let gold: Vec<(usize, usize)> = prompt.gold.iter().map(|g| (g.start, g.end)).collect();
    let ac = compute_ac(raw.unwrap_or(&ep.outcome), &ep.outcome)?;
    let score = if ep.outcome.slots.is_empty() {
        1.0
    } else {
        ep.outcome.slots.iter().filter(|s| s.satisfied).count() as f64 / ep.outcome.slots.len() as f64
    };
    let mut modes = [0usize; 3];
    for r in &mediation.replacements {
        modes[match r.mode {
            SanitizationMode::Placeholder => 0,
            SanitizationMode::Abstract => 1,
            SanitizationMode::Symbolic => 2,
        }] += 1;
    }
    let round_trips = if pipeline.restoration.allows(Boundary::ToolExec) {
        let ctx = vault.context(Boundary::ToolExec, session, pipeline.restoration);
        mediation
            .replacements
            .iter()
            .filter(|r| r.vault_token.is_some())
            .filter(|r| vault.restore_entities(&r.surrogate, &ctx) == r.span.surface)
            .count()
    } else {
        0
    };
    let audit = vault.audit().to_vec();
    Ok(EpisodeRecord {
        method: pipeline.name.clone(),
        profile: pipeline.profile.name.as_str().to_string(),
        restoration: pipeline.restoration.as_str().to_string(),
        seed,
        prompt_id: prompt.id.clone(),
        template_id: prompt.template_id.clone(),
        family: prompt.family.as_str().to_string(),
        category: prompt.category.as_str().to_string(),
        modality: prompt.modality.as_str().to_string(),
        split: prompt.split.as_str().to_string(),
        subset: prompt.subset.as_str().to_string(),
        metrics: EpisodeMetrics {
            gold: prompt.gold.len(),
            exposed: ingress.len(),
            per,
            prf: compute_span_prf(&detected, &gold),
            categories: detected_counts(prompt, &spans, &ingress),
            spe: ep.spe(),
            spe_monotone: ep.spe_monotone(),
            score,
            ac,
            success: ep.outcome.success,
            tokens_needed: ep.tokens_needed,
            tokens_restored: ep.tokens_restored,
            protected: ep.protected,
            leaked: ep.leaked,
            propagation_risk: ep.propagation_risk,
        },
        modes,
        stage_exposed: ep.trace.stages.iter().map(|s| (s.boundary, s.exposed.len())).collect(),
        ingress_exposed: ingress,
        edges: ep.trace.edges,
        audit,
        outcome: ep.outcome,
        round_trips,
        symbolic: modes[2],
    })
}

/// Trace row for export. Carries counts, flags and reading kinds only, never
/// prompt or value text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceExport {
    pub method: String,
    pub restoration: String,
    pub seed: u64,
    pub prompt_id: String,
    pub gold: usize,
    pub stage_exposed: Vec<(Boundary, usize)>,
    pub edges: [bool; 9],
    pub modes: [usize; 3],
    pub slots: Vec<(String, String, bool)>,
    pub success: bool,
    pub protected: usize,
    pub leaked: usize,
    pub propagation_risk: f64,
}

impl From<&EpisodeRecord> for TraceExport {
    fn from(r: &EpisodeRecord) -> Self {
        use crate::sim::Reading;
        TraceExport {
            method: r.method.clone(),
            restoration: r.restoration.clone(),
            seed: r.seed,
            prompt_id: r.prompt_id.clone(),
            gold: r.metrics.gold,
            stage_exposed: r.stage_exposed.clone(),
            edges: r.edges,
            modes: r.modes,
            slots: r
                .outcome
                .slots
                .iter()
                .map(|s| {
                    let kind = match s.reading {
                        Reading::Raw => "RAW",
                        Reading::Placeholder(_) => "PLACEHOLDER",
                        Reading::Token(_) => "TOKEN",
                        Reading::Abstraction(_) => "ABSTRACTION",
                        Reading::Other(_) => "OTHER",
                    };
                    (s.need.as_str().to_string(), kind.to_string(), s.satisfied)
                })
                .collect(),
            success: r.metrics.success,
            protected: r.metrics.protected,
            leaked: r.metrics.leaked,
            propagation_risk: r.metrics.propagation_risk,
        }
    }
}

/// Machine the latency numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostDescriptor {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: String,
    pub build: String,
}

impl HostDescriptor {
    pub fn current() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".to_string());
        HostDescriptor {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            cpu_model,
            build: if cfg!(debug_assertions) { "debug" } else { "release" }.to_string(),
        }
    }
}

/// Evaluation settings shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub profile: ProfileName,
    /// Overrides the restoration of the proposed methods.
    pub restoration: Option<RestorationPolicy>,
    pub ldp: Option<LdpConfig>,
    pub edge_weights: Option<[f64; 9]>,
    pub tau_sweep: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seeds: crate::metrics::DEFAULT_SEEDS.to_vec(),
            methods: Method::ALL.to_vec(),
            profile: ProfileName::Balanced,
            restoration: None,
            ldp: None,
            edge_weights: None,
            tau_sweep: vec![0.80, 0.70, 0.60, 0.50, 0.40, 0.30],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods".into()));
        }
        if let Some(t) = self.tau_sweep.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidThreshold(*t));
        }
        if let Some(l) = &self.ldp {
            crate::sanitizer::ldp::ldp_epsilon(l.keep_probability, l.placeholder_set_size)?;
        }
        Ok(())
    }

    pub fn edges(&self) -> EdgeRiskModel {
        self.edge_weights.map(|weights| EdgeRiskModel { weights }).unwrap_or_default()
    }
}

/// Runs pipelines over benchmark manifests.
pub struct Evaluator {
    pub config: EvalConfig,
    pub policy: PolicyConfig,
}

/// Per-episode records and the reports derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub records: Vec<EpisodeRecord>,
    pub reports: Vec<MetricReport>,
}

/// Grouping dimensions for per-seed reports.
pub const GROUPS: [&str; 5] = ["all", "category", "family", "split", "modality"];

fn group_value<'a>(r: &'a EpisodeRecord, dim: &str) -> &'a str {
    match dim {
        "category" => &r.category,
        "family" => &r.family,
        "split" => &r.split,
        "modality" => &r.modality,
        _ => "all",
    }
}

/// Per-seed reports grouped by every dimension, then mean and std rows over
/// seeds for each (method, group). Input order is preserved.
pub fn build_reports(records: &[EpisodeRecord]) -> Vec<MetricReport> {
    type Key = (String, String, String, String, String);
    let mut order: Vec<Key> = Vec::new();
    let mut buckets: BTreeMap<Key, BTreeMap<u64, Vec<&EpisodeMetrics>>> = BTreeMap::new();
    for r in records {
        for dim in GROUPS {
            let key = (r.method.clone(), r.profile.clone(), r.restoration.clone(), dim.to_string(), group_value(r, dim).to_string());
            let slot = buckets.entry(key.clone()).or_default();
            if slot.is_empty() {
                order.push(key.clone());
            }
            slot.entry(r.seed).or_default().push(&r.metrics);
        }
    }
    order.sort_by_key(|k| {
        let dim = GROUPS.iter().position(|d| *d == k.3).unwrap_or(0);
        let first = order_index(records, &k.0, &k.2);
        (first, dim, k.4.clone())
    });
    let mut out = Vec::new();
    for key in order {
        let per_seed: Vec<MetricReport> = buckets[&key]
            .iter()
            .map(|(seed, eps)| {
                aggregate(
                    ReportLabels {
                        method: key.0.clone(),
                        profile: key.1.clone(),
                        restoration: key.2.clone(),
                        seed: seed.to_string(),
                        group_by: key.3.clone(),
                        group: key.4.clone(),
                    },
                    eps.iter().copied(),
                )
            })
            .collect();
        let summary = MetricReport::seed_summary(&per_seed);
        out.extend(per_seed);
        if let Some((mean, std)) = summary {
            out.push(mean);
            out.push(std);
        }
    }
    out
}

fn order_index(records: &[EpisodeRecord], method: &str, restoration: &str) -> usize {
    records.iter().position(|r| r.method == method && r.restoration == restoration).unwrap_or(usize::MAX)
}

/// Mean row of one method over all prompts.
pub fn headline<'a>(reports: &'a [MetricReport], method: &str) -> Option<&'a MetricReport> {
    reports.iter().find(|r| r.method == method && r.group_by == "all" && r.seed == "mean")
}

/// One point of the threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub profile: String,
    pub named: bool,
    pub per: f64,
    pub upr: f64,
    pub tsr: f64,
    pub per_std: f64,
    pub upr_std: f64,
}

/// Attack and clean-control exposure for one probe family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub family: String,
    pub seeds: usize,
    pub probes: usize,
    pub targeted: usize,
    pub baseline_exposed: usize,
    pub shielded_exposed: usize,
    pub baseline_exposure: f64,
    pub shielded_exposure: f64,
    /// Share of baseline-exposed targets that the shielded pipeline hides.
    pub recovery: Option<f64>,
    pub clean_baseline_exposed: usize,
    pub clean_shielded_exposed: usize,
    pub clean_targeted: usize,
    /// Leak events caused by injected reveal instructions, shielded pipeline.
    pub reveal_leaks: usize,
    pub reveal_denied: usize,
}

/// Per-prompt mediation time for one pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub pipeline: String,
    pub prompts: usize,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

pub const LATENCY_PIPELINES: [&str; 5] = ["raw", "regex-only", "ner-only", "balanced", "aggressive-contextual"];

impl Evaluator {
    pub fn new(config: EvalConfig, policy: PolicyConfig) -> Result<Self> {
        config.validate()?;
        Ok(Evaluator { config, policy })
    }

    pub fn profile(&self) -> &PolicyProfile {
        self.policy.profile(self.config.profile)
    }

    pub fn pipeline(&self, method: Method) -> Result<Pipeline> {
        let mut p = Pipeline::for_method(method, &self.policy, self.profile())?.with_ldp(self.config.ldp.clone());
        if let (Some(r), Method::ProposedSemantic | Method::ProposedUtilityConstrained) = (self.config.restoration, method) {
            p = p.with_restoration(r);
        }
        Ok(p)
    }

    /// Runs `pipeline` over every prompt of `manifest` in parallel. Output
    /// keeps manifest order.
    pub fn run_pipeline(
        &self,
        pipeline: &Pipeline,
        manifest: &BenchmarkManifest,
        raw: Option<&[TaskOutcome]>,
    ) -> Result<Vec<EpisodeRecord>> {
        let edges = self.config.edges();
        manifest
            .prompts
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_prompt(pipeline, p, manifest.seed, i as u64, &edges, raw.map(|r| &r[i])))
            .collect()
    }

    fn raw_outcomes(&self, manifest: &BenchmarkManifest) -> Result<Vec<TaskOutcome>> {
        let raw = self.pipeline(Method::NoProtection)?;
        Ok(self.run_pipeline(&raw, manifest, None)?.into_iter().map(|r| r.outcome).collect())
    }

    /// Records for the configured roster over one manifest.
    pub fn evaluate_manifest(&self, manifest: &BenchmarkManifest) -> Result<Vec<EpisodeRecord>> {
        let raw = self.raw_outcomes(manifest)?;
        let mut out = Vec::new();
        for &m in &self.config.methods {
            let p = self.pipeline(m)?;
            out.extend(self.run_pipeline(&p, manifest, Some(&raw))?);
        }
        Ok(out)
    }

    /// Freshly generated manifests for the configured seeds.
    pub fn manifests(&self) -> Vec<BenchmarkManifest> {
        self.config.seeds.iter().map(|&s| generate_benchmark(s)).collect()
    }

    /// Full roster over every manifest.
    pub fn evaluate(&self, manifests: &[BenchmarkManifest]) -> Result<EvaluationRun> {
        let mut records = Vec::new();
        for manifest in manifests {
            log::info!("seed {}: {} prompts", manifest.seed, manifest.prompts.len());
            records.extend(self.evaluate_manifest(manifest)?);
        }
        check_invariants(&records)?;
        let reports = build_reports(&records);
        Ok(EvaluationRun { records, reports })
    }

    /// The utility-constrained method under each restoration policy.
    pub fn restoration_comparison(&self, manifests: &[BenchmarkManifest]) -> Result<EvaluationRun> {
        let mut records = Vec::new();
        for manifest in manifests {
            let manifest = manifest.clone();
            let raw = self.raw_outcomes(&manifest)?;
            for r in RestorationPolicy::ALL {
                let p = Pipeline::for_method(Method::ProposedUtilityConstrained, &self.policy, self.profile())?
                    .with_ldp(self.config.ldp.clone())
                    .with_restoration(r);
                records.extend(self.run_pipeline(&p, &manifest, Some(&raw))?);
            }
        }
        let reports = build_reports(&records);
        Ok(EvaluationRun { records, reports })
    }

    /// Named profile nearest to `tau`; ties go to the stricter profile.
    pub fn profile_for_tau(&self, tau: f64) -> &PolicyProfile {
        let mut best = self.policy.profile(ProfileName::Strict);
        for name in [ProfileName::Strict, ProfileName::Balanced, ProfileName::Lenient] {
            let p = self.policy.profile(name);
            if (p.tau - tau).abs() < (best.tau - tau).abs() - 1e-9 {
                best = p;
            }
        }
        best
    }

    /// Sweep points: the configured thresholds plus the named profiles,
    /// in descending order.
    pub fn sweep_points(&self) -> Vec<(f64, bool)> {
        let mut pts: Vec<(f64, bool)> = self.config.tau_sweep.iter().map(|&t| (t, false)).collect();
        for name in ProfileName::ALL {
            let t = self.policy.profile(name).tau;
            match pts.iter_mut().find(|p| (p.0 - t).abs() < 1e-9) {
                Some(p) => p.1 = true,
                None => pts.push((t, true)),
            }
        }
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        pts
    }

    /// The utility-constrained method at each sweep point, using the nearest
    /// named profile's coefficients and high-risk set.
    pub fn sweep(&self, manifests: &[BenchmarkManifest]) -> Result<Vec<SweepPoint>> {
        let raws: Vec<Vec<TaskOutcome>> = manifests.iter().map(|m| self.raw_outcomes(m)).collect::<Result<_>>()?;
        let mut out = Vec::new();
        for (tau, named) in self.sweep_points() {
            let base = self.profile_for_tau(tau);
            let profile = base.with_tau(tau)?;
            let mut p = Pipeline::for_method(Method::ProposedUtilityConstrained, &self.policy, &profile)?
                .with_ldp(self.config.ldp.clone());
            p.name = format!("sweep-{tau:.2}");
            let mut per = Vec::new();
            let mut upr = Vec::new();
            let mut tsr = Vec::new();
            for (m, raw) in manifests.iter().zip(&raws) {
                let recs = self.run_pipeline(&p, m, Some(raw))?;
                let rep = aggregate(
                    ReportLabels {
                        method: p.name.clone(),
                        profile: profile.name.as_str().into(),
                        restoration: p.restoration.as_str().into(),
                        seed: m.seed.to_string(),
                        group_by: "all".into(),
                        group: "all".into(),
                    },
                    recs.iter().map(|r| &r.metrics),
                );
                per.push(rep.per);
                upr.push(rep.upr);
                tsr.push(rep.tsr);
            }
            let (per_mean, per_std) = crate::metrics::mean_std(&per);
            let (upr_mean, upr_std) = crate::metrics::mean_std(&upr);
            out.push(SweepPoint {
                tau,
                profile: profile.name.as_str().to_string(),
                named,
                per: per_mean,
                upr: upr_mean,
                tsr: crate::metrics::mean_std(&tsr).0,
                per_std,
                upr_std,
            });
        }
        Ok(out)
    }

    /// Rule-only detection without normalization, placeholders everywhere.
    pub fn probe_baseline(&self) -> Result<Pipeline> {
        Pipeline::for_method(Method::RegexOnly, &self.policy, self.profile()).map(|mut p| {
            p.name = "probe-baseline".into();
            p
        })
    }

    /// The utility-constrained method with normalization.
    pub fn probe_shielded(&self) -> Result<Pipeline> {
        Pipeline::for_method(Method::ProposedUtilityConstrained, &self.policy, self.profile()).map(|mut p| {
            p.name = "probe-shielded".into();
            p
        })
    }

    fn probe_exposure(&self, pipeline: &Pipeline, probes: &[Probe], seed: u64) -> Result<(usize, usize, usize, usize)> {
        let edges = self.config.edges();
        let rows: Vec<(usize, usize, usize, usize)> = probes
            .par_iter()
            .enumerate()
            .map(|(i, pr)| {
                let rec = run_prompt(pipeline, &pr.prompt, seed, 5000 + i as u64, &edges, None)?;
                let hit = pr.targeted.iter().filter(|t| rec.ingress_exposed.contains(t)).count();
                let leaks = rec.audit.iter().filter(|e| e.outcome == crate::vault::AuditOutcome::Leaked).count();
                let denied = rec
                    .audit
                    .iter()
                    .filter(|e| e.outcome == crate::vault::AuditOutcome::Denied && e.boundary == Some(Boundary::Logging))
                    .count();
                Ok((pr.targeted.len(), hit, leaks, denied))
            })
            .collect::<Result<_>>()?;
        Ok(rows.iter().fold((0, 0, 0, 0), |a, r| (a.0 + r.0, a.1 + r.1, a.2 + r.2, a.3 + r.3)))
    }

    /// Baseline against shielded exposure for every probe family.
    pub fn probes(&self, manifests: &[BenchmarkManifest]) -> Result<Vec<ProbeReport>> {
        let base = self.probe_baseline()?;
        let shield = self.probe_shielded()?;
        let mut out = Vec::new();
        for family in ProbeFamily::ALL {
            let mut r = ProbeReport {
                family: family.as_str().to_string(),
                seeds: manifests.len(),
                probes: 0,
                targeted: 0,
                baseline_exposed: 0,
                shielded_exposed: 0,
                baseline_exposure: 0.0,
                shielded_exposure: 0.0,
                recovery: None,
                clean_baseline_exposed: 0,
                clean_shielded_exposed: 0,
                clean_targeted: 0,
                reveal_leaks: 0,
                reveal_denied: 0,
            };
            for manifest in manifests {
                let seed = manifest.seed;
                let set = generate_probes(family, seed, manifest);
                let clean = set.clean_control(manifest);
                let (t, b, _, _) = self.probe_exposure(&base, &set.probes, seed)?;
                let (_, s, leaks, denied) = self.probe_exposure(&shield, &set.probes, seed)?;
                let (ct, cb, _, _) = self.probe_exposure(&base, &clean, seed)?;
                let (_, cs, _, _) = self.probe_exposure(&shield, &clean, seed)?;
                r.probes += set.probes.len();
                r.targeted += t;
                r.baseline_exposed += b;
                r.shielded_exposed += s;
                r.clean_targeted += ct;
                r.clean_baseline_exposed += cb;
                r.clean_shielded_exposed += cs;
                r.reveal_leaks += leaks;
                r.reveal_denied += denied;
            }
            if r.targeted > 0 {
                r.baseline_exposure = 100.0 * r.baseline_exposed as f64 / r.targeted as f64;
                r.shielded_exposure = 100.0 * r.shielded_exposed as f64 / r.targeted as f64;
            }
            if r.baseline_exposed > 0 {
                r.recovery = Some((r.baseline_exposed as f64 - r.shielded_exposed as f64) / r.baseline_exposed as f64);
            }
            out.push(r);
        }
        Ok(out)
    }

    /// Pipelines timed by `latency`.
    pub fn latency_pipeline(&self, name: &str) -> Result<Pipeline> {
        let balanced = self.policy.profile(ProfileName::Balanced);
        match name {
            "raw" => Pipeline::for_method(Method::NoProtection, &self.policy, balanced).map(|mut p| {
                p.name = name.to_string();
                p
            }),
            "regex-only" => Pipeline::for_method(Method::RegexOnly, &self.policy, balanced),
            "ner-only" => Pipeline::for_method(Method::NerOnly, &self.policy, balanced),
            "balanced" => Pipeline::for_method(Method::ProposedUtilityConstrained, &self.policy, balanced).map(|mut p| {
                p.name = name.to_string();
                p
            }),
            "aggressive-contextual" => {
                let strict = self.policy.profile(ProfileName::Strict);
                let det = DetectorConfig {
                    tau: strict.tau,
                    high_risk: strict.high_risk.clone(),
                    context_window: 12,
                    context_second_pass: true,
                    visual_always: true,
                    ..DetectorConfig::default()
                };
                Pipeline::custom(name, det, &self.policy, strict, Strategy::Routed)
            }
            _ => Err(Error::Config(format!("unknown latency pipeline `{name}`"))),
        }
    }

    /// Mediation wall time per prompt, median over `reps` runs. Runs
    /// sequentially.
    pub fn latency(&self, manifest: &BenchmarkManifest, reps: usize) -> Result<Vec<LatencyReport>> {
        let reps = reps.max(1);
        let pipelines: Vec<Pipeline> = LATENCY_PIPELINES.iter().map(|n| self.latency_pipeline(n)).collect::<Result<_>>()?;
        let mut samples: Vec<Vec<Vec<f64>>> = vec![vec![Vec::with_capacity(reps); manifest.prompts.len()]; pipelines.len()];
        // Interleave pipelines so drift in machine load hits each equally.
        for _ in 0..reps {
            for (pi, p) in pipelines.iter().enumerate() {
                for (i, prompt) in manifest.prompts.iter().enumerate() {
                    let mut vault = Vault::new(mix(manifest.seed, i as u64, 0x7A17));
                    let session = vault.open_session();
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(manifest.seed, i as u64, 1));
                    let t = Instant::now();
                    let r = p.mediate(prompt, &mut vault, session, &mut rng)?;
                    let ms = t.elapsed().as_secs_f64() * 1e3;
                    std::hint::black_box(r);
                    samples[pi][i].push(ms);
                }
            }
        }
        Ok(pipelines
            .iter()
            .zip(samples)
            .map(|(p, per_prompt)| {
                let medians: Vec<f64> = per_prompt
                    .into_iter()
                    .map(|mut s| {
                        s.sort_by(f64::total_cmp);
                        s[s.len() / 2]
                    })
                    .collect();
                let (mean_ms, p95_ms) = crate::metrics::latency_summary(&medians);
                LatencyReport { pipeline: p.name.clone(), prompts: medians.len(), repetitions: reps, mean_ms, p95_ms }
            })
            .collect())
    }
}

/// Checks run invariants: stage containment under NONE and LATE, and
/// byte-exact symbolic round trips when the tool boundary is authorized.
pub fn check_invariants(records: &[EpisodeRecord]) -> Result<()> {
    for r in records {
        if r.restoration != RestorationPolicy::Early.as_str() && !r.metrics.spe_monotone {
            return Err(Error::Invariant(format!("{} {} seed {}: stage exposure grew", r.method, r.prompt_id, r.seed)));
        }
        if r.restoration != RestorationPolicy::None.as_str() && r.round_trips != r.symbolic {
            return Err(Error::Invariant(format!("{} {} seed {}: symbolic round trip failed", r.method, r.prompt_id, r.seed)));
        }
    }
    Ok(())
}

/// Audit rows of a run: one line per event, tagged with method, seed and
/// prompt.
pub fn audit_rows(records: &[EpisodeRecord]) -> Vec<[String; 7]> {
    records
        .iter()
        .flat_map(|r| {
            r.audit.iter().map(move |e| {
                [
                    r.method.clone(),
                    r.seed.to_string(),
                    r.prompt_id.clone(),
                    e.tick.to_string(),
                    e.token.clone(),
                    e.boundary.map(|b| b.as_str().to_string()).unwrap_or_default(),
                    e.outcome.as_str().to_string(),
                ]
            })
        })
        .collect()
}

/// Edge labels in `EDGES` order.
pub fn edge_names() -> [String; 9] {
    EDGES.map(|(a, b)| format!("{}>{}", a.as_str(), b.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn evaluator(seeds: Vec<u64>) -> Evaluator {
        Evaluator::new(EvalConfig { seeds, ..EvalConfig::default() }, PolicyConfig::shipped()).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("presidio".parse::<Method>().is_err());
    }

    #[test]
    fn sweep_points_include_named_profiles() {
        let ev = evaluator(vec![17]);
        let pts = ev.sweep_points();
        let taus: Vec<f64> = pts.iter().map(|p| p.0).collect();
        assert_eq!(taus, vec![0.80, 0.70, 0.60, 0.55, 0.50, 0.40, 0.30]);
        let named: Vec<f64> = pts.iter().filter(|p| p.1).map(|p| p.0).collect();
        assert_eq!(named, vec![0.70, 0.55, 0.40]);
    }

    #[test]
    fn nearest_profile_per_threshold() {
        let ev = evaluator(vec![17]);
        let name = |t| ev.profile_for_tau(t).name;
        assert_eq!(name(0.80), ProfileName::Lenient);
        assert_eq!(name(0.60), ProfileName::Balanced);
        assert_eq!(name(0.50), ProfileName::Balanced);
        assert_eq!(name(0.30), ProfileName::Strict);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = EvalConfig { tau_sweep: vec![1.5], ..EvalConfig::default() };
        assert!(Evaluator::new(bad, PolicyConfig::shipped()).is_err());
        let empty = EvalConfig { seeds: vec![], ..EvalConfig::default() };
        assert!(Evaluator::new(empty, PolicyConfig::shipped()).is_err());
        let ldp = EvalConfig { ldp: Some(LdpConfig { keep_probability: 1.0, placeholder_set_size: 10 }), ..EvalConfig::default() };
        assert!(Evaluator::new(ldp, PolicyConfig::shipped()).is_err());
    }

    #[test]
    fn runs_are_repeatable_and_ordered() {
        let ev = evaluator(vec![29]);
        let m = generate_benchmark(29);
        let p = ev.pipeline(Method::ProposedUtilityConstrained).unwrap();
        let a = ev.run_pipeline(&p, &m, None).unwrap();
        let b = ev.run_pipeline(&p, &m, None).unwrap();
        assert_eq!(a, b);
        let ids: Vec<&str> = a.iter().map(|r| r.prompt_id.as_str()).collect();
        let expect: Vec<&str> = m.prompts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, expect);
        check_invariants(&a).unwrap();
    }

    #[test]
    fn reports_carry_seed_rows_then_summary() {
        let ev = evaluator(vec![17, 43]);
        let m = generate_benchmark(17);
        let mut recs = ev.run_pipeline(&ev.pipeline(Method::RegexOnly).unwrap(), &m, None).unwrap();
        let copy: Vec<EpisodeRecord> = recs.iter().cloned().map(|r| EpisodeRecord { seed: 43, ..r }).collect();
        recs.extend(copy);
        let reps = build_reports(&recs);
        let all: Vec<&MetricReport> = reps.iter().filter(|r| r.group_by == "all").collect();
        let seeds: Vec<&str> = all.iter().map(|r| r.seed.as_str()).collect();
        assert_eq!(seeds, vec!["17", "43", "mean", "std"]);
        assert_eq!(all[0].per, all[2].per);
        assert!(all[3].per.abs() < 1e-12);
        assert_eq!(reps.iter().filter(|r| r.group_by == "category" && r.seed == "mean").count(), 8);
    }

    #[test]
    fn latency_pipelines_resolve() {
        let ev = evaluator(vec![17]);
        for n in LATENCY_PIPELINES {
            assert_eq!(ev.latency_pipeline(n).unwrap().name, n);
        }
        assert!(ev.latency_pipeline("fast").is_err());
    }
}
