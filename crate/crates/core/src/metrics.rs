//! Privacy, propagation and utility metrics, and their aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::benchgen::GoldSpan;
use crate::category::PrivacyCategory;
use crate::error::{Error, Result};
use crate::extraction::normalize_surface;
use crate::sim::TaskOutcome;
use crate::text::contains_bounded;

/// Deterministic evaluation seeds.
pub const DEFAULT_SEEDS: [u64; 5] = [17, 29, 43, 71, 101];

/// Gold span indices whose raw surface is readable anywhere in `text`.
pub fn exposed_gold(gold: &[GoldSpan], text: &str) -> Vec<usize> {
    let norm = normalize_surface(text);
    (0..gold.len())
        .filter(|&i| contains_bounded(&norm, &normalize_surface(&gold[i].surface)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerValue {
    pub ratio: f64,
    /// Set for prompts without gold spans, which stay out of macro averages.
    pub excluded: bool,
}

pub fn compute_per(gold: &[GoldSpan], sanitized: &str) -> PerValue {
    if gold.is_empty() {
        return PerValue { ratio: 0.0, excluded: true };
    }
    PerValue { ratio: exposed_gold(gold, sanitized).len() as f64 / gold.len() as f64, excluded: false }
}

/// Mean PER over the prompts that carry gold spans.
pub fn macro_per(values: &[PerValue]) -> f64 {
    let kept: Vec<f64> = values.iter().filter(|v| !v.excluded).map(|v| v.ratio).collect();
    if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// A ratio had a zero denominator and was reported as 0.
    pub undefined: bool,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { None } else { Some(n as f64 / d as f64) };
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let f1 = match (p, r) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Prf {
            precision: p.unwrap_or(0.0),
            recall: r.unwrap_or(0.0),
            f1: f1.unwrap_or(0.0),
            tp,
            fp,
            fn_,
            undefined: p.is_none() || r.is_none(),
        }
    }
}

/// Exact-offset span matching.
pub fn compute_span_prf(detected: &[(usize, usize)], gold: &[(usize, usize)]) -> Prf {
    let tp = detected.iter().filter(|d| gold.contains(d)).count();
    Prf::from_counts(tp, detected.len() - tp, gold.len() - tp)
}

/// Mediated score over raw score.
pub fn compute_upr(raw: f64, mediated: f64) -> Result<f64> {
    if raw <= 0.0 || raw.is_nan() {
        return Err(Error::UndefinedRatio);
    }
    Ok(mediated / raw)
}

/// Agreement with the raw outcome: a 0/1 state match for tool-executing
/// prompts, the fraction of agreeing slots otherwise.
pub fn compute_ac(raw: &TaskOutcome, mediated: &TaskOutcome) -> Result<f64> {
    if raw.slots.len() != mediated.slots.len() {
        return Err(Error::MismatchedOutcomes);
    }
    if raw.is_execution() {
        let same = raw.success == mediated.success && raw.tool_args == mediated.tool_args;
        return Ok(if same { 1.0 } else { 0.0 });
    }
    if raw.slots.is_empty() {
        return Ok(1.0);
    }
    let agree = raw.slots.iter().zip(&mediated.slots).filter(|(a, b)| a.satisfied == b.satisfied).count();
    Ok(agree as f64 / raw.slots.len() as f64)
}

/// Exposed fraction per stage. `None` without gold.
pub fn compute_stage_spe(exposed: [usize; 3], gold: usize) -> Option<[f64; 3]> {
    (gold > 0).then(|| exposed.map(|e| e as f64 / gold as f64))
}

/// Mean and nearest-rank 95th percentile.
pub fn latency_summary(samples_ms: &[f64]) -> (f64, f64) {
    if samples_ms.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
    let mut s = samples_ms.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((0.95 * s.len() as f64).ceil() as usize).clamp(1, s.len());
    (mean, s[rank - 1])
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-category counts inside one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub category: PrivacyCategory,
    pub gold: usize,
    pub exposed: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Everything the aggregator needs from one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub gold: usize,
    pub exposed: usize,
    pub per: PerValue,
    pub prf: Prf,
    pub categories: Vec<CategoryCounts>,
    pub spe: Option<[f64; 3]>,
    pub spe_monotone: bool,
    pub score: f64,
    pub ac: f64,
    pub success: bool,
    pub tokens_needed: usize,
    pub tokens_restored: usize,
    pub protected: usize,
    pub leaked: usize,
    pub propagation_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub profile: String,
    pub restoration: String,
    /// Seed label: a seed number, `mean` or `std`.
    pub seed: String,
    pub group_by: String,
    pub group: String,
    pub prompts: usize,
    pub privacy_bearing: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per: f64,
    pub spe_retrieval: f64,
    pub spe_memory: f64,
    pub spe_tool: f64,
    pub spe_violations: usize,
    pub upr: f64,
    pub ac: f64,
    pub tsr: f64,
    /// Empty when no token reached the tool boundary.
    pub rsr: Option<f64>,
    pub blr: f64,
    pub propagation_risk: f64,
}

pub const REPORT_COLUMNS: [&str; 22] = [
    "method",
    "profile",
    "restoration",
    "seed",
    "group_by",
    "group",
    "prompts",
    "privacy_bearing",
    "precision",
    "recall",
    "f1",
    "per",
    "spe_retrieval",
    "spe_memory",
    "spe_tool",
    "spe_violations",
    "upr",
    "ac",
    "tsr",
    "rsr",
    "blr",
    "propagation_risk",
];

impl MetricReport {
    pub fn csv_fields(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:.4}");
        vec![
            self.method.clone(),
            self.profile.clone(),
            self.restoration.clone(),
            self.seed.clone(),
            self.group_by.clone(),
            self.group.clone(),
            self.prompts.to_string(),
            self.privacy_bearing.to_string(),
            f(self.precision),
            f(self.recall),
            f(self.f1),
            f(self.per),
            f(self.spe_retrieval),
            f(self.spe_memory),
            f(self.spe_tool),
            self.spe_violations.to_string(),
            f(self.upr),
            f(self.ac),
            f(self.tsr),
            self.rsr.map(f).unwrap_or_default(),
            f(self.blr),
            f(self.propagation_risk),
        ]
    }

    fn numeric(&self) -> [f64; 14] {
        [
            self.precision,
            self.recall,
            self.f1,
            self.per,
            self.spe_retrieval,
            self.spe_memory,
            self.spe_tool,
            self.upr,
            self.ac,
            self.tsr,
            self.rsr.unwrap_or(f64::NAN),
            self.blr,
            self.propagation_risk,
            self.spe_violations as f64,
        ]
    }

    /// Mean and standard deviation rows over per-seed reports of one group.
    pub fn seed_summary(rows: &[MetricReport]) -> Option<(MetricReport, MetricReport)> {
        let first = rows.first()?;
        let cols: Vec<[f64; 14]> = rows.iter().map(|r| r.numeric()).collect();
        let stat = |i: usize| {
            let v: Vec<f64> = cols.iter().map(|c| c[i]).filter(|x| !x.is_nan()).collect();
            if v.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_std(&v)
            }
        };
        let build = |pick: fn((f64, f64)) -> f64, label: &str| {
            let v: Vec<f64> = (0..14).map(|i| pick(stat(i))).collect();
            MetricReport {
                seed: label.to_string(),
                prompts: rows.iter().map(|r| r.prompts).sum::<usize>() / rows.len(),
                privacy_bearing: rows.iter().map(|r| r.privacy_bearing).sum::<usize>() / rows.len(),
                precision: v[0],
                recall: v[1],
                f1: v[2],
                per: v[3],
                spe_retrieval: v[4],
                spe_memory: v[5],
                spe_tool: v[6],
                upr: v[7],
                ac: v[8],
                tsr: v[9],
                rsr: (!v[10].is_nan()).then_some(v[10]),
                blr: v[11],
                propagation_risk: v[12],
                spe_violations: v[13].round() as usize,
                ..first.clone()
            }
        };
        Some((build(|s| s.0, "mean"), build(|s| s.1, "std")))
    }
}

/// Labels shared by every row of one aggregation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportLabels {
    pub method: String,
    pub profile: String,
    pub restoration: String,
    pub seed: String,
    pub group_by: String,
    pub group: String,
}

/// Folds episodes into one report. Rates are in [0, 1] except PER, SPE and
/// BLR, which are percentages.
pub fn aggregate<'a>(labels: ReportLabels, episodes: impl IntoIterator<Item = &'a EpisodeMetrics>) -> MetricReport {
    let eps: Vec<&EpisodeMetrics> = episodes.into_iter().collect();
    let n = eps.len();
    let bearing: Vec<&&EpisodeMetrics> = eps.iter().filter(|e| !e.per.excluded).collect();
    let (tp, fp, fn_) = eps.iter().fold((0, 0, 0), |a, e| (a.0 + e.prf.tp, a.1 + e.prf.fp, a.2 + e.prf.fn_));
    let prf = Prf::from_counts(tp, fp, fn_);
    let per = macro_per(&eps.iter().map(|e| e.per).collect::<Vec<_>>());
    let spe: Vec<[f64; 3]> = eps.iter().filter_map(|e| e.spe).collect();
    let spe_mean = |i: usize| if spe.is_empty() { 0.0 } else { spe.iter().map(|s| s[i]).sum::<f64>() / spe.len() as f64 };
    let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| if n == 0 { 0.0 } else { eps.iter().map(|e| f(e)).sum::<f64>() / n as f64 };
    let needed: usize = eps.iter().map(|e| e.tokens_needed).sum();
    let restored: usize = eps.iter().map(|e| e.tokens_restored).sum();
    let protected: usize = eps.iter().map(|e| e.protected).sum();
    let leaked: usize = eps.iter().map(|e| e.leaked).sum();
    MetricReport {
        method: labels.method,
        profile: labels.profile,
        restoration: labels.restoration,
        seed: labels.seed,
        group_by: labels.group_by,
        group: labels.group,
        prompts: n,
        privacy_bearing: bearing.len(),
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        per: 100.0 * per,
        spe_retrieval: 100.0 * spe_mean(0),
        spe_memory: 100.0 * spe_mean(1),
        spe_tool: 100.0 * spe_mean(2),
        spe_violations: eps.iter().filter(|e| !e.spe_monotone).count(),
        upr: if n == 0 { 0.0 } else { compute_upr(n as f64, eps.iter().map(|e| e.score).sum()).unwrap_or(0.0) },
        ac: mean(&|e| e.ac),
        tsr: mean(&|e| if e.success { 1.0 } else { 0.0 }),
        rsr: (needed > 0).then(|| restored as f64 / needed as f64),
        blr: if protected == 0 { 0.0 } else { 100.0 * leaked as f64 / protected as f64 },
        propagation_risk: mean(&|e| e.propagation_risk),
    }
}

/// Category-wise F1 and PER over gold categories present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: PrivacyCategory,
    pub gold: usize,
    pub exposed: usize,
    pub per: f64,
    pub prf: Prf,
}

pub fn category_reports<'a>(episodes: impl IntoIterator<Item = &'a EpisodeMetrics>) -> Vec<CategoryReport> {
    let mut acc: BTreeMap<PrivacyCategory, (usize, usize, usize, usize, usize)> = BTreeMap::new();
    for e in episodes {
        for c in &e.categories {
            let a = acc.entry(c.category).or_default();
            a.0 += c.gold;
            a.1 += c.exposed;
            a.2 += c.tp;
            a.3 += c.fp;
            a.4 += c.fn_;
        }
    }
    acc.into_iter()
        .filter(|(_, a)| a.0 > 0)
        .map(|(category, (gold, exposed, tp, fp, fn_))| CategoryReport {
            category,
            gold,
            exposed,
            per: 100.0 * exposed as f64 / gold as f64,
            prf: Prf::from_counts(tp, fp, fn_),
        })
        .collect()
}
