//! Batch runner: benchmark generation, evaluation, sweeps, probes, latency
//! and report assembly.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use privmed_core::benchgen::{generate_benchmark, AccountingReport, BenchmarkManifest};
use privmed_core::harness::{
    audit_rows, EvalConfig, Evaluator, HostDescriptor, LatencyReport, Method, ProbeReport, SweepPoint, TraceExport,
};
use privmed_core::metrics::{category_reports, REPORT_COLUMNS};
use privmed_core::policy::{PolicyConfig, ProfileName};
use privmed_core::{MetricReport, RestorationPolicy};

#[derive(Parser, Debug)]
#[command(name = "privmed", version, about = "Prompt privacy mediation benchmark runner")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Defaults to `runs/default`.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated roster subset.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// LENIENT, BALANCED or STRICT.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// NONE, LATE or EARLY for the proposed methods.
    #[arg(long, global = true)]
    restoration: Option<String>,
    /// Comma-separated sweep thresholds.
    #[arg(long, global = true, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write benchmark manifests, accounting tables and split cards.
    Generate,
    /// Run the method roster over the manifests.
    Evaluate {
        /// Also write per-episode traces.
        #[arg(long)]
        traces: bool,
    },
    /// Threshold sweep of the utility-constrained method.
    Sweep,
    /// Adversarial probe families against baseline and shielded pipelines.
    Probe,
    /// Mediation-only timing.
    Latency {
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Collect written outputs into report.md.
    Report,
}

/// File configuration. Flags override it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    out: Option<PathBuf>,
    /// Replacement for the shipped policy tables.
    policy: Option<PathBuf>,
    eval: EvalConfig,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Invariant(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
            Failure::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

fn exit_code(e: &anyhow::Error) -> u8 {
    use privmed_core::Error as E;
    for cause in e.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Config(_) => 1,
                Failure::Io(_) => 2,
                Failure::Invariant(_) => 3,
            };
        }
        if let Some(c) = cause.downcast_ref::<E>() {
            return match c {
                E::Io(_) | E::Json(_) => 2,
                E::Invariant(_) | E::IncompleteManifest(_) => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 1;
        }
    }
    3
}

struct Ctx {
    out: PathBuf,
    evaluator: Evaluator,
}

fn load(cli: &Cli) -> anyhow::Result<Ctx> {
    let mut rc = match &cli.config {
        Some(p) => {
            let src = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<RunConfig>(&src).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(s) = &o.seeds {
        rc.eval.seeds = s.clone();
    }
    if let Some(ms) = &o.methods {
        rc.eval.methods = ms.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?;
    }
    if let Some(p) = &o.profile {
        rc.eval.profile = p.parse::<ProfileName>()?;
    }
    if let Some(r) = &o.restoration {
        rc.eval.restoration = Some(r.parse::<RestorationPolicy>()?);
    }
    if let Some(t) = &o.taus {
        rc.eval.tau_sweep = t.clone();
    }
    let policy = match &rc.policy {
        Some(p) => {
            let src = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            PolicyConfig::parse(&src)?
        }
        None => PolicyConfig::shipped(),
    };
    let out = cli.out.clone().or(rc.out.clone()).unwrap_or_else(|| PathBuf::from("runs/default"));
    Ok(Ctx { out, evaluator: Evaluator::new(rc.eval, policy)? })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn manifest_path(out: &Path, seed: u64) -> PathBuf {
    out.join("manifests").join(format!("seed-{seed}.jsonl"))
}

fn load_manifests(ctx: &Ctx) -> anyhow::Result<Vec<BenchmarkManifest>> {
    ctx.evaluator
        .config
        .seeds
        .iter()
        .map(|&seed| {
            let p = manifest_path(&ctx.out, seed);
            let src = fs::read_to_string(&p)
                .map_err(|e| Failure::Io(format!("missing manifest {} ({e}); run `generate` first", p.display())))?;
            let m = BenchmarkManifest::from_jsonl(seed, &src)?;
            m.check_offsets()?;
            Ok(m)
        })
        .collect()
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> anyhow::Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| Failure::Io(e.to_string()))?)
}

fn reports_csv(reports: &[MetricReport]) -> anyhow::Result<Vec<u8>> {
    csv_bytes(&REPORT_COLUMNS, reports.iter().map(|r| r.csv_fields()))
}

fn cmd_generate(ctx: &Ctx) -> anyhow::Result<()> {
    for &seed in &ctx.evaluator.config.seeds {
        let m = generate_benchmark(seed);
        let acc = AccountingReport::from_manifest(&m);
        acc.verify().map_err(|e| Failure::Invariant(format!("seed {seed}: {e}")))?;
        m.check_offsets()?;
        write(&manifest_path(&ctx.out, seed), m.to_jsonl()?)?;
        write(&ctx.out.join("manifests").join(format!("seed-{seed}.accounting.csv")), acc.to_csv())?;
        write(&ctx.out.join("manifests").join(format!("seed-{seed}.splits.txt")), m.split_card())?;
        println!("seed {seed}: {} prompts", m.prompts.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    version: &'a str,
    config: &'a EvalConfig,
    headline: Vec<&'a MetricReport>,
    restoration: Vec<&'a MetricReport>,
    categories: Vec<CategoryRow>,
}

#[derive(Serialize)]
struct CategoryRow {
    method: String,
    category: String,
    gold: usize,
    exposed: usize,
    per: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn cmd_evaluate(ctx: &Ctx, traces: bool) -> anyhow::Result<()> {
    let manifests = load_manifests(ctx)?;
    let ev = &ctx.evaluator;
    let run = ev.evaluate(&manifests).map_err(|e| Failure::Invariant(e.to_string()))?;
    let restore = ev.restoration_comparison(&manifests)?;

    let mut categories = Vec::new();
    for m in &ev.config.methods {
        let recs = run.records.iter().filter(|r| r.method == m.as_str()).map(|r| &r.metrics);
        for c in category_reports(recs) {
            categories.push(CategoryRow {
                method: m.as_str().to_string(),
                category: c.category.as_str().to_string(),
                gold: c.gold,
                exposed: c.exposed,
                per: c.per,
                precision: c.prf.precision,
                recall: c.prf.recall,
                f1: c.prf.f1,
            });
        }
    }

    let all = |r: &&MetricReport| r.group_by == "all";
    write(&ctx.out.join("reports.csv"), reports_csv(&run.reports)?)?;
    let summary: Vec<MetricReport> = run.reports.iter().filter(all).cloned().collect();
    write(&ctx.out.join("summary.csv"), reports_csv(&summary)?)?;
    let restoration: Vec<MetricReport> = restore.reports.iter().filter(all).cloned().collect();
    write(&ctx.out.join("restoration.csv"), reports_csv(&restoration)?)?;
    write(
        &ctx.out.join("categories.csv"),
        csv_bytes(
            &["method", "category", "gold", "exposed", "per", "precision", "recall", "f1"],
            categories.iter().map(|c| {
                vec![
                    c.method.clone(),
                    c.category.clone(),
                    c.gold.to_string(),
                    c.exposed.to_string(),
                    format!("{:.4}", c.per),
                    format!("{:.4}", c.precision),
                    format!("{:.4}", c.recall),
                    format!("{:.4}", c.f1),
                ]
            }),
        )?,
    )?;
    write(
        &ctx.out.join("audit.csv"),
        csv_bytes(&["method", "seed", "prompt_id", "tick", "token", "boundary", "outcome"], audit_rows(&run.records))?,
    )?;
    if traces {
        let mut buf = String::new();
        for r in &run.records {
            buf.push_str(&serde_json::to_string(&TraceExport::from(r))?);
            buf.push('\n');
        }
        write(&ctx.out.join("traces.jsonl"), buf)?;
    }
    let doc = EvaluationSummary {
        version: privmed_core::benchgen::MANIFEST_VERSION,
        config: &ev.config,
        headline: run.reports.iter().filter(|r| r.group_by == "all" && r.seed == "mean").collect(),
        restoration: restore.reports.iter().filter(|r| r.group_by == "all" && r.seed == "mean").collect(),
        categories,
    };
    write(&ctx.out.join("reports.json"), serde_json::to_string_pretty(&doc)?)?;

    println!("{:<30} {:>7} {:>6} {:>6} {:>6} {:>6}", "method", "PER", "AC", "TSR", "UPR", "BLR");
    for r in &doc.headline {
        println!("{:<30} {:>7.2} {:>6.3} {:>6.3} {:>6.3} {:>6.2}", r.method, r.per, r.ac, r.tsr, r.upr, r.blr);
    }
    Ok(())
}

fn cmd_sweep(ctx: &Ctx) -> anyhow::Result<()> {
    let manifests = load_manifests(ctx)?;
    let pts = ctx.evaluator.sweep(&manifests)?;
    write(
        &ctx.out.join("sweep.csv"),
        csv_bytes(
            &["tau", "profile", "named", "per", "per_std", "upr", "upr_std", "tsr"],
            pts.iter().map(|p| {
                vec![
                    format!("{:.2}", p.tau),
                    p.profile.clone(),
                    p.named.to_string(),
                    format!("{:.4}", p.per),
                    format!("{:.4}", p.per_std),
                    format!("{:.4}", p.upr),
                    format!("{:.4}", p.upr_std),
                    format!("{:.4}", p.tsr),
                ]
            }),
        )?,
    )?;
    write(&ctx.out.join("sweep.json"), serde_json::to_string_pretty(&pts)?)?;
    for p in &pts {
        println!("tau {:.2} {:<8} PER {:6.2} UPR {:.3} TSR {:.3}", p.tau, p.profile, p.per, p.upr, p.tsr);
    }
    Ok(())
}

fn cmd_probe(ctx: &Ctx) -> anyhow::Result<()> {
    let manifests = load_manifests(ctx)?;
    let rows = ctx.evaluator.probes(&manifests)?;
    let pct = |x: Option<f64>| x.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_default();
    write(
        &ctx.out.join("probes.csv"),
        csv_bytes(
            &[
                "family",
                "probes",
                "targeted",
                "baseline_exposure",
                "shielded_exposure",
                "recovery",
                "clean_baseline_exposed",
                "clean_shielded_exposed",
                "reveal_leaks",
                "reveal_denied",
            ],
            rows.iter().map(|r| {
                vec![
                    r.family.clone(),
                    r.probes.to_string(),
                    r.targeted.to_string(),
                    format!("{:.2}", r.baseline_exposure),
                    format!("{:.2}", r.shielded_exposure),
                    pct(r.recovery),
                    r.clean_baseline_exposed.to_string(),
                    r.clean_shielded_exposed.to_string(),
                    r.reveal_leaks.to_string(),
                    r.reveal_denied.to_string(),
                ]
            }),
        )?,
    )?;
    write(&ctx.out.join("probes.json"), serde_json::to_string_pretty(&rows)?)?;
    for r in &rows {
        println!(
            "{:<20} baseline {:6.2}% shielded {:6.2}% recovery {}",
            r.family,
            r.baseline_exposure,
            r.shielded_exposure,
            pct(r.recovery)
        );
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LatencyDoc {
    host: HostDescriptor,
    seed: u64,
    rows: Vec<LatencyReport>,
}

fn cmd_latency(ctx: &Ctx, reps: usize) -> anyhow::Result<()> {
    let manifests = load_manifests(ctx)?;
    let m = &manifests[0];
    let rows = ctx.evaluator.latency(m, reps)?;
    let doc = LatencyDoc { host: HostDescriptor::current(), seed: m.seed, rows };
    write(
        &ctx.out.join("latency.csv"),
        csv_bytes(
            &["pipeline", "prompts", "repetitions", "mean_ms", "p95_ms"],
            doc.rows.iter().map(|r| {
                vec![
                    r.pipeline.clone(),
                    r.prompts.to_string(),
                    r.repetitions.to_string(),
                    format!("{:.5}", r.mean_ms),
                    format!("{:.5}", r.p95_ms),
                ]
            }),
        )?,
    )?;
    write(&ctx.out.join("latency.json"), serde_json::to_string_pretty(&doc)?)?;
    println!("host: {} {} x{} {}", doc.host.os, doc.host.arch, doc.host.logical_cpus, doc.host.cpu_model);
    for r in &doc.rows {
        println!("{:<24} mean {:.4} ms  p95 {:.4} ms", r.pipeline, r.mean_ms, r.p95_ms);
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Option<T>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(serde_json::from_str(&s).with_context(|| path.display().to_string())?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Failure::Io(format!("{}: {e}", path.display())).into()),
    }
}

#[derive(Deserialize)]
struct EvaluationDoc {
    headline: Vec<MetricReport>,
    restoration: Vec<MetricReport>,
}

fn cmd_report(ctx: &Ctx) -> anyhow::Result<()> {
    use std::fmt::Write;
    let mut md = String::from("# Run report\n");
    let mut found = false;
    if let Some(doc) = read_json::<EvaluationDoc>(&ctx.out.join("reports.json"))? {
        found = true;
        md.push_str("\n## Roster\n\n| method | PER % | SPE ret/mem/tool % | AC | TSR | UPR | F1 |\n|---|---|---|---|---|---|---|\n");
        for r in &doc.headline {
            let _ = writeln!(
                md,
                "| {} | {:.2} | {:.1}/{:.1}/{:.1} | {:.3} | {:.3} | {:.3} | {:.3} |",
                r.method, r.per, r.spe_retrieval, r.spe_memory, r.spe_tool, r.ac, r.tsr, r.upr, r.f1
            );
        }
        md.push_str("\n## Restoration timing\n\n| policy | TSR | RSR | BLR % |\n|---|---|---|---|\n");
        for r in &doc.restoration {
            let rsr = r.rsr.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(md, "| {} | {:.3} | {} | {:.2} |", r.restoration, r.tsr, rsr, r.blr);
        }
    }
    if let Some(pts) = read_json::<Vec<SweepPoint>>(&ctx.out.join("sweep.json"))? {
        found = true;
        md.push_str("\n## Threshold sweep\n\n| tau | profile | PER % | UPR | TSR |\n|---|---|---|---|---|\n");
        for p in &pts {
            let mark = if p.named { " (named)" } else { "" };
            let _ = writeln!(md, "| {:.2}{} | {} | {:.2} | {:.3} | {:.3} |", p.tau, mark, p.profile, p.per, p.upr, p.tsr);
        }
    }
    if let Some(rows) = read_json::<Vec<ProbeReport>>(&ctx.out.join("probes.json"))? {
        found = true;
        md.push_str("\n## Probes\n\n| family | baseline % | shielded % | recovery % |\n|---|---|---|---|\n");
        for r in &rows {
            let rec = r.recovery.map(|v| format!("{:.1}", 100.0 * v)).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(md, "| {} | {:.2} | {:.2} | {} |", r.family, r.baseline_exposure, r.shielded_exposure, rec);
        }
    }
    if let Some(doc) = read_json::<LatencyDoc>(&ctx.out.join("latency.json"))? {
        found = true;
        let _ = write!(
            md,
            "\n## Latency\n\nHost: {} {}, {} logical CPUs, {}, {} build.\n\n| pipeline | mean ms | p95 ms |\n|---|---|---|\n",
            doc.host.os, doc.host.arch, doc.host.logical_cpus, doc.host.cpu_model, doc.host.build
        );
        for r in &doc.rows {
            let _ = writeln!(md, "| {} | {:.4} | {:.4} |", r.pipeline, r.mean_ms, r.p95_ms);
        }
    }
    if !found {
        return Err(Failure::Io(format!("no outputs under {}", ctx.out.display())).into());
    }
    write(&ctx.out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let ctx = load(cli)?;
    match &cli.command {
        Command::Generate => cmd_generate(&ctx),
        Command::Evaluate { traces } => cmd_evaluate(&ctx, *traces),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Probe => cmd_probe(&ctx),
        Command::Latency { reps } => cmd_latency(&ctx, *reps),
        Command::Report => cmd_report(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
