use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privmed_core::benchgen::generate_benchmark;
use privmed_core::harness::{run_prompt, EvalConfig, Pipeline};
use privmed_core::policy::PolicyConfig;
use privmed_core::sim::EdgeRiskModel;
use privmed_core::vault::find_tokens;
use privmed_core::{extract_spans, Boundary, Evaluator, Method, ProfileName, RestorationPolicy, Vault};

fn extraction(c: &mut Criterion) {
    let m = generate_benchmark(17);
    let text = &m.prompts[0].text;
    let none = BTreeSet::new();
    c.bench_function("extract_spans/one_prompt", |b| b.iter(|| extract_spans(black_box(text), 0.55, &none).unwrap()));
}

fn mediation(c: &mut Criterion) {
    let m = generate_benchmark(17);
    let ev = Evaluator::new(EvalConfig::default(), PolicyConfig::shipped()).unwrap();
    let mut g = c.benchmark_group("mediate/manifest");
    g.sample_size(20);
    for name in ["regex-only", "ner-only", "balanced", "aggressive-contextual"] {
        let p = ev.latency_pipeline(name).unwrap();
        g.bench_function(name, |b| {
            b.iter(|| {
                for (i, prompt) in m.prompts.iter().enumerate() {
                    let mut vault = Vault::new(i as u64);
                    let session = vault.open_session();
                    let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
                    black_box(p.mediate(prompt, &mut vault, session, &mut rng).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn episodes(c: &mut Criterion) {
    let m = generate_benchmark(17);
    let policy = PolicyConfig::shipped();
    let uc = Pipeline::for_method(Method::ProposedUtilityConstrained, &policy, policy.profile(ProfileName::Balanced)).unwrap();
    let edges = EdgeRiskModel::default();
    let mut g = c.benchmark_group("episode/manifest");
    g.sample_size(10);
    g.bench_function("utility-constrained", |b| {
        b.iter(|| {
            for (i, p) in m.prompts.iter().enumerate() {
                black_box(run_prompt(&uc, p, m.seed, i as u64, &edges, None).unwrap());
            }
        })
    });
    g.finish();
}

fn vault(c: &mut Criterion) {
    let values: Vec<String> = (0..64).map(|i| format!("NZ{:07}", 3_812_745 + i)).collect();
    c.bench_function("vault/store_restore_64", |b| {
        b.iter_batched(
            || Vault::new(3),
            |mut v| {
                let s = v.open_session();
                let text: String = values
                    .iter()
                    .map(|x| format!("[TOKEN_{}] ", v.store(x, privmed_core::PrivacyCategory::NationalId, s).unwrap()))
                    .collect();
                debug_assert_eq!(find_tokens(&text).len(), values.len());
                let ctx = v.context(Boundary::ToolExec, s, RestorationPolicy::Late);
                black_box(v.restore_entities(&text, &ctx))
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, extraction, mediation, episodes, vault);
criterion_main!(benches);
