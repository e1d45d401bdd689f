use std::path::Path;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weat_core::eval::fleiss_kappa;
use weat_core::{
    build_round_prompt, cosine_similarity, default_config, import_source, parse_line_explanations,
    GenerationTranscript, RawCompletion, WorkedExample,
};

const VOCAB: [&str; 12] = [
    "the", "loop", "declares", "variable", "array", "index", "prints", "value", "returns", "sum", "max", "line",
];

fn text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
}

fn fixture(name: &str) -> WorkedExample {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/examples").join(name);
    let read = |file: &str| std::fs::read_to_string(dir.join(file)).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&read("meta.json")).unwrap();
    let field = |key: &str| meta[key].as_str().unwrap().to_owned();
    let now = Utc.with_ymd_and_hms(2024, 5, 1, 9, 0, 0).unwrap();
    import_source(&field("title"), &field("description"), &read("source.java"), "java", now)
        .unwrap()
        .with_id(field("id"))
}

fn cosine(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, b) = (text(&mut rng, 400), text(&mut rng, 400));
    c.bench_function("cosine_similarity/400 words", |bench| {
        bench.iter(|| cosine_similarity(black_box(&a), black_box(&b)))
    });
}

fn kappa(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let counts: Vec<Vec<u64>> = (0..45)
        .map(|_| {
            let mut row = vec![0; 3];
            for _ in 0..15 {
                row[rng.gen_range(0..3)] += 1;
            }
            row
        })
        .collect();
    c.bench_function("fleiss_kappa/45x15x3", |bench| bench.iter(|| fleiss_kappa(black_box(&counts)).unwrap()));
}

fn parse(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let response = (1..=30)
        .map(|n| format!("{n}: {}", text(&mut rng, 20)))
        .collect::<Vec<_>>()
        .join("\n");
    let raw = RawCompletion {
        round: 1,
        request_digest: String::new(),
        response_text: response,
        latency: Duration::ZERO,
        token_counts: None,
    };
    c.bench_function("parse_line_explanations/30 lines", |bench| {
        bench.iter(|| parse_line_explanations(black_box(&raw), 30).unwrap())
    });
}

fn prompt(c: &mut Criterion) {
    let example = fixture("PointTester");
    let config = default_config();
    let transcript = GenerationTranscript::new(&example.id);
    c.bench_function("build_round_prompt/PointTester round 1", |bench| {
        bench.iter(|| build_round_prompt(black_box(&example), &config, &transcript).unwrap().render())
    });
}

criterion_group!(benches, cosine, kappa, parse, prompt);
criterion_main!(benches);
