use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use sts_bench::random_strings;
use sts_core::stringsim::{char_similarity, CharMetric};
use sts_core::termsim::{term_similarity, TermMetric};

fn char_metrics(c: &mut Criterion) {
    let strings = random_strings(64, 80, 1);
    let mut group = c.benchmark_group("char");
    for (name, metric) in [
        ("levenshtein", CharMetric::Levenshtein),
        ("damerau", CharMetric::DamerauLevenshtein),
        ("jaro-winkler", CharMetric::jaro_winkler()),
        ("needleman-wunsch", CharMetric::needleman_wunsch()),
        ("smith-waterman", CharMetric::smith_waterman()),
        ("lcsseq", CharMetric::LcsSeq),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &strings, |b, s| {
            b.iter(|| {
                for pair in s.chunks(2) {
                    black_box(char_similarity(metric, &pair[0], &pair[1]));
                }
            })
        });
    }
    group.finish();
}

fn term_metrics(c: &mut Criterion) {
    let words: Vec<Vec<String>> = random_strings(64, 60, 2)
        .into_iter()
        .map(|s| s.chunks(4).map(|w| w.iter().collect()).collect())
        .collect();
    let mut group = c.benchmark_group("term");
    for metric in TermMetric::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{metric:?}")), &words, |b, w| {
            b.iter(|| {
                for pair in w.chunks(2) {
                    black_box(term_similarity(metric, &pair[0], &pair[1]));
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, char_metrics, term_metrics);
criterion_main!(benches);
