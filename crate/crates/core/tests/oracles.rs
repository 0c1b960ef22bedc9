mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sts_core::knowsim::{synset_similarity, KnowMetric, Taxonomy, VIRTUAL_ROOT};
use sts_core::stringsim::*;
use sts_core::termsim::{term_similarity, TermMetric};
use sts_core::vecspace::{build_hal_from_text, HalParams};

const ALPHABET: [char; 4] = ['a', 'b', 'c', 'd'];

#[test]
fn dynamic_programs_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let soft = AlignmentScores {
        matched: 1.0,
        mismatch: 0.0,
        gap: -1.0,
    };
    for _ in 0..300 {
        let a = random_string(&mut rng, 7, &ALPHABET);
        let b = random_string(&mut rng, 7, &ALPHABET);
        assert_eq!(levenshtein(&a, &b), edit_distance(&a, &b), "{a:?} {b:?}");
        assert_eq!(damerau_levenshtein(&a, &b), osa_distance(&a, &b), "{a:?} {b:?}");
        assert_eq!(lcs_subsequence(&a, &b), longest_common_subsequence(&a, &b));
        assert_eq!(lcs_substring(&a, &b), longest_common_substring(&a, &b));
        for s in [AlignmentScores::default(), soft] {
            assert_eq!(needleman_wunsch(&a, &b, s), global_alignment(&a, &b, s.matched, s.mismatch, s.gap));
            assert_eq!(smith_waterman(&a, &b, s), local_alignment(&a, &b, s.matched, s.mismatch, s.gap));
        }
    }
}

#[test]
fn pinned_string_values() {
    let s = |m, a, b| str_similarity(m, a, b);
    assert!((s(CharMetric::Levenshtein, "kitten", "sitting") - 4.0 / 7.0).abs() < 1e-12);
    assert!((s(CharMetric::Jaro, "martha", "marhta") - 17.0 / 18.0).abs() < 1e-12);
    assert!((s(CharMetric::jaro_winkler(), "martha", "marhta") - 0.9611).abs() < 1e-4);
    assert_eq!(s(CharMetric::DamerauLevenshtein, "ab", "ba"), 0.5);
    assert!((s(CharMetric::LcsSeq, "abcbdab", "bdcaba") - 4.0 / 7.0).abs() < 1e-12);
    assert_eq!(s(CharMetric::LcsStr, "ababc", "abcba"), 0.6);
    assert_eq!(s(CharMetric::smith_waterman(), "abcxyz", "xyzabc"), 0.5);
}

#[test]
fn term_metric_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vocab: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
    for _ in 0..500 {
        let pick = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let s = random_string(rng, 6, &['0', '1', '2', '3', '4', '5', '6', '7']);
            s.iter().map(|c| vocab[c.to_digit(10).unwrap() as usize].clone()).collect()
        };
        let (a, b) = (pick(&mut rng), pick(&mut rng));
        let m = |metric| term_similarity(metric, &a, &b);
        let eps = 1e-12;
        assert!(m(TermMetric::Overlap) + eps >= m(TermMetric::Ochiai));
        assert!(m(TermMetric::Ochiai) + eps >= m(TermMetric::Jaccard));
        assert!(m(TermMetric::SorensenDice) + eps >= m(TermMetric::Jaccard));
    }
}

#[test]
fn hal_matches_window_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..10 {
        let corpus = random_corpus(&mut rng, 50);
        let window = 1 + case % 4;
        let min_count = 1 + case % 2;
        let params = HalParams {
            window,
            min_count,
            max_vocab: 5,
        };
        let oracle = hal_oracle(&corpus, window, min_count, 5);
        let Ok(model) = build_hal_from_text(&corpus, params) else {
            assert!(oracle.tokens.is_empty());
            continue;
        };
        assert_eq!(model.tokens(), oracle.tokens.as_slice());
        for (i, t) in oracle.tokens.iter().enumerate() {
            let v = model.vector(t).unwrap();
            let dense: Vec<f64> = (0..2 * oracle.tokens.len() as u32).map(|k| v.get(k)).collect();
            assert_eq!(dense, oracle.rows[i], "token {t} in case {case}");
        }
    }
}

#[test]
fn taxonomy_matches_all_pairs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let edges = random_dag(&mut rng, 12);
        let t = Taxonomy::from_edges::<String>(&edges, &[]).unwrap();
        let o = taxonomy_oracle(&edges, VIRTUAL_ROOT);
        for (i, a) in o.names.iter().enumerate() {
            for (j, b) in o.names.iter().enumerate() {
                let got = |m| synset_similarity(m, &t, a, b).unwrap();
                assert!((got(KnowMetric::Path) - o.path[i][j]).abs() < 1e-12);
                assert!((got(KnowMetric::WuPalmer) - o.wu_palmer[i][j]).abs() < 1e-12, "{a} {b} {edges:?}");
                assert!((got(KnowMetric::LeacockChodorow) - o.lch[i][j]).abs() < 1e-12);
            }
        }
    }
}
