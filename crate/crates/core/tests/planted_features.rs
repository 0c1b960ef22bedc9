mod common;

use common::{planted_table, PLANTED};
use sts_core::abcopt::{evaluate_decoded, optimize_model, AbcConfig, Decoded, ModelFamily, SearchSpace};
use sts_core::ModelKind;

fn subset_fitness(mask: u32, table: &sts_core::FeatureTable, cv: &sts_core::eval::CvPlan) -> f64 {
    let decoded = Decoded {
        features: (0..10).filter(|i| mask >> i & 1 == 1).map(|i| (i as usize, 0)).collect(),
        hyperparams: Default::default(),
        kind: ModelKind::Linear,
    };
    evaluate_decoded(&decoded, table, cv, 0)
}

#[test]
fn exhaustive_search_prefers_planted_features() {
    let (table, cv) = planted_table(300, 1);
    let (best_mask, best) = (1u32..1024)
        .map(|m| (m, subset_fitness(m, &table, &cv)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    for f in PLANTED {
        assert_eq!(best_mask >> f & 1, 1, "best mask {best_mask:b}");
    }
    let planted_mask = PLANTED.iter().fold(0u32, |m, f| m | 1 << f);
    let best_without = (1u32..1024)
        .filter(|m| m & planted_mask != planted_mask)
        .map(|m| subset_fitness(m, &table, &cv))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best - best_without > 0.02, "{best} vs {best_without}");
}

#[test]
fn colony_recovers_planted_features() {
    let (table, cv) = planted_table(300, 2);
    let space = SearchSpace::new(table.config_counts(), ModelFamily::Linear).unwrap();
    let cfg = AbcConfig {
        n_sources: 20,
        iterations: 15,
        seed: 4,
        ..AbcConfig::default()
    };
    let (run, decoded) = optimize_model(&cfg, &space, &table, &cv, 0).unwrap();
    let chosen: Vec<usize> = decoded.features.iter().map(|f| f.0).collect();
    assert!(PLANTED.iter().all(|f| chosen.contains(f)), "{chosen:?}");
    assert_eq!(run.evaluations, cfg.expected_evaluations(run.scouts));
    assert!(run.history.windows(2).all(|w| w[1] >= w[0]));
}
