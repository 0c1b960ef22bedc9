//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sts_core::eval::{stratified_kfold, CvPlan};
use sts_core::features::FeatureTable;

/// `n` random lowercase strings of length `len`.
pub fn random_strings(n: usize, len: usize, seed: u64) -> Vec<Vec<char>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect())
        .collect()
}

/// Ten uniform features, three of which drive the target.
pub fn planted_table(rows: usize, seed: u64) -> (FeatureTable, CvPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..10).map(|_| (0..rows).map(|_| rng.gen()).collect()).collect();
    let gold: Vec<f64> = (0..rows)
        .map(|r| 2.0 * columns[0][r] + 1.5 * columns[3][r] - columns[7][r] + 0.1 * rng.gen::<f64>())
        .collect();
    let ids: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
    let cv = stratified_kfold(&gold, 10, 5, seed).expect("enough rows");
    (FeatureTable::from_columns(&ids, columns, gold).expect("consistent"), cv)
}
