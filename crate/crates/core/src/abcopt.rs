//! Artificial bee colony search over feature subsets and model
//! hyperparameters.
//!
//! A position lives in `[0,1]^(F+H)`. The first `F` genes select features
//! (and their parameter configuration); the remaining `H` genes encode the
//! model's hyperparameters. Fitness is the mean Pearson correlation over a
//! stratified cross-validation plan.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{pearson, CvPlan};
use crate::features::FeatureTable;
use crate::mlmodels::{fit, ModelKind};

/// Fitness of a position that selects no feature.
pub const INVALID_FITNESS: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Continuous { lo: f64, hi: f64, scale: Scale },
    Integer { lo: i64, hi: i64 },
    Categorical(usize),
}

impl ParamKind {
    pub fn decode(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match *self {
            ParamKind::Continuous { lo, hi, scale: Scale::Linear } => lo + x * (hi - lo),
            ParamKind::Continuous { lo, hi, scale: Scale::Log } => {
                if x == 1.0 {
                    hi
                } else {
                    (lo.ln() + x * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
                }
            }
            ParamKind::Integer { lo, hi } => {
                let v = lo as f64 + x * (hi - lo) as f64;
                (v + 0.5).floor().min(hi as f64)
            }
            ParamKind::Categorical(k) => ((x * k as f64).floor() as usize).min(k - 1) as f64,
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            ParamKind::Continuous { lo, hi, scale } => lo < hi && (scale == Scale::Linear || lo > 0.0),
            ParamKind::Integer { lo, hi } => lo < hi,
            ParamKind::Categorical(k) => k >= 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParam {
    pub name: String,
    pub kind: ParamKind,
}

fn hp(name: &str, kind: ParamKind) -> HyperParam {
    HyperParam {
        name: name.to_string(),
        kind,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Linear,
    Ridge,
    DecisionTree,
    RandomForest,
    GradientBoosting,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::Linear,
        ModelFamily::Ridge,
        ModelFamily::DecisionTree,
        ModelFamily::RandomForest,
        ModelFamily::GradientBoosting,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Ridge => "ridge",
            ModelFamily::DecisionTree => "decision-tree",
            ModelFamily::RandomForest => "random-forest",
            ModelFamily::GradientBoosting => "gradient-boosting",
        }
    }

    pub fn default_hyperparams(&self) -> Vec<HyperParam> {
        let depth = |lo, hi| hp("max_depth", ParamKind::Integer { lo, hi });
        let min_leaf = hp("min_leaf", ParamKind::Integer { lo: 1, hi: 32 });
        match self {
            ModelFamily::Linear => vec![],
            ModelFamily::Ridge => vec![hp(
                "lambda",
                ParamKind::Continuous {
                    lo: 1e-4,
                    hi: 1e2,
                    scale: Scale::Log,
                },
            )],
            ModelFamily::DecisionTree => vec![depth(2, 16), min_leaf],
            ModelFamily::RandomForest => vec![
                hp("n_trees", ParamKind::Integer { lo: 10, hi: 300 }),
                depth(2, 16),
                min_leaf,
                hp(
                    "feature_fraction",
                    ParamKind::Continuous {
                        lo: 0.1,
                        hi: 1.0,
                        scale: Scale::Linear,
                    },
                ),
            ],
            ModelFamily::GradientBoosting => vec![
                hp("n_estimators", ParamKind::Integer { lo: 10, hi: 500 }),
                hp(
                    "learning_rate",
                    ParamKind::Continuous {
                        lo: 0.01,
                        hi: 0.5,
                        scale: Scale::Log,
                    },
                ),
                depth(1, 6),
                min_leaf,
            ],
        }
    }

    /// Model for decoded hyperparameter values, in `default_hyperparams` order.
    pub fn kind(&self, values: &[f64]) -> Result<ModelKind> {
        let expected = self.default_hyperparams().len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        let int = |v: f64| v as usize;
        let kind = match self {
            ModelFamily::Linear => ModelKind::Linear,
            ModelFamily::Ridge => ModelKind::Ridge { lambda: values[0] },
            ModelFamily::DecisionTree => ModelKind::DecisionTree {
                max_depth: int(values[0]),
                min_leaf: int(values[1]),
            },
            ModelFamily::RandomForest => ModelKind::RandomForest {
                n_trees: int(values[0]),
                max_depth: int(values[1]),
                min_leaf: int(values[2]),
                feature_fraction: values[3],
            },
            ModelFamily::GradientBoosting => ModelKind::GradientBoosting {
                n_estimators: int(values[0]),
                learning_rate: values[1],
                max_depth: int(values[2]),
                min_leaf: int(values[3]),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ModelFamily::ALL.iter().map(|f| f.name()).collect();
                Error::InvalidInput(format!("unknown model `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Number of configs of each feature spec.
    pub config_counts: Vec<usize>,
    pub family: ModelFamily,
    pub hyperparams: Vec<HyperParam>,
}

impl SearchSpace {
    pub fn new(config_counts: Vec<usize>, family: ModelFamily) -> Result<Self> {
        Self::with_hyperparams(config_counts, family, family.default_hyperparams())
    }

    pub fn with_hyperparams(config_counts: Vec<usize>, family: ModelFamily, hyperparams: Vec<HyperParam>) -> Result<Self> {
        if config_counts.is_empty() || config_counts.contains(&0) {
            return Err(Error::InvalidInput("every feature needs at least one config".into()));
        }
        if hyperparams.len() != family.default_hyperparams().len() {
            return Err(Error::InvalidInput(format!(
                "{} expects {} hyperparameters",
                family.name(),
                family.default_hyperparams().len()
            )));
        }
        if let Some(bad) = hyperparams.iter().find(|h| !h.kind.is_valid()) {
            return Err(Error::InvalidInput(format!("invalid range for `{}`", bad.name)));
        }
        Ok(SearchSpace {
            config_counts,
            family,
            hyperparams,
        })
    }

    pub fn n_features(&self) -> usize {
        self.config_counts.len()
    }

    pub fn dim(&self) -> usize {
        self.config_counts.len() + self.hyperparams.len()
    }

    pub fn decode(&self, position: &[f64]) -> Result<Decoded> {
        if position.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: position.len(),
            });
        }
        let f = self.n_features();
        let features = position[..f]
            .iter()
            .zip(&self.config_counts)
            .enumerate()
            .filter(|(_, (&x, _))| x >= 0.5)
            .map(|(i, (&x, &c))| (i, (((x - 0.5) / 0.5 * c as f64).floor() as usize).min(c - 1)))
            .collect();
        let values: Vec<f64> = position[f..]
            .iter()
            .zip(&self.hyperparams)
            .map(|(&x, h)| h.kind.decode(x))
            .collect();
        Ok(Decoded {
            features,
            hyperparams: self
                .hyperparams
                .iter()
                .zip(&values)
                .map(|(h, &v)| (h.name.clone(), v))
                .collect(),
            kind: self.family.kind(&values)?,
        })
    }
}

/// A decoded position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// `(feature index, active config)` for every selected feature.
    pub features: Vec<(usize, usize)>,
    pub hyperparams: BTreeMap<String, f64>,
    pub kind: ModelKind,
}

impl Decoded {
    fn memo_key(&self) -> Vec<u64> {
        let mut key: Vec<u64> = self.features.iter().flat_map(|&(i, c)| [i as u64, c as u64]).collect();
        key.push(u64::MAX);
        key.extend(self.hyperparams.values().map(|v| v.to_bits()));
        key
    }
}

/// Mean per-fold Pearson of `decoded` on `table` under `cv`.
pub fn evaluate_decoded(decoded: &Decoded, table: &FeatureTable, cv: &CvPlan, seed: u64) -> f64 {
    if decoded.features.is_empty() {
        return INVALID_FITNESS;
    }
    let ids = table.column_ids(&decoded.features);
    let folds = cv.folds();
    let mut total = 0.0;
    for (train, test) in &folds {
        let r = (|| {
            let x_train = table.design(&decoded.features, train);
            let y_train: Vec<f64> = train.iter().map(|&r| table.gold[r]).collect();
            let model = fit(decoded.kind, &x_train, &y_train, &ids, seed).ok()?;
            let x_test = table.design(&decoded.features, test);
            let predicted = model.predict(&x_test, &ids).ok()?;
            let y_test: Vec<f64> = test.iter().map(|&r| table.gold[r]).collect();
            pearson(&predicted, &y_test).ok().flatten()
        })();
        total += r.unwrap_or(0.0);
    }
    total / folds.len() as f64
}

/// Fitness of a raw position.
pub fn fitness(position: &[f64], space: &SearchSpace, table: &FeatureTable, cv: &CvPlan, seed: u64) -> Result<f64> {
    check_table(space, table, cv)?;
    let decoded = space.decode(position)?;
    Ok(evaluate_decoded(&decoded, table, cv, seed))
}

fn check_table(space: &SearchSpace, table: &FeatureTable, cv: &CvPlan) -> Result<()> {
    if table.config_counts() != space.config_counts {
        return Err(Error::InvalidInput("search space does not match the feature table".into()));
    }
    if cv.assignment.len() != table.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: table.n_rows(),
            actual: cv.assignment.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub n_sources: usize,
    pub iterations: usize,
    pub limit: usize,
    pub seed: u64,
    /// Onlooker draws per iteration; `None` means `n_sources`.
    #[serde(default)]
    pub onlookers: Option<usize>,
}

impl Default for AbcConfig {
    fn default() -> Self {
        AbcConfig {
            n_sources: 50,
            iterations: 30,
            limit: 20,
            seed: 0,
            onlookers: None,
        }
    }
}

impl AbcConfig {
    pub fn onlooker_count(&self) -> usize {
        self.onlookers.unwrap_or(self.n_sources)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sources == 0 || self.iterations == 0 || self.limit == 0 || self.onlooker_count() == 0 {
            return Err(Error::InvalidInput(
                "n_sources, iterations, limit and onlookers must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Evaluations a run performs given its scout count.
    pub fn expected_evaluations(&self, scouts: usize) -> usize {
        self.n_sources + self.iterations * (self.n_sources + self.onlooker_count()) + scouts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcRun {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Best fitness so far after each iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub scouts: usize,
}

struct Colony {
    positions: Vec<Vec<f64>>,
    fitness: Vec<f64>,
    trials: Vec<usize>,
    best_position: Vec<f64>,
    best_fitness: f64,
    evaluations: usize,
}

impl Colony {
    fn offer(&mut self, candidate: &[f64], value: f64) {
        if value > self.best_fitness {
            self.best_fitness = value;
            self.best_position = candidate.to_vec();
        }
    }

    fn greedy(&mut self, source: usize, candidate: Vec<f64>, value: f64) {
        self.offer(&candidate, value);
        if value > self.fitness[source] {
            self.positions[source] = candidate;
            self.fitness[source] = value;
            self.trials[source] = 0;
        } else {
            self.trials[source] += 1;
        }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn evaluate_all<F>(objective: &F, points: &[Vec<f64>]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    points.par_iter().map(|p| sanitize(objective(p))).collect()
}

fn neighbour(rng: &mut ChaCha8Rng, positions: &[Vec<f64>], source: usize) -> Vec<f64> {
    let n = positions.len();
    let dim = positions[source].len();
    let j = rng.gen_range(0..dim);
    let k = if n == 1 {
        source
    } else {
        let k = rng.gen_range(0..n - 1);
        if k >= source {
            k + 1
        } else {
            k
        }
    };
    let phi: f64 = rng.gen_range(-1.0..1.0);
    let mut v = positions[source].clone();
    let xj = v[j];
    v[j] = (xj + phi * (xj - positions[k][j])).clamp(0.0, 1.0);
    v
}

fn roulette(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return rng.gen_range(0..weights.len());
    }
    let mut target = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    weights.len() - 1
}

/// Maximizes `objective` over `[0,1]^dim`.
///
/// Candidates of a phase are drawn from a snapshot of the colony, evaluated
/// in parallel and then accepted one by one in draw order, so the result
/// depends only on the seed.
pub fn optimize<F>(cfg: &AbcConfig, dim: usize, objective: F) -> Result<AbcRun>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::InvalidInput("search dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let positions: Vec<Vec<f64>> = (0..cfg.n_sources)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let fitness = evaluate_all(&objective, &positions);
    let mut colony = Colony {
        best_position: positions[0].clone(),
        best_fitness: f64::NEG_INFINITY,
        trials: vec![0; cfg.n_sources],
        evaluations: cfg.n_sources,
        positions,
        fitness,
    };
    for i in 0..cfg.n_sources {
        let p = colony.positions[i].clone();
        colony.offer(&p, colony.fitness[i]);
    }
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut scouts = 0;

    for _ in 0..cfg.iterations {
        // employed bees
        let candidates: Vec<Vec<f64>> = (0..cfg.n_sources)
            .map(|i| neighbour(&mut rng, &colony.positions, i))
            .collect();
        let values = evaluate_all(&objective, &candidates);
        colony.evaluations += candidates.len();
        for (i, (c, v)) in candidates.into_iter().zip(values).enumerate() {
            colony.greedy(i, c, v);
        }

        // onlookers
        let weights: Vec<f64> = colony.fitness.iter().map(|f| (f + 1.0).max(0.0)).collect();
        let draws: Vec<(usize, Vec<f64>)> = (0..cfg.onlooker_count())
            .map(|_| {
                let i = roulette(&mut rng, &weights);
                (i, neighbour(&mut rng, &colony.positions, i))
            })
            .collect();
        let points: Vec<Vec<f64>> = draws.iter().map(|(_, c)| c.clone()).collect();
        let values = evaluate_all(&objective, &points);
        colony.evaluations += draws.len();
        for ((i, c), v) in draws.into_iter().zip(values) {
            colony.greedy(i, c, v);
        }

        // scouts
        let exhausted: Vec<usize> = (0..cfg.n_sources).filter(|&i| colony.trials[i] > cfg.limit).collect();
        let fresh: Vec<Vec<f64>> = exhausted
            .iter()
            .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let values = evaluate_all(&objective, &fresh);
        colony.evaluations += fresh.len();
        scouts += fresh.len();
        for ((i, p), v) in exhausted.into_iter().zip(fresh).zip(values) {
            colony.offer(&p, v);
            colony.positions[i] = p;
            colony.fitness[i] = v;
            colony.trials[i] = 0;
        }

        history.push(colony.best_fitness);
    }

    Ok(AbcRun {
        best_position: colony.best_position,
        best_fitness: colony.best_fitness,
        history,
        evaluations: colony.evaluations,
        scouts,
    })
}

/// ABC over a feature table with a memo of decoded solutions.
pub fn optimize_model(
    cfg: &AbcConfig,
    space: &SearchSpace,
    table: &FeatureTable,
    cv: &CvPlan,
    seed: u64,
) -> Result<(AbcRun, Decoded)> {
    check_table(space, table, cv)?;
    let memo: Mutex<HashMap<Vec<u64>, f64>> = Mutex::new(HashMap::new());
    let objective = |position: &[f64]| {
        let Ok(decoded) = space.decode(position) else {
            return INVALID_FITNESS;
        };
        let key = decoded.memo_key();
        if let Some(&v) = memo.lock().unwrap().get(&key) {
            return v;
        }
        let v = evaluate_decoded(&decoded, table, cv, seed);
        memo.lock().unwrap().insert(key, v);
        v
    };
    let run = optimize(cfg, space.dim(), objective)?;
    let decoded = space.decode(&run.best_position)?;
    Ok((run, decoded))
}

/// Everything needed to reproduce and report one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub version: u32,
    pub dataset: String,
    pub lemmatized: bool,
    pub model: ModelFamily,
    pub abc: AbcConfig,
    pub seed: u64,
    pub live_embeddings: bool,
    pub history: Vec<f64>,
    pub best_fitness: f64,
    pub evaluations: usize,
    pub scouts: usize,
    pub selected_features: Vec<String>,
    pub hyperparams: BTreeMap<String, f64>,
    pub kind: ModelKind,
    pub holdout_pearson: Option<f64>,
    pub train_rows: usize,
    /// Pair ids of the holdout rows, in dataset order.
    pub holdout_ids: Vec<String>,
}
