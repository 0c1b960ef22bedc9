//! Regression models over feature matrices: least squares, ridge, CART
//! regression trees, random forests and gradient boosting.
//!
//! All training is single-threaded per tree and accumulates in a fixed
//! order, so a given `(kind, X, y, seed)` always yields the same model.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jitter added to the normal-equation diagonal.
pub const RIDGE_JITTER: f64 = 1e-10;

const MODEL_FORMAT_VERSION: u32 = 1;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    Ridge {
        lambda: f64,
    },
    DecisionTree {
        max_depth: usize,
        min_leaf: usize,
    },
    RandomForest {
        n_trees: usize,
        max_depth: usize,
        min_leaf: usize,
        feature_fraction: f64,
    },
    GradientBoosting {
        n_estimators: usize,
        learning_rate: f64,
        max_depth: usize,
        min_leaf: usize,
    },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Ridge { .. } => "ridge",
            ModelKind::DecisionTree { .. } => "decision-tree",
            ModelKind::RandomForest { .. } => "random-forest",
            ModelKind::GradientBoosting { .. } => "gradient-boosting",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::Linear => "Linear Regression",
            ModelKind::Ridge { .. } => "Ridge Regression",
            ModelKind::DecisionTree { .. } => "Decision Tree Regression",
            ModelKind::RandomForest { .. } => "Random Forest Regression",
            ModelKind::GradientBoosting { .. } => "Gradient Boosting Regression",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Model(format!("{}: {msg}", self.name())));
        let tree_ok = |depth: usize, leaf: usize| depth >= 1 && leaf >= 1;
        match *self {
            ModelKind::Linear => Ok(()),
            ModelKind::Ridge { lambda } if !(lambda >= 0.0) => bad("lambda must be >= 0"),
            ModelKind::Ridge { .. } => Ok(()),
            ModelKind::DecisionTree { max_depth, min_leaf } if !tree_ok(max_depth, min_leaf) => {
                bad("max_depth and min_leaf must be >= 1")
            }
            ModelKind::DecisionTree { .. } => Ok(()),
            ModelKind::RandomForest {
                n_trees,
                max_depth,
                min_leaf,
                feature_fraction,
            } => {
                if n_trees == 0 || !tree_ok(max_depth, min_leaf) {
                    bad("n_trees, max_depth and min_leaf must be >= 1")
                } else if !(feature_fraction > 0.0 && feature_fraction <= 1.0) {
                    bad("feature_fraction must be in (0, 1]")
                } else {
                    Ok(())
                }
            }
            ModelKind::GradientBoosting {
                n_estimators,
                learning_rate,
                max_depth,
                min_leaf,
            } => {
                if n_estimators == 0 || !tree_ok(max_depth, min_leaf) {
                    bad("n_estimators, max_depth and min_leaf must be >= 1")
                } else if !(learning_rate > 0.0 && learning_rate <= 1.0) {
                    bad("learning_rate must be in (0, 1]")
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn thresholds(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Split { feature, threshold, .. } => Some((feature, threshold)),
                Node::Leaf(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` means all of them.
    pub features_per_split: Option<usize>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Greedy CART regression tree over `rows` (duplicates allowed).
pub fn fit_tree(x: &Matrix, y: &[f64], rows: &[usize], params: TreeParams, rng: &mut ChaCha8Rng) -> Tree {
    let mut tree = Tree { nodes: Vec::new() };
    grow(x, y, rows.to_vec(), 0, params, rng, &mut tree);
    tree
}

fn mean_of(y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64
}

fn grow(
    x: &Matrix,
    y: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: TreeParams,
    rng: &mut ChaCha8Rng,
    tree: &mut Tree,
) -> usize {
    let at = tree.nodes.len();
    tree.nodes.push(Node::Leaf(mean_of(y, &rows)));
    if depth >= params.max_depth || rows.len() < 2 * params.min_leaf {
        return at;
    }
    let candidates: Vec<usize> = match params.features_per_split {
        Some(k) if k < x.ncols() => {
            let mut picked = sample(rng, x.ncols(), k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..x.ncols()).collect(),
    };
    let Some(split) = best_split(x, y, &rows, &candidates, params.min_leaf) else {
        return at;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| x.get(r, split.feature) <= split.threshold);
    let left = grow(x, y, left_rows, depth + 1, params, rng, tree);
    let right = grow(x, y, right_rows, depth + 1, params, rng, tree);
    tree.nodes[at] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    at
}

/// Maximal squared-error reduction; ties keep the lowest feature index,
/// then the lowest threshold.
fn best_split(x: &Matrix, y: &[f64], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<SplitChoice> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x.get(r, f), y[r])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        for i in 1..n {
            left_sum += pairs[i - 1].1;
            if pairs[i - 1].0 == pairs[i].0 || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64 - parent;
            if gain > best.as_ref().map_or(1e-12, |b| b.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: (pairs[i - 1].0 + pairs[i].0) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

/// Rows drawn with replacement for one forest tree.
pub fn bootstrap_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Learned {
    Linear { intercept: f64, coefficients: Vec<f64> },
    Tree { tree: Tree },
    Forest { trees: Vec<Tree> },
    Boosting { base: f64, learning_rate: f64, trees: Vec<Tree> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub kind: ModelKind,
    pub feature_ids: Vec<String>,
    pub learned: Learned,
}

pub fn fit(kind: ModelKind, x: &Matrix, y: &[f64], feature_ids: &[String], seed: u64) -> Result<TrainedModel> {
    kind.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.nrows() < 2 {
        return Err(Error::Model(format!("need at least 2 rows, got {}", x.nrows())));
    }
    if x.ncols() != feature_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: feature_ids.len(),
            actual: x.ncols(),
        });
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Model("training data contains NaN or infinity".into()));
    }
    let all_rows: Vec<usize> = (0..x.nrows()).collect();
    let learned = match kind {
        ModelKind::Linear => fit_linear(x, y, 0.0)?,
        ModelKind::Ridge { lambda } => fit_linear(x, y, lambda)?,
        ModelKind::DecisionTree { max_depth, min_leaf } => {
            let params = TreeParams {
                max_depth,
                min_leaf,
                features_per_split: None,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Learned::Tree {
                tree: fit_tree(x, y, &all_rows, params, &mut rng),
            }
        }
        ModelKind::RandomForest {
            n_trees,
            max_depth,
            min_leaf,
            feature_fraction,
        } => {
            let per_split = ((feature_fraction * x.ncols() as f64).ceil() as usize).clamp(1, x.ncols().max(1));
            let params = TreeParams {
                max_depth,
                min_leaf,
                features_per_split: Some(per_split),
            };
            let mut master = ChaCha8Rng::seed_from_u64(seed);
            let tree_seeds: Vec<u64> = (0..n_trees).map(|_| master.gen()).collect();
            let trees = tree_seeds
                .par_iter()
                .map(|&s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    let rows = bootstrap_rows(x.nrows(), &mut rng);
                    fit_tree(x, y, &rows, params, &mut rng)
                })
                .collect();
            Learned::Forest { trees }
        }
        ModelKind::GradientBoosting {
            n_estimators,
            learning_rate,
            max_depth,
            min_leaf,
        } => {
            let params = TreeParams {
                max_depth,
                min_leaf,
                features_per_split: None,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = y.iter().sum::<f64>() / y.len() as f64;
            let mut current = vec![base; y.len()];
            let mut residual = vec![0.0; y.len()];
            let mut trees = Vec::with_capacity(n_estimators);
            for _ in 0..n_estimators {
                for i in 0..y.len() {
                    residual[i] = y[i] - current[i];
                }
                let tree = fit_tree(x, &residual, &all_rows, params, &mut rng);
                for (i, c) in current.iter_mut().enumerate() {
                    *c += learning_rate * tree.predict_row(x.row(i));
                }
                trees.push(tree);
            }
            Learned::Boosting {
                base,
                learning_rate,
                trees,
            }
        }
    };
    Ok(TrainedModel {
        version: MODEL_FORMAT_VERSION,
        kind,
        feature_ids: feature_ids.to_vec(),
        learned,
    })
}

/// Solves `(AᵀA + λP + εI) β = Aᵀy` where `A` is `X` with a leading
/// intercept column and `P` leaves the intercept unpenalized.
fn fit_linear(x: &Matrix, y: &[f64], lambda: f64) -> Result<Learned> {
    let (n, p) = (x.nrows(), x.ncols() + 1);
    let a = DMatrix::from_fn(n, p, |r, c| if c == 0 { 1.0 } else { x.get(r, c - 1) });
    let target = DVector::from_column_slice(y);
    let mut gram = a.transpose() * &a;
    for i in 0..p {
        gram[(i, i)] += RIDGE_JITTER + if i == 0 { 0.0 } else { lambda };
    }
    let rhs = a.transpose() * target;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Model("singular normal equations".into()))?,
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Model("normal equations produced non-finite coefficients".into()));
    }
    Ok(Learned::Linear {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

impl TrainedModel {
    pub fn predict(&self, x: &Matrix, feature_ids: &[String]) -> Result<Vec<f64>> {
        if feature_ids != self.feature_ids.as_slice() {
            return Err(Error::Model(format!(
                "feature columns {:?} do not match training columns {:?}",
                feature_ids, self.feature_ids
            )));
        }
        self.predict_matrix(x)
    }

    /// Predicts without checking column names; only the column count is verified.
    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.nrows() > 0 && x.ncols() != self.feature_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_ids.len(),
                actual: x.ncols(),
            });
        }
        Ok((0..x.nrows()).map(|r| self.predict_row(x.row(r))).collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.learned {
            Learned::Linear {
                intercept,
                coefficients,
            } => coefficients.iter().zip(row).fold(*intercept, |acc, (b, v)| acc + b * v),
            Learned::Tree { tree } => tree.predict_row(row),
            Learned::Forest { trees } => {
                trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len() as f64
            }
            Learned::Boosting {
                base,
                learning_rate,
                trees,
            } => trees
                .iter()
                .fold(*base, |acc, t| acc + learning_rate * t.predict_row(row)),
        }
    }

    /// Training-set MSE after each boosting stage (stage 0 is the base value).
    pub fn staged_mse(&self, x: &Matrix, y: &[f64]) -> Option<Vec<f64>> {
        let Learned::Boosting {
            base,
            learning_rate,
            trees,
        } = &self.learned
        else {
            return None;
        };
        let mse = |pred: &[f64]| pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64;
        let mut current = vec![*base; y.len()];
        let mut out = vec![mse(&current)];
        for tree in trees {
            for (i, c) in current.iter_mut().enumerate() {
                *c += learning_rate * tree.predict_row(x.row(i));
            }
            out.push(mse(&current));
        }
        Some(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported model format version {}", model.version)));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
