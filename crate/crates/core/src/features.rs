//! Feature registry and feature-matrix construction.
//!
//! Each traditional algorithm is one [`FeatureSpec`] with an ordered list of
//! parameter configurations. A [`FeatureTable`] holds the column of every
//! (spec, config) pair for a dataset, so selecting features later never
//! recomputes a similarity. Columns can also be persisted in a
//! [`FeatureStore`] directory shared between runs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Dataset, SentencePair, TokenMode};
use crate::error::{Error, Result};
use crate::knowsim::{sentence_similarity_know, KnowAggregation, KnowMetric, Taxonomy};
use crate::mlmodels::Matrix;
use crate::stringsim::{char_similarity, AlignmentScores, CharMetric};
use crate::termsim::{term_similarity, TermMetric};
use crate::vecspace::{
    sentence_similarity, vector_similarity, Aggregation, CooccurrenceModel, VectorMetric, WordVectors,
};
use crate::Score;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Char,
    Term,
    Vec,
    Know,
    Embed,
}

impl Family {
    pub fn key(&self) -> &'static str {
        match self {
            Family::Char => "char",
            Family::Term => "term",
            Family::Vec => "vec",
            Family::Know => "know",
            Family::Embed => "embed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorResource {
    Hal,
    FileVectors,
    EmbedWords,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureConfig {
    Char(CharMetric),
    Term(TermMetric, TokenMode),
    Vector {
        resource: VectorResource,
        metric: VectorMetric,
        agg: Aggregation,
    },
    Know(KnowMetric, KnowAggregation),
    SentenceEmbedding(VectorMetric),
}

impl FeatureConfig {
    pub fn label(&self) -> String {
        match self {
            FeatureConfig::Char(m) => match m {
                CharMetric::JaroWinkler { prefix_weight, .. } => format!("p{prefix_weight}"),
                CharMetric::NeedlemanWunsch(s) | CharMetric::SmithWaterman(s) => {
                    format!("m{}x{}g{}", s.matched, s.mismatch, s.gap)
                }
                _ => "default".into(),
            },
            FeatureConfig::Term(_, mode) => mode.label(),
            FeatureConfig::Vector { metric, agg, .. } => format!("{}-{}", metric.label(), agg.label()),
            FeatureConfig::Know(_, agg) => agg.label().into(),
            FeatureConfig::SentenceEmbedding(metric) => metric.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: String,
    pub family: Family,
    pub configs: Vec<FeatureConfig>,
    pub active_config: usize,
}

impl FeatureSpec {
    fn new(id: &str, family: Family, configs: Vec<FeatureConfig>) -> Self {
        FeatureSpec {
            id: id.to_string(),
            family,
            configs,
            active_config: 0,
        }
    }

    pub fn active(&self) -> &FeatureConfig {
        &self.configs[self.active_config]
    }

    /// `id@label` of the given config.
    pub fn column_name(&self, config: usize) -> String {
        format!("{}@{}", self.id, self.configs[config].label())
    }

    pub fn with_active(&self, config: usize) -> Result<Self> {
        if config >= self.configs.len() {
            return Err(Error::InvalidInput(format!(
                "`{}` has {} configs, requested {config}",
                self.id,
                self.configs.len()
            )));
        }
        Ok(FeatureSpec {
            active_config: config,
            ..self.clone()
        })
    }

    pub fn config_index(&self, label: &str) -> Option<usize> {
        self.configs.iter().position(|c| c.label() == label)
    }
}

/// Loaded resources for the vector, taxonomy and embedding families.
#[derive(Default)]
pub struct Resources {
    pub hal: Option<CooccurrenceModel>,
    pub word_vectors: Option<WordVectors>,
    pub embed_words: Option<WordVectors>,
    pub taxonomy: Option<Taxonomy>,
    /// Whole-sentence vectors keyed by raw sentence text.
    pub sentence_embeddings: Option<HashMap<String, Vec<f64>>>,
    /// Identifies the resource files; part of every persisted column key
    /// for resource-backed families.
    pub tag: String,
}

const ALIGNMENT_CONFIGS: [AlignmentScores; 3] = [
    AlignmentScores {
        matched: 1.0,
        mismatch: -1.0,
        gap: -1.0,
    },
    AlignmentScores {
        matched: 1.0,
        mismatch: 0.0,
        gap: -1.0,
    },
    AlignmentScores {
        matched: 1.0,
        mismatch: -1.0,
        gap: -2.0,
    },
];

const TERM_MODES: [TokenMode; 3] = [TokenMode::Word, TokenMode::CharNGram(2), TokenMode::CharNGram(3)];

const VECTOR_METRICS: [VectorMetric; 4] = [
    VectorMetric::Cosine,
    VectorMetric::Euclidean,
    VectorMetric::Manhattan,
    VectorMetric::Minkowski(3.0),
];

fn vector_configs(resource: VectorResource) -> Vec<FeatureConfig> {
    let mut out = Vec::new();
    for agg in [Aggregation::MeanVector, Aggregation::BestMatch] {
        for metric in VECTOR_METRICS {
            out.push(FeatureConfig::Vector { resource, metric, agg });
        }
    }
    out
}

/// Character and term specs only.
pub fn string_registry() -> Vec<FeatureSpec> {
    use FeatureConfig::Char;
    let mut specs = vec![
        FeatureSpec::new("hamming", Family::Char, vec![Char(CharMetric::Hamming)]),
        FeatureSpec::new("levenshtein", Family::Char, vec![Char(CharMetric::Levenshtein)]),
        FeatureSpec::new("damerau-levenshtein", Family::Char, vec![Char(CharMetric::DamerauLevenshtein)]),
        FeatureSpec::new("jaro", Family::Char, vec![Char(CharMetric::Jaro)]),
        FeatureSpec::new(
            "jaro-winkler",
            Family::Char,
            [0.1, 0.2]
                .iter()
                .map(|&p| {
                    Char(CharMetric::JaroWinkler {
                        prefix_weight: p,
                        max_prefix: 4,
                    })
                })
                .collect(),
        ),
        FeatureSpec::new(
            "needleman-wunsch",
            Family::Char,
            ALIGNMENT_CONFIGS.iter().map(|&s| Char(CharMetric::NeedlemanWunsch(s))).collect(),
        ),
        FeatureSpec::new(
            "smith-waterman",
            Family::Char,
            ALIGNMENT_CONFIGS.iter().map(|&s| Char(CharMetric::SmithWaterman(s))).collect(),
        ),
        FeatureSpec::new("lcsseq", Family::Char, vec![Char(CharMetric::LcsSeq)]),
        FeatureSpec::new("lcsstr", Family::Char, vec![Char(CharMetric::LcsStr)]),
    ];
    for (id, metric) in [
        ("jaccard", TermMetric::Jaccard),
        ("sorensen-dice", TermMetric::SorensenDice),
        ("overlap", TermMetric::Overlap),
        ("cosine", TermMetric::CosineTf),
        ("ochiai", TermMetric::Ochiai),
    ] {
        specs.push(FeatureSpec::new(
            id,
            Family::Term,
            TERM_MODES.iter().map(|&m| FeatureConfig::Term(metric, m)).collect(),
        ));
    }
    specs
}

/// Every in-scope algorithm whose resources are loaded.
pub fn default_registry(resources: &Resources) -> Vec<FeatureSpec> {
    let mut specs = string_registry();
    if resources.hal.is_some() {
        specs.push(FeatureSpec::new("hal", Family::Vec, vector_configs(VectorResource::Hal)));
    }
    if resources.word_vectors.is_some() {
        specs.push(FeatureSpec::new(
            "word-vectors",
            Family::Vec,
            vector_configs(VectorResource::FileVectors),
        ));
    }
    if resources.embed_words.is_some() {
        specs.push(FeatureSpec::new(
            "embed-word",
            Family::Vec,
            vector_configs(VectorResource::EmbedWords),
        ));
    }
    if resources.taxonomy.is_some() {
        for (id, metric) in [
            ("path", KnowMetric::Path),
            ("wu-palmer", KnowMetric::WuPalmer),
            ("leacock-chodorow", KnowMetric::LeacockChodorow),
        ] {
            specs.push(FeatureSpec::new(
                id,
                Family::Know,
                [KnowAggregation::BestMatch, KnowAggregation::MaxPair]
                    .iter()
                    .map(|&a| FeatureConfig::Know(metric, a))
                    .collect(),
            ));
        }
    }
    if resources.sentence_embeddings.is_some() {
        specs.push(FeatureSpec::new(
            "embed-sentence",
            Family::Embed,
            VECTOR_METRICS.iter().map(|&m| FeatureConfig::SentenceEmbedding(m)).collect(),
        ));
    }
    specs
}

/// Finds a spec by `id` or `id-<config label>` (e.g. `jaccard-word`).
pub fn resolve(registry: &[FeatureSpec], name: &str) -> Option<FeatureSpec> {
    if let Some(spec) = registry.iter().find(|s| s.id == name) {
        return Some(spec.clone());
    }
    registry.iter().find_map(|s| {
        let label = name.strip_prefix(&s.id)?.strip_prefix('-')?;
        let idx = s.config_index(label)?;
        s.with_active(idx).ok()
    })
}

/// Every name accepted by [`resolve`].
pub fn known_names(registry: &[FeatureSpec]) -> Vec<String> {
    let mut names = Vec::new();
    for s in registry {
        names.push(s.id.clone());
        if s.configs.len() > 1 {
            for c in &s.configs {
                names.push(format!("{}-{}", s.id, c.label()));
            }
        }
    }
    names
}

fn missing(spec: &str, what: &str) -> Error {
    Error::Feature {
        spec: spec.to_string(),
        pair: String::new(),
        message: format!("{what} not loaded"),
    }
}

/// Similarity of one pair under one config.
pub fn compute_cell(
    spec_id: &str,
    config: &FeatureConfig,
    pair: &SentencePair,
    lemmatized: bool,
    resources: &Resources,
) -> Result<Score> {
    let with_pair = |e: Error| match e {
        Error::Feature { spec, message, .. } => Error::Feature {
            spec,
            pair: pair.id.clone(),
            message,
        },
        other => Error::Feature {
            spec: spec_id.to_string(),
            pair: pair.id.clone(),
            message: other.to_string(),
        },
    };
    let score = match *config {
        FeatureConfig::Char(metric) => {
            let a: Vec<char> = pair.a.text(lemmatized).chars().collect();
            let b: Vec<char> = pair.b.text(lemmatized).chars().collect();
            Score::new(char_similarity(metric, &a, &b))
        }
        FeatureConfig::Term(metric, mode) => {
            let a = pair.a.tokens_for(mode, lemmatized);
            let b = pair.b.tokens_for(mode, lemmatized);
            Score::new(term_similarity(metric, &a, &b))
        }
        FeatureConfig::Vector { resource, metric, agg } => {
            let (a, b) = (pair.a.words(lemmatized), pair.b.words(lemmatized));
            match resource {
                VectorResource::Hal => {
                    let hal = resources.hal.as_ref().ok_or_else(|| with_pair(missing(spec_id, "HAL model")))?;
                    sentence_similarity(hal, metric, agg, a, b)
                }
                VectorResource::FileVectors => {
                    let wv = resources
                        .word_vectors
                        .as_ref()
                        .ok_or_else(|| with_pair(missing(spec_id, "word vectors")))?;
                    sentence_similarity(wv, metric, agg, a, b)
                }
                VectorResource::EmbedWords => {
                    let wv = resources
                        .embed_words
                        .as_ref()
                        .ok_or_else(|| with_pair(missing(spec_id, "embedded word vectors")))?;
                    sentence_similarity(wv, metric, agg, a, b)
                }
            }
        }
        FeatureConfig::Know(metric, agg) => {
            let t = resources.taxonomy.as_ref().ok_or_else(|| with_pair(missing(spec_id, "taxonomy")))?;
            sentence_similarity_know(metric, agg, t, pair.a.words(lemmatized), pair.b.words(lemmatized))
        }
        FeatureConfig::SentenceEmbedding(metric) => {
            let table = resources
                .sentence_embeddings
                .as_ref()
                .ok_or_else(|| with_pair(missing(spec_id, "sentence embeddings")))?;
            let lookup = |text: &str| {
                table.get(text).ok_or_else(|| Error::Feature {
                    spec: spec_id.to_string(),
                    pair: pair.id.clone(),
                    message: format!("no embedding for {text:?}"),
                })
            };
            let (u, v) = (lookup(&pair.a.raw)?, lookup(&pair.b.raw)?);
            vector_similarity(metric, u, v).map_err(with_pair)?
        }
    };
    Ok(score)
}

/// One computed column: values and degenerate flags, one per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub values: Vec<f64>,
    pub degenerate: Vec<bool>,
}

fn compute_column(
    spec: &FeatureSpec,
    config: usize,
    dataset: &Dataset,
    lemmatized: bool,
    resources: &Resources,
) -> Result<Column> {
    let cfg = spec.configs[config];
    let scores: Vec<Score> = dataset
        .pairs
        .par_iter()
        .map(|p| compute_cell(&spec.id, &cfg, p, lemmatized, resources))
        .collect::<Result<_>>()?;
    Ok(Column {
        values: scores.iter().map(|s| s.value).collect(),
        degenerate: scores.iter().map(|s| s.degenerate).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub specs: Vec<FeatureSpec>,
    pub column_ids: Vec<String>,
    pub rows: Matrix,
    pub gold: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub pair_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn is_degenerate(&self, row: usize, col: usize) -> bool {
        self.degenerate[row * self.rows.ncols() + col]
    }

    /// CSV with a header of column ids and a trailing `gold` column.
    pub fn to_csv(&self) -> String {
        let mut out = self.column_ids.join(",");
        if !out.is_empty() {
            out.push(',');
        }
        out.push_str("gold\n");
        for r in 0..self.rows.nrows() {
            for v in self.rows.row(r) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.gold[r]);
        }
        out
    }
}

/// Builds the matrix of each spec's active config.
pub fn build_matrix(dataset: &Dataset, specs: &[FeatureSpec], lemmatized: bool, resources: &Resources) -> Result<FeatureMatrix> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("no feature specs".into()));
    }
    let columns = specs
        .iter()
        .map(|s| compute_column(s, s.active_config, dataset, lemmatized, resources))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(
        specs.to_vec(),
        specs.iter().map(|s| s.column_name(s.active_config)).collect(),
        &columns.iter().collect::<Vec<_>>(),
        dataset,
    ))
}

fn assemble(specs: Vec<FeatureSpec>, column_ids: Vec<String>, columns: &[&Column], dataset: &Dataset) -> FeatureMatrix {
    let (n, k) = (dataset.len(), columns.len());
    let mut rows = Matrix::zeros(n, k);
    let mut degenerate = vec![false; n * k];
    for (j, col) in columns.iter().enumerate() {
        for i in 0..n {
            rows.set(i, j, col.values[i]);
            degenerate[i * k + j] = col.degenerate[i];
        }
    }
    FeatureMatrix {
        specs,
        column_ids,
        rows,
        gold: dataset.gold(),
        degenerate,
        pair_ids: dataset.pairs.iter().map(|p| p.id.clone()).collect(),
    }
}

/// Every config column of every spec for one dataset variant.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub specs: Vec<FeatureSpec>,
    /// `columns[spec][config]`
    pub columns: Vec<Vec<Column>>,
    pub gold: Vec<f64>,
    pub pair_ids: Vec<String>,
}

impl FeatureTable {
    pub fn build(
        dataset: &Dataset,
        specs: &[FeatureSpec],
        lemmatized: bool,
        resources: &Resources,
        store: Option<&FeatureStore>,
    ) -> Result<Self> {
        let fingerprint = dataset_fingerprint(dataset, lemmatized);
        let mut columns = Vec::with_capacity(specs.len());
        for spec in specs {
            let mut per_config = Vec::with_capacity(spec.configs.len());
            for c in 0..spec.configs.len() {
                let key = column_key(&fingerprint, spec, c, resources);
                let cached = match store {
                    Some(s) => s.get(&key, dataset.len())?,
                    None => None,
                };
                let col = match cached {
                    Some(col) => col,
                    None => {
                        let col = compute_column(spec, c, dataset, lemmatized, resources)?;
                        if let Some(s) = store {
                            s.put(&key, &col)?;
                        }
                        col
                    }
                };
                per_config.push(col);
            }
            columns.push(per_config);
        }
        Ok(FeatureTable {
            specs: specs.to_vec(),
            columns,
            gold: dataset.gold(),
            pair_ids: dataset.pairs.iter().map(|p| p.id.clone()).collect(),
        })
    }

    /// A table of plain columns with one config each.
    pub fn from_columns(ids: &[String], columns: Vec<Vec<f64>>, gold: Vec<f64>) -> Result<Self> {
        if ids.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: columns.len(),
            });
        }
        if let Some(bad) = columns.iter().find(|c| c.len() != gold.len()) {
            return Err(Error::DimensionMismatch {
                expected: gold.len(),
                actual: bad.len(),
            });
        }
        let specs = ids
            .iter()
            .map(|id| FeatureSpec::new(id, Family::Char, vec![FeatureConfig::Char(CharMetric::Hamming)]))
            .collect();
        let columns = columns
            .into_iter()
            .map(|values| {
                let degenerate = vec![false; values.len()];
                vec![Column { values, degenerate }]
            })
            .collect();
        Ok(FeatureTable {
            specs,
            columns,
            pair_ids: (0..gold.len()).map(|i| i.to_string()).collect(),
            gold,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.gold.len()
    }

    pub fn n_features(&self) -> usize {
        self.specs.len()
    }

    pub fn config_counts(&self) -> Vec<usize> {
        self.specs.iter().map(|s| s.configs.len()).collect()
    }

    /// Column ids for `(spec, config)` selections.
    pub fn column_ids(&self, selection: &[(usize, usize)]) -> Vec<String> {
        selection.iter().map(|&(s, c)| self.specs[s].column_name(c)).collect()
    }

    /// Dense matrix of the selected columns restricted to `rows`.
    pub fn design(&self, selection: &[(usize, usize)], rows: &[usize]) -> Matrix {
        let k = selection.len();
        let mut data = Vec::with_capacity(rows.len() * k);
        for &r in rows {
            data.extend(selection.iter().map(|&(s, c)| self.columns[s][c].values[r]));
        }
        Matrix::from_vec(rows.len(), k, data).expect("consistent shape")
    }

    /// Rows subset of the whole table.
    pub fn subset(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            specs: self.specs.clone(),
            columns: self
                .columns
                .iter()
                .map(|cfgs| {
                    cfgs.iter()
                        .map(|col| Column {
                            values: rows.iter().map(|&r| col.values[r]).collect(),
                            degenerate: rows.iter().map(|&r| col.degenerate[r]).collect(),
                        })
                        .collect()
                })
                .collect(),
            gold: rows.iter().map(|&r| self.gold[r]).collect(),
            pair_ids: rows.iter().map(|&r| self.pair_ids[r].clone()).collect(),
        }
    }

    pub fn matrix(&self, selection: &[(usize, usize)]) -> Result<FeatureMatrix> {
        let mut specs = Vec::with_capacity(selection.len());
        let mut columns = Vec::with_capacity(selection.len());
        for &(s, c) in selection {
            specs.push(self.specs[s].with_active(c)?);
            columns.push(&self.columns[s][c]);
        }
        let n = self.n_rows();
        let k = columns.len();
        let mut rows = Matrix::zeros(n, k);
        let mut degenerate = vec![false; n * k];
        for (j, col) in columns.iter().enumerate() {
            for i in 0..n {
                rows.set(i, j, col.values[i]);
                degenerate[i * k + j] = col.degenerate[i];
            }
        }
        Ok(FeatureMatrix {
            column_ids: self.column_ids(selection),
            specs,
            rows,
            gold: self.gold.clone(),
            degenerate,
            pair_ids: self.pair_ids.clone(),
        })
    }
}

/// Content digest of resource files, suitable for [`Resources::tag`].
pub fn resource_tag(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn dataset_fingerprint(dataset: &Dataset, lemmatized: bool) -> String {
    let mut h = Sha256::new();
    h.update([u8::from(lemmatized)]);
    for p in &dataset.pairs {
        for part in [&p.id, &p.a.text(lemmatized), &p.b.text(lemmatized)] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        for w in p.a.words(lemmatized).iter().chain(p.b.words(lemmatized)) {
            h.update(w.as_bytes());
            h.update([1u8]);
        }
    }
    hex::encode(h.finalize())
}

fn column_key(fingerprint: &str, spec: &FeatureSpec, config: usize, resources: &Resources) -> String {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(spec.column_name(config).as_bytes());
    if !matches!(spec.family, Family::Char | Family::Term) {
        h.update(resources.tag.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Directory of persisted feature columns, one file per column key.
///
/// Layout: `FCOL`, `u32` version, `u64` row count, then per row an `f64`
/// value and a `u8` degenerate flag, all little-endian.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    dir: PathBuf,
}

const STORE_MAGIC: &[u8; 4] = b"FCOL";
const STORE_VERSION: u32 = 1;

impl FeatureStore {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(FeatureStore { dir: dir.to_path_buf() })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.col"))
    }

    pub fn get(&self, key: &str, rows: usize) -> Result<Option<Column>> {
        let path = self.path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(path, e)),
        };
        let expected = 16 + rows * 9;
        if bytes.len() != expected
            || &bytes[..4] != STORE_MAGIC
            || u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != STORE_VERSION
            || u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize != rows
        {
            log::warn!("ignoring stale feature column {}", path.display());
            return Ok(None);
        }
        let mut values = Vec::with_capacity(rows);
        let mut degenerate = Vec::with_capacity(rows);
        for chunk in bytes[16..].chunks_exact(9) {
            values.push(f64::from_le_bytes(chunk[..8].try_into().unwrap()));
            degenerate.push(chunk[8] != 0);
        }
        Ok(Some(Column { values, degenerate }))
    }

    pub fn put(&self, key: &str, column: &Column) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 + 9 * column.values.len());
        bytes.extend_from_slice(STORE_MAGIC);
        bytes.extend_from_slice(&STORE_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(column.values.len() as u64).to_le_bytes());
        for (v, d) in column.values.iter().zip(&column.degenerate) {
            bytes.extend_from_slice(&v.to_le_bytes());
            bytes.push(u8::from(*d));
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        tmp.write_all(&bytes).map_err(|e| Error::io(tmp.path(), e))?;
        let path = self.path(key);
        tmp.persist(&path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn pair(id: &str, a: &str, b: &str, gold: f64) -> SentencePair {
        SentencePair {
            id: id.into(),
            a: Sentence::new(a),
            b: Sentence::new(b),
            gold,
        }
    }

    fn dataset(pairs: Vec<SentencePair>) -> Dataset {
        Dataset {
            name: "toy".into(),
            scale_max: 5.0,
            pairs,
        }
    }

    fn full_resources() -> Resources {
        Resources {
            hal: Some(crate::vecspace::build_hal_from_text("a b c", crate::vecspace::HalParams { window: 2, min_count: 1, max_vocab: 10 }).unwrap()),
            word_vectors: Some(WordVectors::from_entries([("a".to_string(), vec![1.0])], crate::vecspace::VectorSource::File).unwrap()),
            taxonomy: Some(Taxonomy::from_edges(&[("dog", "animal")], &[("pes", "dog")]).unwrap()),
            ..Resources::default()
        }
    }

    #[test]
    fn registry_sizes() {
        assert_eq!(default_registry(&Resources::default()).len(), 14);
        let full = default_registry(&full_resources());
        assert_eq!(full.len(), 9 + 5 + 2 + 3);
        let mut no_tax = full_resources();
        no_tax.taxonomy = None;
        assert!(default_registry(&no_tax).iter().all(|s| s.family != Family::Know));
        let ids: std::collections::HashSet<_> = full.iter().map(|s| &s.id).collect();
        assert_eq!(ids.len(), full.len());
    }

    #[test]
    fn resolve_names() {
        let reg = string_registry();
        let j = resolve(&reg, "jaccard-word").unwrap();
        assert_eq!(j.id, "jaccard");
        assert_eq!(*j.active(), FeatureConfig::Term(TermMetric::Jaccard, TokenMode::Word));
        assert_eq!(resolve(&reg, "jaccard-char3").unwrap().active_config, 2);
        assert_eq!(resolve(&reg, "lcsseq").unwrap().active_config, 0);
        assert!(resolve(&reg, "nope").is_none());
        assert!(known_names(&reg).contains(&"ochiai-char2".to_string()));
    }

    #[test]
    fn identical_pair_gives_ones() {
        let ds = dataset(vec![pair("p", "Muž hrá na gitare.", "Muž hrá na gitare.", 4.0)]);
        let m = build_matrix(&ds, &string_registry(), false, &Resources::default()).unwrap();
        assert_eq!(m.rows.row(0), vec![1.0; 14].as_slice());
        assert_eq!(m.gold, vec![4.0]);
    }

    #[test]
    fn toy_row_matches_direct_metrics() {
        let ds = dataset(vec![pair("p", "a b c", "b c d", 1.0)]);
        let reg = string_registry();
        let specs: Vec<FeatureSpec> = ["jaccard", "sorensen-dice", "ochiai", "levenshtein"]
            .iter()
            .map(|n| resolve(&reg, n).unwrap())
            .collect();
        let m = build_matrix(&ds, &specs, false, &Resources::default()).unwrap();
        let row = m.rows.row(0);
        assert_eq!(row[0], 0.5);
        assert!((row[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((row[2] - 2.0 / 3.0).abs() < 1e-12);
        // three substitutions over five chars
        assert!((row[3] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_and_missing_resources() {
        let m = build_matrix(&dataset(vec![]), &string_registry(), false, &Resources::default()).unwrap();
        assert_eq!(m.rows.nrows(), 0);
        assert!(build_matrix(&dataset(vec![]), &[], false, &Resources::default()).is_err());

        let full = default_registry(&full_resources());
        let path = full.iter().find(|s| s.id == "path").unwrap().clone();
        let ds = dataset(vec![pair("p1", "pes", "mačka", 1.0)]);
        match build_matrix(&ds, &[path], false, &Resources::default()).unwrap_err() {
            Error::Feature { spec, pair, .. } => assert_eq!((spec.as_str(), pair.as_str()), ("path", "p1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_cells_flagged() {
        let res = full_resources();
        let reg = default_registry(&res);
        let wv = reg.iter().find(|s| s.id == "word-vectors").unwrap().clone();
        let ds = dataset(vec![pair("p", "x y", "z", 1.0), pair("q", "a", "a", 2.0)]);
        let m = build_matrix(&ds, &[wv], false, &res).unwrap();
        assert!(m.is_degenerate(0, 0) && m.rows.get(0, 0) == 0.0);
        assert!(!m.is_degenerate(1, 0) && m.rows.get(1, 0) == 1.0);
    }

    #[test]
    fn table_uses_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = FeatureStore::open(dir.path()).unwrap();
        let ds = dataset(vec![pair("p", "pes šteká", "pes breše", 3.0), pair("q", "a", "b", 0.0)]);
        let reg = string_registry();
        let first = FeatureTable::build(&ds, &reg, false, &Resources::default(), Some(&store)).unwrap();
        let files = fs::read_dir(dir.path()).unwrap().count();
        let configs: usize = reg.iter().map(|s| s.configs.len()).sum();
        assert_eq!(files, configs);
        let second = FeatureTable::build(&ds, &reg, false, &Resources::default(), Some(&store)).unwrap();
        assert_eq!(first.columns, second.columns);

        let sel = [(0, 0), (9, 1)];
        let m = first.matrix(&sel).unwrap();
        assert_eq!(m.column_ids, vec!["hamming@default", "jaccard@char2"]);
        let csv = m.to_csv();
        assert!(csv.starts_with("hamming@default,jaccard@char2,gold\n"));
    }
}
