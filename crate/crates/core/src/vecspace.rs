//! Word vector spaces: HAL co-occurrence construction, pretrained vector
//! files, vector metrics, and sentence-level aggregation of word vectors.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, TokenMode};
use crate::error::{Error, Result};
use crate::Score;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VectorMetric {
    Cosine,
    Euclidean,
    Manhattan,
    Minkowski(f64),
}

impl VectorMetric {
    pub fn label(&self) -> String {
        match self {
            VectorMetric::Cosine => "cosine".into(),
            VectorMetric::Euclidean => "euclidean".into(),
            VectorMetric::Manhattan => "manhattan".into(),
            VectorMetric::Minkowski(p) => format!("minkowski{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    MeanVector,
    BestMatch,
}

impl Aggregation {
    pub fn label(&self) -> &'static str {
        match self {
            Aggregation::MeanVector => "mean",
            Aggregation::BestMatch => "best",
        }
    }
}

/// Similarity from coordinate pairs `(u_i, v_i)` over the union support.
fn similarity_from_pairs(metric: VectorMetric, pairs: impl Iterator<Item = (f64, f64)>) -> Score {
    match metric {
        VectorMetric::Cosine => {
            let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
            for (x, y) in pairs {
                dot += x * y;
                nu += x * x;
                nv += y * y;
            }
            if nu == 0.0 || nv == 0.0 {
                return Score::degenerate();
            }
            let cos = (dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0);
            Score::new((1.0 + cos) / 2.0)
        }
        VectorMetric::Euclidean => {
            let d = pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            Score::new(1.0 / (1.0 + d))
        }
        VectorMetric::Manhattan => {
            let d: f64 = pairs.map(|(x, y)| (x - y).abs()).sum();
            Score::new(1.0 / (1.0 + d))
        }
        VectorMetric::Minkowski(p) => {
            let d = pairs.map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p);
            Score::new(1.0 / (1.0 + d))
        }
    }
}

fn check_metric(metric: VectorMetric) -> Result<()> {
    match metric {
        VectorMetric::Minkowski(p) if !(p >= 1.0) => Err(Error::InvalidInput(format!(
            "Minkowski order must be >= 1, got {p}"
        ))),
        _ => Ok(()),
    }
}

/// Similarity of two dense vectors in `[0, 1]`. A zero vector under cosine
/// yields a degenerate 0.
pub fn vector_similarity(metric: VectorMetric, u: &[f64], v: &[f64]) -> Result<Score> {
    check_metric(metric)?;
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(similarity_from_pairs(metric, u.iter().copied().zip(v.iter().copied())))
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn from_map(map: &BTreeMap<u32, f64>) -> Self {
        SparseVector {
            indices: map.keys().copied().collect(),
            values: map.values().copied().collect(),
        }
    }

    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Coordinate pairs over the union of both supports.
    fn aligned<'a>(&'a self, other: &'a SparseVector) -> impl Iterator<Item = (f64, f64)> + 'a {
        let (mut i, mut j) = (0, 0);
        std::iter::from_fn(move || {
            let a = self.indices.get(i);
            let b = other.indices.get(j);
            match (a, b) {
                (None, None) => None,
                (Some(_), None) => {
                    i += 1;
                    Some((self.values[i - 1], 0.0))
                }
                (None, Some(_)) => {
                    j += 1;
                    Some((0.0, other.values[j - 1]))
                }
                (Some(x), Some(y)) => match x.cmp(y) {
                    std::cmp::Ordering::Less => {
                        i += 1;
                        Some((self.values[i - 1], 0.0))
                    }
                    std::cmp::Ordering::Greater => {
                        j += 1;
                        Some((0.0, other.values[j - 1]))
                    }
                    std::cmp::Ordering::Equal => {
                        i += 1;
                        j += 1;
                        Some((self.values[i - 1], other.values[j - 1]))
                    }
                },
            }
        })
    }
}

pub fn sparse_similarity(metric: VectorMetric, u: &SparseVector, v: &SparseVector) -> Result<Score> {
    check_metric(metric)?;
    Ok(similarity_from_pairs(metric, u.aligned(v)))
}

/// A token-indexed vector space usable for sentence similarity.
pub trait WordSpace: Sync {
    type Vector;

    fn lookup(&self, token: &str) -> Option<&Self::Vector>;
    fn mean(&self, vectors: &[&Self::Vector]) -> Self::Vector;
    fn similarity(&self, metric: VectorMetric, u: &Self::Vector, v: &Self::Vector) -> Score;
}

pub fn sentence_similarity<W, S>(space: &W, metric: VectorMetric, agg: Aggregation, a: &[S], b: &[S]) -> Score
where
    W: WordSpace,
    S: AsRef<str>,
{
    let va: Vec<&W::Vector> = a.iter().filter_map(|t| space.lookup(t.as_ref())).collect();
    let vb: Vec<&W::Vector> = b.iter().filter_map(|t| space.lookup(t.as_ref())).collect();
    if va.is_empty() || vb.is_empty() {
        return Score::degenerate();
    }
    match agg {
        Aggregation::MeanVector => space.similarity(metric, &space.mean(&va), &space.mean(&vb)),
        Aggregation::BestMatch => {
            let directed = |from: &[&W::Vector], to: &[&W::Vector]| {
                let total: f64 = from
                    .iter()
                    .map(|u| {
                        to.iter()
                            .map(|v| space.similarity(metric, u, v).value)
                            .fold(0.0, f64::max)
                    })
                    .sum();
                total / from.len() as f64
            };
            Score::new((directed(&va, &vb) + directed(&vb, &va)) / 2.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorSource {
    Hal,
    File,
    EmbeddingService,
}

/// Dense word vectors with a shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    rows: Vec<Vec<f64>>,
    dim: usize,
    pub source: VectorSource,
}

impl WordVectors {
    /// Builds from `(token, vector)` entries; later duplicates win.
    pub fn from_entries<I>(entries: I, source: VectorSource) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut wv = WordVectors {
            index: HashMap::new(),
            tokens: Vec::new(),
            rows: Vec::new(),
            dim: 0,
            source,
        };
        for (token, vector) in entries {
            wv.insert(token, vector)?;
        }
        if wv.rows.is_empty() {
            return Err(Error::InvalidInput("no word vectors".into()));
        }
        Ok(wv)
    }

    fn insert(&mut self, token: String, vector: Vec<f64>) -> Result<()> {
        if vector.is_empty() {
            return Err(Error::InvalidInput(format!("empty vector for `{token}`")));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite component for `{token}`")));
        }
        if self.rows.is_empty() {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        match self.index.get(&token) {
            Some(&i) => self.rows[i] = vector,
            None => {
                self.index.insert(token.clone(), self.rows.len());
                self.tokens.push(token);
                self.rows.push(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.rows[i].as_slice())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl WordSpace for WordVectors {
    type Vector = Vec<f64>;

    fn lookup(&self, token: &str) -> Option<&Vec<f64>> {
        self.index.get(token).map(|&i| &self.rows[i])
    }

    fn mean(&self, vectors: &[&Vec<f64>]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for v in vectors {
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        let n = vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    fn similarity(&self, metric: VectorMetric, u: &Vec<f64>, v: &Vec<f64>) -> Score {
        vector_similarity(metric, u, v).unwrap_or_else(|_| Score::degenerate())
    }
}

/// Reads the word2vec/fastText text format: an optional `count dim` header
/// followed by `token v1 ... vd` lines.
pub fn load_word_vectors(path: &Path) -> Result<WordVectors> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut wv = WordVectors {
        index: HashMap::new(),
        tokens: Vec::new(),
        rows: Vec::new(),
        dim: 0,
        source: VectorSource::File,
    };
    let mut declared_dim = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if idx == 0 && rest.len() == 1 {
            if let (Ok(_), Ok(d)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                declared_dim = Some(d);
                continue;
            }
        }
        let vector = rest
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::parse(path, lineno, "non-numeric vector component"))?;
        let expected = declared_dim.unwrap_or(if wv.rows.is_empty() { vector.len() } else { wv.dim });
        if vector.len() != expected {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {expected} components, found {}", vector.len()),
            ));
        }
        wv.insert(token.to_string(), vector)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
    }
    if wv.rows.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no word vectors", path.display())));
    }
    Ok(wv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HalParams {
    pub window: usize,
    pub min_count: usize,
    pub max_vocab: usize,
}

impl Default for HalParams {
    fn default() -> Self {
        HalParams {
            window: 10,
            min_count: 2,
            max_vocab: 50_000,
        }
    }
}

/// HAL co-occurrence space. Each token's vector has dimension `2 * |vocab|`:
/// indices `[0, |vocab|)` hold weights of tokens that followed it (its row),
/// indices `[|vocab|, 2|vocab|)` hold weights of tokens that preceded it
/// (its column). Stored sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceModel {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<SparseVector>,
    pub window: usize,
    pub min_count: usize,
}

const HAL_MAGIC: &[u8; 4] = b"HAL1";
const HAL_VERSION: u32 = 1;

impl CooccurrenceModel {
    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, token: &str) -> Option<&SparseVector> {
        self.index.get(token).map(|&i| &self.vectors[i])
    }

    /// Weight accumulated for `target` following `source`.
    pub fn weight(&self, source: &str, target: &str) -> f64 {
        match (self.index.get(source), self.index.get(target)) {
            (Some(&s), Some(&t)) => self.vectors[s].get(t as u32),
            _ => 0.0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(HAL_MAGIC)?;
        w.write_all(&HAL_VERSION.to_le_bytes())?;
        w.write_all(&(self.window as u64).to_le_bytes())?;
        w.write_all(&(self.min_count as u64).to_le_bytes())?;
        w.write_all(&(self.tokens.len() as u64).to_le_bytes())?;
        for (token, vector) in self.tokens.iter().zip(&self.vectors) {
            w.write_all(&(token.len() as u32).to_le_bytes())?;
            w.write_all(token.as_bytes())?;
            w.write_all(&(vector.nnz() as u32).to_le_bytes())?;
            for (i, v) in vector.indices.iter().zip(&vector.values) {
                w.write_all(&i.to_le_bytes())?;
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r).map_err(|e| match e.kind() {
            io::ErrorKind::InvalidData | io::ErrorKind::UnexpectedEof => {
                Error::InvalidInput(format!("{}: corrupt HAL model: {e}", path.display()))
            }
            _ => Error::io(path, e),
        })
    }

    fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        fn bad(msg: &str) -> io::Error {
            io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != HAL_MAGIC {
            return Err(bad("bad magic"));
        }
        if read_u32(r)? != HAL_VERSION {
            return Err(bad("unsupported version"));
        }
        let window = read_u64(r)? as usize;
        let min_count = read_u64(r)? as usize;
        let n = read_u64(r)? as usize;
        let mut tokens = Vec::with_capacity(n);
        let mut vectors = Vec::with_capacity(n);
        for _ in 0..n {
            let len = read_u32(r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            tokens.push(String::from_utf8(buf).map_err(|_| bad("token is not UTF-8"))?);
            let nnz = read_u32(r)? as usize;
            let mut v = SparseVector {
                indices: Vec::with_capacity(nnz),
                values: Vec::with_capacity(nnz),
            };
            for _ in 0..nnz {
                v.indices.push(read_u32(r)?);
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                v.values.push(f64::from_le_bytes(b));
            }
            vectors.push(v);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(CooccurrenceModel {
            tokens,
            index,
            vectors,
            window,
            min_count,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl WordSpace for CooccurrenceModel {
    type Vector = SparseVector;

    fn lookup(&self, token: &str) -> Option<&SparseVector> {
        self.vector(token)
    }

    fn mean(&self, vectors: &[&SparseVector]) -> SparseVector {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for v in vectors {
            for (i, x) in v.indices.iter().zip(&v.values) {
                *acc.entry(*i).or_default() += x;
            }
        }
        let n = vectors.len() as f64;
        acc.values_mut().for_each(|x| *x /= n);
        SparseVector::from_map(&acc)
    }

    fn similarity(&self, metric: VectorMetric, u: &SparseVector, v: &SparseVector) -> Score {
        sparse_similarity(metric, u, v).unwrap_or_else(|_| Score::degenerate())
    }
}

/// Builds a HAL space by streaming the corpus twice: once for token counts,
/// once for windowed co-occurrence weights. Windows never cross lines.
pub fn build_hal(corpus_path: &Path, params: HalParams) -> Result<CooccurrenceModel> {
    let open = || -> Result<Box<dyn Iterator<Item = Result<String>>>> {
        let file = File::open(corpus_path).map_err(|e| Error::io(corpus_path, e))?;
        let path = corpus_path.to_path_buf();
        Ok(Box::new(
            BufReader::new(file)
                .lines()
                .map(move |l| l.map_err(|e| Error::io(&path, e))),
        ))
    };
    build_hal_with(open, params)
}

/// Same as [`build_hal`] over an in-memory corpus.
pub fn build_hal_from_text(corpus: &str, params: HalParams) -> Result<CooccurrenceModel> {
    let open = || -> Result<Box<dyn Iterator<Item = Result<String>>>> {
        Ok(Box::new(corpus.lines().map(|l| Ok(l.to_string()))))
    };
    build_hal_with(open, params)
}

fn build_hal_with<'a, F>(open: F, params: HalParams) -> Result<CooccurrenceModel>
where
    F: Fn() -> Result<Box<dyn Iterator<Item = Result<String>> + 'a>>,
{
    if params.window == 0 {
        return Err(Error::InvalidInput("HAL window must be >= 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in open()? {
        for token in tokenize(&line?, TokenMode::Word) {
            *counts.entry(token).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= params.min_count)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(params.max_vocab);
    if ranked.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no token reaches min_count {}",
            params.min_count
        )));
    }
    let tokens: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
    let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let n = tokens.len() as u32;

    let mut acc: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); tokens.len()];
    for line in open()? {
        let ids: Vec<Option<u32>> = tokenize(&line?, TokenMode::Word)
            .iter()
            .map(|t| index.get(t).map(|&i| i as u32))
            .collect();
        for (pos, source) in ids.iter().enumerate() {
            let Some(source) = *source else { continue };
            for distance in 1..=params.window {
                let Some(&slot) = ids.get(pos + distance) else { break };
                let Some(target) = slot else { continue };
                let weight = (params.window - distance + 1) as f64;
                *acc[source as usize].entry(target).or_default() += weight;
                *acc[target as usize].entry(n + source).or_default() += weight;
            }
        }
    }
    Ok(CooccurrenceModel {
        vectors: acc.iter().map(SparseVector::from_map).collect(),
        tokens,
        index,
        window: params.window,
        min_count: params.min_count,
    })
}
