//! Dataset loading, text normalization and tokenization.
//!
//! Word tokens are NFC-normalized, lowercased runs of letters and digits.
//! Character n-grams are taken over the normalized character stream, where
//! punctuation is kept and whitespace runs collapse to a single space.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Default upper bound of the gold scale for STS Benchmark and SICK.
pub const DEFAULT_SCALE_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenMode {
    Word,
    CharNGram(u8),
}

impl TokenMode {
    pub fn char_ngram(n: u8) -> Result<Self> {
        if (1..=4).contains(&n) {
            Ok(TokenMode::CharNGram(n))
        } else {
            Err(Error::InvalidInput(format!(
                "character n-gram size must be in 1..=4, got {n}"
            )))
        }
    }

    pub fn label(&self) -> String {
        match self {
            TokenMode::Word => "word".to_string(),
            TokenMode::CharNGram(n) => format!("char{n}"),
        }
    }
}

impl fmt::Display for TokenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// NFC-normalized, lowercased text with whitespace runs collapsed to one
/// space and trimmed at both ends.
pub fn normalize(text: &str) -> String {
    let lowered: String = text.nfc().flat_map(char::to_lowercase).nfc().collect();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn word_tokens(text: &str) -> Vec<String> {
    let lowered: String = text.nfc().flat_map(char::to_lowercase).nfc().collect();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn char_ngrams(text: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = normalize(text).chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    // A nonempty stream shorter than n yields itself as a single gram.
    if chars.len() < n {
        return vec![chars.iter().collect()];
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Word => word_tokens(text),
        TokenMode::CharNGram(n) => char_ngrams(text, n.max(1) as usize),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub raw: String,
    pub tokens: Vec<String>,
    pub lemmas: Option<Vec<String>>,
}

impl Sentence {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = tokenize(&raw, TokenMode::Word);
        Sentence {
            raw,
            tokens,
            lemmas: None,
        }
    }

    /// Word tokens, or lemmas when `lemmatized` is set and lemmas exist.
    pub fn words(&self, lemmatized: bool) -> &[String] {
        match (&self.lemmas, lemmatized) {
            (Some(lemmas), true) => lemmas,
            _ => &self.tokens,
        }
    }

    /// The text the character-level metrics and n-gram tokenizer see.
    pub fn text(&self, lemmatized: bool) -> String {
        match (&self.lemmas, lemmatized) {
            (Some(lemmas), true) => lemmas.join(" "),
            _ => normalize(&self.raw),
        }
    }

    /// Tokens under `mode`, honoring the lemmatized variant.
    pub fn tokens_for(&self, mode: TokenMode, lemmatized: bool) -> Vec<String> {
        match mode {
            TokenMode::Word => self.words(lemmatized).to_vec(),
            TokenMode::CharNGram(_) => tokenize(&self.text(lemmatized), mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub a: Sentence,
    pub b: Sentence,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub scale_max: f64,
    pub pairs: Vec<SentencePair>,
}

impl Dataset {
    pub fn gold(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.gold).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// A new dataset holding the pairs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            scale_max: self.scale_max,
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
        }
    }

    pub fn apply_lemmas(&mut self, map: &LemmaMap) {
        for pair in &mut self.pairs {
            apply_lemmas_in_place(&mut pair.a, map);
            apply_lemmas_in_place(&mut pair.b, map);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    StsBenchmarkTsv,
    GenericTsv,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sts-benchmark-tsv" => Ok(DatasetFormat::StsBenchmarkTsv),
            "generic-tsv" => Ok(DatasetFormat::GenericTsv),
            other => Err(Error::InvalidInput(format!(
                "unknown dataset format `{other}`"
            ))),
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    load_dataset_with_scale(path, format, DEFAULT_SCALE_MAX)
}

pub fn load_dataset_with_scale(path: &Path, format: DatasetFormat, scale_max: f64) -> Result<Dataset> {
    if !(scale_max > 0.0) {
        return Err(Error::InvalidInput(format!(
            "scale_max must be positive, got {scale_max}"
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let pairs = parse_pairs(&text, format, scale_max, path)?;
    log::debug!("loaded {} pairs from {}", pairs.len(), path.display());
    Ok(Dataset {
        name,
        scale_max,
        pairs,
    })
}

struct Columns {
    id: Option<usize>,
    score: usize,
    a: usize,
    b: usize,
    width: usize,
}

fn parse_pairs(text: &str, format: DatasetFormat, scale_max: f64, path: &Path) -> Result<Vec<SentencePair>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let columns = match format {
        DatasetFormat::StsBenchmarkTsv => Columns {
            id: None,
            score: 0,
            a: 1,
            b: 2,
            width: 3,
        },
        DatasetFormat::GenericTsv => {
            let Some((idx, header)) = lines.next() else {
                return Ok(Vec::new());
            };
            let names: Vec<String> = header.split('\t').map(|h| h.trim().to_lowercase()).collect();
            let find = |want: &str| names.iter().position(|n| n == want);
            let missing = |col: &str| Error::parse(path, idx + 1, format!("header lacks a `{col}` column"));
            Columns {
                id: find("id"),
                score: find("score").ok_or_else(|| missing("score"))?,
                a: find("sentence1").ok_or_else(|| missing("sentence1"))?,
                b: find("sentence2").ok_or_else(|| missing("sentence2"))?,
                width: names.len(),
            }
        }
    };

    let mut pairs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.width {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} tab-separated columns, found {}", columns.width, fields.len()),
            ));
        }
        let gold: f64 = fields[columns.score]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("unparsable score {:?}", fields[columns.score])))?;
        if !(0.0..=scale_max).contains(&gold) {
            return Err(Error::parse(
                path,
                lineno,
                format!("score {gold} outside [0, {scale_max}]"),
            ));
        }
        let id = match columns.id {
            Some(c) => fields[c].trim().to_string(),
            None => format!("line-{lineno}"),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate pair id `{id}`")));
        }
        pairs.push(SentencePair {
            id,
            a: Sentence::new(fields[columns.a]),
            b: Sentence::new(fields[columns.b]),
            gold,
        });
    }
    Ok(pairs)
}

/// Surface token to lemma dictionary.
pub type LemmaMap = HashMap<String, String>;

/// Loads a `surface<TAB>lemma` file; later duplicates override earlier ones.
/// Both columns pass through the word normalizer.
pub fn load_lemma_map(path: &Path) -> Result<LemmaMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = LemmaMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(surface), Some(lemma), None) => {
                map.insert(normalize(surface), normalize(lemma));
            }
            _ => return Err(Error::parse(path, idx + 1, "expected `surface<TAB>lemma`")),
        }
    }
    Ok(map)
}

pub fn apply_lemmas(sentence: &Sentence, map: &LemmaMap) -> Sentence {
    let mut out = sentence.clone();
    apply_lemmas_in_place(&mut out, map);
    out
}

fn apply_lemmas_in_place(sentence: &mut Sentence, map: &LemmaMap) {
    sentence.lemmas = Some(
        sentence
            .tokens
            .iter()
            .map(|t| map.get(t).cloned().unwrap_or_else(|| t.clone()))
            .collect(),
    );
}
