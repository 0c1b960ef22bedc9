//! Character-based similarity metrics.
//!
//! Every metric maps a pair of character sequences to `[0, 1]`. Two empty
//! sequences are identical (1.0); exactly one empty sequence scores 0.0.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScores {
    pub matched: f64,
    pub mismatch: f64,
    pub gap: f64,
}

impl Default for AlignmentScores {
    fn default() -> Self {
        AlignmentScores {
            matched: 1.0,
            mismatch: -1.0,
            gap: -1.0,
        }
    }
}

impl AlignmentScores {
    fn is_valid(&self) -> bool {
        self.matched > 0.0 && self.mismatch <= 0.0 && self.gap <= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CharMetric {
    Hamming,
    Levenshtein,
    DamerauLevenshtein,
    Jaro,
    JaroWinkler { prefix_weight: f64, max_prefix: usize },
    NeedlemanWunsch(AlignmentScores),
    SmithWaterman(AlignmentScores),
    LcsSeq,
    LcsStr,
}

impl CharMetric {
    pub fn jaro_winkler() -> Self {
        CharMetric::JaroWinkler {
            prefix_weight: 0.1,
            max_prefix: 4,
        }
    }

    pub fn needleman_wunsch() -> Self {
        CharMetric::NeedlemanWunsch(AlignmentScores::default())
    }

    pub fn smith_waterman() -> Self {
        CharMetric::SmithWaterman(AlignmentScores::default())
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            CharMetric::JaroWinkler {
                prefix_weight,
                max_prefix,
            } => prefix_weight > 0.0 && prefix_weight <= 0.25 && max_prefix <= 4,
            CharMetric::NeedlemanWunsch(s) | CharMetric::SmithWaterman(s) => s.is_valid(),
            _ => true,
        }
    }
}

pub fn char_similarity(metric: CharMetric, a: &[char], b: &[char]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let longest = a.len().max(b.len()) as f64;
    let sim = match metric {
        CharMetric::Hamming => 1.0 - hamming(a, b) as f64 / longest,
        CharMetric::Levenshtein => 1.0 - levenshtein(a, b) as f64 / longest,
        CharMetric::DamerauLevenshtein => 1.0 - damerau_levenshtein(a, b) as f64 / longest,
        CharMetric::Jaro => jaro(a, b),
        CharMetric::JaroWinkler {
            prefix_weight,
            max_prefix,
        } => jaro_winkler(a, b, prefix_weight, max_prefix),
        CharMetric::NeedlemanWunsch(scores) => {
            let score = needleman_wunsch(a, b, scores);
            (score + longest) / (2.0 * longest)
        }
        CharMetric::SmithWaterman(scores) => {
            let shortest = a.len().min(b.len()) as f64;
            smith_waterman(a, b, scores) / (scores.matched * shortest)
        }
        CharMetric::LcsSeq => lcs_subsequence(a, b) as f64 / longest,
        CharMetric::LcsStr => lcs_substring(a, b) as f64 / longest,
    };
    sim.clamp(0.0, 1.0)
}

/// Convenience wrapper over `char_similarity` for string slices.
pub fn str_similarity(metric: CharMetric, a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    char_similarity(metric, &a, &b)
}

/// Positional mismatches over the shared prefix length plus the length difference.
pub fn hamming(a: &[char], b: &[char]) -> usize {
    let mismatches = a.iter().zip(b).filter(|(x, y)| x != y).count();
    mismatches + a.len().abs_diff(b.len())
}

pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Restricted Damerau-Levenshtein (optimal string alignment): adjacent
/// transpositions count as one edit, and no substring is edited twice.
pub fn damerau_levenshtein(a: &[char], b: &[char]) -> usize {
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        d[i * width] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[(i - 1) * width + j] + 1)
                .min(d[i * width + j - 1] + 1)
                .min(d[(i - 1) * width + j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[(i - 2) * width + j - 2] + 1);
            }
            d[i * width + j] = best;
        }
    }
    d[n * width + m]
}

pub fn jaro(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == *ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let half_transpositions = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let m = matches as f64;
    let t = (half_transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

pub fn jaro_winkler(a: &[char], b: &[char], prefix_weight: f64, max_prefix: usize) -> f64 {
    let base = jaro(a, b);
    let prefix = a
        .iter()
        .zip(b)
        .take(max_prefix)
        .take_while(|(x, y)| x == y)
        .count();
    base + prefix as f64 * prefix_weight * (1.0 - base)
}

/// Global alignment score with linear gap penalties.
pub fn needleman_wunsch(a: &[char], b: &[char], scores: AlignmentScores) -> f64 {
    let mut prev: Vec<f64> = (0..=b.len()).map(|j| j as f64 * scores.gap).collect();
    let mut cur = vec![0.0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = (i + 1) as f64 * scores.gap;
        for (j, cb) in b.iter().enumerate() {
            let pair = if ca == cb { scores.matched } else { scores.mismatch };
            cur[j + 1] = (prev[j] + pair)
                .max(prev[j + 1] + scores.gap)
                .max(cur[j] + scores.gap);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Maximal cell of the local-alignment table.
pub fn smith_waterman(a: &[char], b: &[char], scores: AlignmentScores) -> f64 {
    let mut prev = vec![0.0f64; b.len() + 1];
    let mut cur = vec![0.0f64; b.len() + 1];
    let mut best = 0.0f64;
    for ca in a {
        cur[0] = 0.0;
        for (j, cb) in b.iter().enumerate() {
            let pair = if ca == cb { scores.matched } else { scores.mismatch };
            let v = (prev[j] + pair)
                .max(prev[j + 1] + scores.gap)
                .max(cur[j] + scores.gap)
                .max(0.0);
            cur[j + 1] = v;
            best = best.max(v);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

pub fn lcs_subsequence(a: &[char], b: &[char]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ca in a {
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn lcs_substring(a: &[char], b: &[char]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for ca in a {
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}
