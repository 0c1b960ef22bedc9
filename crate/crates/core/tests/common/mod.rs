//! Brute-force reference implementations and seeded input generators.
//!
//! Everything here is deliberately naive: recursion without memoization,
//! exhaustive enumeration, dense matrices. Shared with the acceptance
//! target in the cli crate.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sts_core::corpus::{tokenize, TokenMode};
use sts_core::eval::{stratified_kfold, CvPlan};
use sts_core::features::FeatureTable;

pub fn random_string(rng: &mut ChaCha8Rng, max_len: usize, alphabet: &[char]) -> Vec<char> {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

pub fn edit_distance(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let (n, m) = (a.len(), b.len());
    let cost = usize::from(a[n - 1] != b[m - 1]);
    (edit_distance(&a[..n - 1], b) + 1)
        .min(edit_distance(a, &b[..m - 1]) + 1)
        .min(edit_distance(&a[..n - 1], &b[..m - 1]) + cost)
}

/// Edit distance with adjacent transpositions, no substring edited twice.
pub fn osa_distance(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let (n, m) = (a.len(), b.len());
    let cost = usize::from(a[n - 1] != b[m - 1]);
    let mut best = (osa_distance(&a[..n - 1], b) + 1)
        .min(osa_distance(a, &b[..m - 1]) + 1)
        .min(osa_distance(&a[..n - 1], &b[..m - 1]) + cost);
    if n > 1 && m > 1 && a[n - 1] == b[m - 2] && a[n - 2] == b[m - 1] {
        best = best.min(osa_distance(&a[..n - 2], &b[..m - 2]) + 1);
    }
    best
}

pub fn global_alignment(a: &[char], b: &[char], matched: f64, mismatch: f64, gap: f64) -> f64 {
    if a.is_empty() {
        return b.len() as f64 * gap;
    }
    if b.is_empty() {
        return a.len() as f64 * gap;
    }
    let (n, m) = (a.len(), b.len());
    let pair = if a[n - 1] == b[m - 1] { matched } else { mismatch };
    (global_alignment(&a[..n - 1], &b[..m - 1], matched, mismatch, gap) + pair)
        .max(global_alignment(&a[..n - 1], b, matched, mismatch, gap) + gap)
        .max(global_alignment(a, &b[..m - 1], matched, mismatch, gap) + gap)
}

/// Best global alignment over every pair of substrings (empty ones included).
pub fn local_alignment(a: &[char], b: &[char], matched: f64, mismatch: f64, gap: f64) -> f64 {
    let mut best = 0.0f64;
    for i in 0..a.len() {
        for j in i + 1..=a.len() {
            for k in 0..b.len() {
                for l in k + 1..=b.len() {
                    best = best.max(global_alignment(&a[i..j], &b[k..l], matched, mismatch, gap));
                }
            }
        }
    }
    best
}

fn is_subsequence(needle: &[char], hay: &[char]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|c| it.any(|h| h == c))
}

pub fn longest_common_subsequence(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let pick: Vec<char> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| short[i]).collect();
        if pick.len() > best && is_subsequence(&pick, long) {
            best = pick.len();
        }
    }
    best
}

pub fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    let mut best = 0;
    for i in 0..a.len() {
        for j in i + 1..=a.len() {
            let s = &a[i..j];
            if s.len() > best && b.windows(s.len()).any(|w| w == s) {
                best = s.len();
            }
        }
    }
    best
}

/// Dense HAL matrix by enumerating every in-window position pair.
pub struct HalOracle {
    pub tokens: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn hal_oracle(corpus: &str, window: usize, min_count: usize, max_vocab: usize) -> HalOracle {
    let lines: Vec<Vec<String>> = corpus.lines().map(|l| tokenize(l, TokenMode::Word)).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in lines.iter().flatten() {
        *counts.entry(t).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    ranked.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(y.0)));
    ranked.truncate(max_vocab);
    let tokens: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
    let index: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let v = tokens.len();
    let mut rows = vec![vec![0.0; 2 * v]; v];
    for line in &lines {
        for p in 0..line.len() {
            for q in p + 1..line.len() {
                let d = q - p;
                if d > window {
                    continue;
                }
                if let (Some(&s), Some(&t)) = (index.get(line[p].as_str()), index.get(line[q].as_str())) {
                    let w = (window - d + 1) as f64;
                    rows[s][t] += w;
                    rows[t][v + s] += w;
                }
            }
        }
    }
    HalOracle { tokens, rows }
}

pub fn random_corpus(rng: &mut ChaCha8Rng, max_tokens: usize) -> String {
    let words = ["a", "b", "c", "d", "e", "f"];
    let total = rng.gen_range(1..=max_tokens);
    let mut out = String::new();
    let mut written = 0;
    while written < total {
        let len = rng.gen_range(1..=8).min(total - written);
        let line: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
        written += len;
    }
    out
}

/// Random is-a graph over `n0..n{k-1}`; each node's parents have lower
/// indices. Some nodes stay parentless.
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> Vec<(String, String)> {
    let k = rng.gen_range(2..=max_nodes);
    let mut edges = Vec::new();
    for i in 1..k {
        if rng.gen_bool(0.1) {
            continue;
        }
        let n_parents = if rng.gen_bool(0.25) { 2 } else { 1 };
        let mut parents = BTreeSet::new();
        for _ in 0..n_parents {
            parents.insert(rng.gen_range(0..i));
        }
        for p in parents {
            edges.push((format!("n{i}"), format!("n{p}")));
        }
    }
    if edges.is_empty() {
        edges.push(("n1".into(), "n0".into()));
    }
    edges
}

/// Path, Wu-Palmer and Leacock-Chodorow for every node pair, from
/// Floyd-Warshall distances and recursive depths.
pub struct TaxonomyOracle {
    pub names: Vec<String>,
    pub path: Vec<Vec<f64>>,
    pub wu_palmer: Vec<Vec<f64>>,
    pub lch: Vec<Vec<f64>>,
}

pub fn taxonomy_oracle(edges: &[(String, String)], virtual_root: &str) -> TaxonomyOracle {
    let mut names: BTreeSet<String> = BTreeSet::new();
    for (c, p) in edges {
        names.insert(c.clone());
        names.insert(p.clone());
    }
    let mut names: Vec<String> = names.into_iter().collect();
    let idx = |names: &[String], s: &str| names.iter().position(|n| n == s).unwrap();
    let mut parents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); names.len()];
    for (c, p) in edges {
        let (ci, pi) = (idx(&names, c), idx(&names, p));
        parents[ci].insert(pi);
    }
    let orphans: Vec<usize> = (0..names.len()).filter(|&i| parents[i].is_empty()).collect();
    if orphans.len() > 1 {
        names.push(virtual_root.to_string());
        parents.push(BTreeSet::new());
        let r = names.len() - 1;
        for o in orphans {
            parents[o].insert(r);
        }
    }
    let n = names.len();

    fn depth(parents: &[BTreeSet<usize>], x: usize) -> usize {
        1 + parents[x].iter().map(|&p| depth(parents, p)).max().unwrap_or(0)
    }
    fn ancestors(parents: &[BTreeSet<usize>], x: usize, out: &mut BTreeSet<usize>) {
        out.insert(x);
        for &p in &parents[x] {
            ancestors(parents, p, out);
        }
    }
    let depths: Vec<usize> = (0..n).map(|x| depth(&parents, x)).collect();
    let max_depth = *depths.iter().max().unwrap() as f64;

    let inf = usize::MAX / 4;
    let mut dist = vec![vec![inf; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0;
    }
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            dist[c][p] = 1;
            dist[p][c] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if dist[i][k] + dist[k][j] < dist[i][j] {
                    dist[i][j] = dist[i][k] + dist[k][j];
                }
            }
        }
    }

    let mut path = vec![vec![0.0; n]; n];
    let mut wu_palmer = vec![vec![0.0; n]; n];
    let mut lch = vec![vec![0.0; n]; n];
    for a in 0..n {
        let mut anc_a = BTreeSet::new();
        ancestors(&parents, a, &mut anc_a);
        for b in 0..n {
            let mut anc_b = BTreeSet::new();
            ancestors(&parents, b, &mut anc_b);
            let lcs_depth = anc_a.intersection(&anc_b).map(|&x| depths[x]).max().unwrap();
            let d = dist[a][b] as f64;
            path[a][b] = 1.0 / (1.0 + d);
            wu_palmer[a][b] = (2.0 * lcs_depth as f64 / (depths[a] + depths[b]) as f64).min(1.0);
            let scale = 2.0 * max_depth;
            lch[a][b] = (-((d + 1.0) / scale).ln() / scale.ln()).clamp(0.0, 1.0);
        }
    }
    TaxonomyOracle {
        names,
        path,
        wu_palmer,
        lch,
    }
}

/// Ten uniform columns; gold is an affine function of columns 0, 3 and 7
/// plus Gaussian-ish noise.
pub fn planted_table(rows: usize, seed: u64) -> (FeatureTable, CvPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..10).map(|_| (0..rows).map(|_| rng.gen()).collect()).collect();
    let gold: Vec<f64> = (0..rows)
        .map(|r| {
            let noise: f64 = (0..4).map(|_| rng.gen::<f64>() - 0.5).sum::<f64>() * 0.3;
            1.0 + 2.0 * columns[0][r] + 1.5 * columns[3][r] - columns[7][r] + noise
        })
        .collect();
    let ids: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
    let cv = stratified_kfold(&gold, 10, 5, seed).unwrap();
    (FeatureTable::from_columns(&ids, columns, gold).unwrap(), cv)
}

pub const PLANTED: [usize; 3] = [0, 3, 7];

/// Minimal HTTP embedding endpoint on a loopback port.
///
/// Each text embeds to `[chars, first char code, batch position]`. Data
/// entries come back in reverse order so clients must sort by `index`.
/// The first `fail_first` requests get a 503.
pub struct StubServer {
    pub url: String,
    pub batches: std::sync::Arc<std::sync::Mutex<Vec<Vec<String>>>>,
}

impl StubServer {
    pub fn start(fail_first: usize) -> Self {
        use std::io::{BufRead, BufReader, Read, Write};
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::{Arc, Mutex};

        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/embeddings", listener.local_addr().unwrap());
        let batches: Arc<Mutex<Vec<Vec<String>>>> = Arc::default();
        let seen = Arc::clone(&batches);
        let served = AtomicUsize::new(0);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0; length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                let (status, payload) = if served.fetch_add(1, Ordering::SeqCst) < fail_first {
                    ("503 Service Unavailable", String::from("{\"error\":\"busy\"}"))
                } else {
                    let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
                    let inputs: Vec<String> = request["input"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|v| v.as_str().unwrap().to_string())
                        .collect();
                    let data: Vec<serde_json::Value> = inputs
                        .iter()
                        .enumerate()
                        .rev()
                        .map(|(i, t)| {
                            let first = t.chars().next().map_or(0, |c| c as u32);
                            serde_json::json!({
                                "index": i,
                                "embedding": [t.chars().count() as f64, first as f64, i as f64 + 0.25],
                            })
                        })
                        .collect();
                    seen.lock().unwrap().push(inputs);
                    ("200 OK", serde_json::json!({ "data": data }).to_string())
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
            }
        });
        StubServer { url, batches }
    }

    pub fn expected(text: &str, position: usize) -> Vec<f64> {
        let first = text.chars().next().map_or(0, |c| c as u32);
        vec![text.chars().count() as f64, first as f64, position as f64 + 0.25]
    }
}
