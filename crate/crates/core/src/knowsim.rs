//! Knowledge-based similarity over a rooted is-a taxonomy.
//!
//! Depth counts nodes on the longest upward path to the root, so the root
//! has depth 1 and every proper ancestor is strictly shallower than its
//! descendants. Path lengths are shortest undirected paths in edges.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Score;

pub const VIRTUAL_ROOT: &str = "<root>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KnowMetric {
    Path,
    WuPalmer,
    LeacockChodorow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnowAggregation {
    BestMatch,
    MaxPair,
}

impl KnowAggregation {
    pub fn label(&self) -> &'static str {
        match self {
            KnowAggregation::BestMatch => "best",
            KnowAggregation::MaxPair => "max",
        }
    }
}

#[derive(Debug)]
pub struct Taxonomy {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    root: usize,
    max_depth: usize,
    words: HashMap<String, Vec<usize>>,
    path_cache: Mutex<HashMap<(usize, usize), usize>>,
}

impl Taxonomy {
    /// Builds a taxonomy from `child -> parent` edges and `token -> synset`
    /// links. Parentless nodes are joined under a virtual root when there is
    /// more than one of them.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)], words: &[(S, S)]) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        let mut raw_edges = Vec::with_capacity(edges.len());
        for (child, parent) in edges {
            let (c, p) = (child.as_ref(), parent.as_ref());
            if c == p {
                return Err(Error::Taxonomy(format!("self-loop on `{c}`")));
            }
            let ci = intern(c, &mut names);
            let pi = intern(p, &mut names);
            raw_edges.push((ci, pi));
        }
        let mut word_links = Vec::with_capacity(words.len());
        for (token, synset) in words {
            let si = intern(synset.as_ref(), &mut names);
            word_links.push((token.as_ref().to_string(), si));
        }
        if names.is_empty() {
            return Err(Error::Taxonomy("taxonomy has no nodes".into()));
        }

        let mut parents = vec![Vec::new(); names.len()];
        for (c, p) in raw_edges {
            if !parents[c].contains(&p) {
                parents[c].push(p);
            }
        }
        let orphans: Vec<usize> = (0..names.len()).filter(|&i| parents[i].is_empty()).collect();
        if orphans.is_empty() {
            return Err(Error::Taxonomy("no parentless node: the graph has a cycle".into()));
        }
        let root = if orphans.len() == 1 {
            orphans[0]
        } else {
            let r = names.len();
            names.push(VIRTUAL_ROOT.to_string());
            parents.push(Vec::new());
            for &o in &orphans {
                parents[o].push(r);
            }
            r
        };
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            index.insert(n.clone(), i);
        }
        let mut children = vec![Vec::new(); names.len()];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }

        // Kahn's order from the root downward; longest-path depths.
        let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut depth = vec![0usize; names.len()];
        depth[root] = 1;
        let mut queue = VecDeque::from([root]);
        let mut visited = 0;
        while let Some(n) = queue.pop_front() {
            visited += 1;
            for &c in &children[n] {
                depth[c] = depth[c].max(depth[n] + 1);
                pending[c] -= 1;
                if pending[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if visited != names.len() {
            return Err(Error::Taxonomy("is-a graph contains a cycle".into()));
        }
        let max_depth = depth.iter().copied().max().unwrap_or(1);

        let mut word_map: HashMap<String, Vec<usize>> = HashMap::new();
        for (token, si) in word_links {
            let entry = word_map.entry(token).or_default();
            if !entry.contains(&si) {
                entry.push(si);
            }
        }

        Ok(Taxonomy {
            names,
            index,
            parents,
            children,
            depth,
            root,
            max_depth,
            words: word_map,
            path_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Parses the sectioned taxonomy file:
    ///
    /// ```text
    /// [edges]
    /// dog<TAB>animal
    /// [words]
    /// pes<TAB>dog
    /// ```
    ///
    /// Blank lines and lines starting with `#` are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut edges = Vec::new();
        let mut words = Vec::new();
        let mut section = None;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match line.trim() {
                "[edges]" => {
                    section = Some(true);
                    continue;
                }
                "[words]" => {
                    section = Some(false);
                    continue;
                }
                _ => {}
            }
            let mut parts = line.split('\t');
            let (Some(left), Some(right), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(path, idx + 1, "expected two tab-separated columns"));
            };
            let (left, right) = (left.trim().to_string(), right.trim().to_string());
            match section {
                Some(true) => edges.push((left, right)),
                Some(false) => words.push((crate::corpus::normalize(&left), right)),
                None => return Err(Error::parse(path, idx + 1, "entry before any [edges]/[words] header")),
            }
        }
        Self::from_edges(&edges, &words)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn root(&self) -> &str {
        &self.names[self.root]
    }

    /// Largest node depth, root counted as 1.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn contains(&self, synset: &str) -> bool {
        self.index.contains_key(synset)
    }

    fn id(&self, synset: &str) -> Result<usize> {
        self.index
            .get(synset)
            .copied()
            .ok_or_else(|| Error::UnknownSynset(synset.to_string()))
    }

    pub fn depth(&self, synset: &str) -> Result<usize> {
        Ok(self.depth[self.id(synset)?])
    }

    pub fn synsets_of(&self, word: &str) -> Option<Vec<&str>> {
        self.words
            .get(word)
            .map(|ids| ids.iter().map(|&i| self.names[i].as_str()).collect())
    }

    fn ancestors(&self, node: usize) -> HashSet<usize> {
        let mut seen = HashSet::from([node]);
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for &p in &self.parents[n] {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Deepest common ancestor; ties go to the lowest node index.
    fn lcs(&self, a: usize, b: usize) -> usize {
        let aa = self.ancestors(a);
        let ab = self.ancestors(b);
        aa.intersection(&ab)
            .copied()
            .max_by(|x, y| self.depth[*x].cmp(&self.depth[*y]).then(y.cmp(x)))
            .unwrap_or(self.root)
    }

    pub fn least_common_subsumer(&self, s1: &str, s2: &str) -> Result<&str> {
        let l = self.lcs(self.id(s1)?, self.id(s2)?);
        Ok(&self.names[l])
    }

    fn path_edges(&self, a: usize, b: usize) -> usize {
        if a == b {
            return 0;
        }
        let key = (a.min(b), a.max(b));
        if let Some(&e) = self.path_cache.lock().unwrap().get(&key) {
            return e;
        }
        let mut dist = HashMap::from([(a, 0usize)]);
        let mut queue = VecDeque::from([a]);
        let mut found = None;
        'bfs: while let Some(n) = queue.pop_front() {
            let d = dist[&n];
            for &m in self.parents[n].iter().chain(&self.children[n]) {
                if dist.contains_key(&m) {
                    continue;
                }
                if m == b {
                    found = Some(d + 1);
                    break 'bfs;
                }
                dist.insert(m, d + 1);
                queue.push_back(m);
            }
        }
        // Every node reaches the root, so the graph is connected.
        let e = found.expect("taxonomy is connected through its root");
        self.path_cache.lock().unwrap().insert(key, e);
        e
    }

    /// Shortest undirected is-a path between two synsets, in edges.
    pub fn shortest_path(&self, s1: &str, s2: &str) -> Result<usize> {
        Ok(self.path_edges(self.id(s1)?, self.id(s2)?))
    }

    fn similarity_ids(&self, metric: KnowMetric, a: usize, b: usize) -> f64 {
        match metric {
            KnowMetric::Path => 1.0 / (1.0 + self.path_edges(a, b) as f64),
            KnowMetric::WuPalmer => {
                let l = self.lcs(a, b);
                (2.0 * self.depth[l] as f64 / (self.depth[a] + self.depth[b]) as f64).clamp(0.0, 1.0)
            }
            KnowMetric::LeacockChodorow => {
                let nodes = (self.path_edges(a, b) + 1) as f64;
                let scale = 2.0 * self.max_depth as f64;
                (-(nodes / scale).ln() / scale.ln()).clamp(0.0, 1.0)
            }
        }
    }
}

pub fn synset_similarity(metric: KnowMetric, t: &Taxonomy, s1: &str, s2: &str) -> Result<f64> {
    Ok(t.similarity_ids(metric, t.id(s1)?, t.id(s2)?))
}

/// Max synset similarity over both words' senses. `None` when a word is not
/// in the taxonomy, unless the words are identical.
pub fn word_similarity(metric: KnowMetric, t: &Taxonomy, w1: &str, w2: &str) -> Option<f64> {
    if w1 == w2 {
        return Some(1.0);
    }
    let (a, b) = (t.words.get(w1)?, t.words.get(w2)?);
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| (x, y)))
        .map(|(x, y)| t.similarity_ids(metric, x, y))
        .reduce(f64::max)
}

pub fn sentence_similarity_know<S: AsRef<str>>(
    metric: KnowMetric,
    agg: KnowAggregation,
    t: &Taxonomy,
    a: &[S],
    b: &[S],
) -> Score {
    let table: Vec<Vec<Option<f64>>> = a
        .iter()
        .map(|x| b.iter().map(|y| word_similarity(metric, t, x.as_ref(), y.as_ref())).collect())
        .collect();
    match agg {
        KnowAggregation::MaxPair => table
            .iter()
            .flatten()
            .flatten()
            .copied()
            .reduce(f64::max)
            .map_or_else(Score::degenerate, Score::new),
        KnowAggregation::BestMatch => {
            let row_max: Vec<f64> = table
                .iter()
                .filter_map(|row| row.iter().flatten().copied().reduce(f64::max))
                .collect();
            let col_max: Vec<f64> = (0..b.len())
                .filter_map(|j| table.iter().filter_map(|row| row[j]).reduce(f64::max))
                .collect();
            if row_max.is_empty() || col_max.is_empty() {
                return Score::degenerate();
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Score::new((mean(&row_max) + mean(&col_max)) / 2.0)
        }
    }
}
