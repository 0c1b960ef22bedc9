//! Pearson correlation, stratified splits and folds, the retrain-and-validate
//! step, bootstrap comparison of correlations, and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlmodels::{fit, Matrix, ModelKind};

pub const DEFAULT_BINS: usize = 5;

/// Product-moment correlation. `Ok(None)` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pearson needs at least 2 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Quantile stratum of every row. Rows with equal targets always share a
/// stratum; fewer rows than bins collapse to a single stratum.
pub fn quantile_strata(gold: &[f64], bins: usize) -> Vec<usize> {
    let n = gold.len();
    if bins <= 1 || n < bins {
        return vec![0; n];
    }
    let mut sorted = gold.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..bins).map(|b| sorted[b * n / bins]).collect();
    cuts.dedup();
    let raw: Vec<usize> = gold
        .iter()
        .map(|g| cuts.iter().filter(|c| g >= c).count())
        .collect();
    // Renumber densely in ascending order.
    let mut used: Vec<usize> = raw.clone();
    used.sort_unstable();
    used.dedup();
    raw.iter().map(|r| used.binary_search(r).expect("present")).collect()
}

fn strata_members(gold: &[f64], bins: usize) -> Vec<Vec<usize>> {
    let strata = quantile_strata(gold, bins);
    let count = strata.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); count];
    for (row, s) in strata.into_iter().enumerate() {
        members[s].push(row);
    }
    members
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

pub fn stratified_split(gold: &[f64], train_fraction: f64, bins: usize, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for mut members in strata_members(gold, bins) {
        members.shuffle(&mut rng);
        let take = (train_fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..take]);
        holdout.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok(Split { train, holdout })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub bins: usize,
    pub seed: u64,
    /// Fold of every row.
    pub assignment: Vec<usize>,
}

impl CvPlan {
    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == fold)
            .map(|(r, _)| r)
            .collect()
    }

    /// `(train rows, test rows)` for every fold.
    pub fn folds(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        (0..self.k)
            .map(|f| {
                let (test, train): (Vec<usize>, Vec<usize>) =
                    (0..self.assignment.len()).partition(|&r| self.assignment[r] == f);
                (train, test)
            })
            .collect()
    }
}

/// Seeded shuffle within each quantile stratum, then round-robin fold
/// assignment continuing across strata.
pub fn stratified_kfold(gold: &[f64], k: usize, bins: usize, seed: u64) -> Result<CvPlan> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    if k > gold.len() {
        return Err(Error::InvalidInput(format!(
            "{k} folds requested for {} rows",
            gold.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; gold.len()];
    let mut next = 0;
    for mut members in strata_members(gold, bins) {
        members.shuffle(&mut rng);
        for row in members {
            assignment[row] = next % k;
            next += 1;
        }
    }
    Ok(CvPlan {
        k,
        bins,
        seed,
        assignment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub method: String,
    pub family: String,
    pub dataset: String,
    pub pearson: Option<f64>,
    #[serde(default)]
    pub selected_features: Vec<String>,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
    #[serde(default)]
    pub runtime_secs: f64,
}

/// Retrains on every training row with the chosen columns and scores the
/// holdout rows.
pub fn finalize(
    kind: ModelKind,
    feature_ids: &[String],
    train_x: &Matrix,
    train_y: &[f64],
    holdout_x: &Matrix,
    holdout_y: &[f64],
    seed: u64,
) -> Result<(Option<f64>, Vec<f64>)> {
    if holdout_y.is_empty() {
        return Err(Error::InvalidInput("empty holdout set".into()));
    }
    let model = fit(kind, train_x, train_y, feature_ids, seed)?;
    let predictions = model.predict(holdout_x, feature_ids)?;
    let r = pearson(&predictions, holdout_y)?;
    Ok((r, predictions))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub delta: f64,
    pub p_value: f64,
}

/// Paired bootstrap over rows of `r(pred_a, gold) - r(pred_b, gold)`; the
/// two-sided p-value is twice the smaller tail mass at zero, capped at 1.
/// Resamples where either correlation is undefined count toward neither tail.
pub fn compare_correlations(
    pred_a: &[f64],
    pred_b: &[f64],
    gold: &[f64],
    n_resamples: usize,
    seed: u64,
) -> Result<Comparison> {
    if pred_a.len() != gold.len() || pred_b.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            actual: pred_a.len().max(pred_b.len()),
        });
    }
    if gold.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 rows to compare".into()));
    }
    if n_resamples == 0 {
        return Err(Error::InvalidInput("n_resamples must be >= 1".into()));
    }
    let ra = pearson(pred_a, gold)?.unwrap_or(0.0);
    let rb = pearson(pred_b, gold)?.unwrap_or(0.0);
    let n = gold.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut at_or_below, mut at_or_above, mut valid) = (0usize, 0usize, 0usize);
    let (mut sa, mut sb, mut sg) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..n_resamples {
        for i in 0..n {
            let j = rng.gen_range(0..n);
            sa[i] = pred_a[j];
            sb[i] = pred_b[j];
            sg[i] = gold[j];
        }
        let (Some(a), Some(b)) = (pearson(&sa, &sg)?, pearson(&sb, &sg)?) else {
            continue;
        };
        valid += 1;
        let d = a - b;
        if d <= 0.0 {
            at_or_below += 1;
        }
        if d >= 0.0 {
            at_or_above += 1;
        }
    }
    let p_value = if valid == 0 {
        1.0
    } else {
        (2.0 * at_or_below.min(at_or_above) as f64 / valid as f64).min(1.0)
    };
    Ok(Comparison {
        delta: ra - rb,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown report format `{other}`"))),
        }
    }
}

/// Family keys in table order with their section titles.
pub const FAMILY_SECTIONS: [(&str, &str); 6] = [
    ("char", "Character-based STS algorithms"),
    ("term", "Term-based STS algorithms"),
    ("vec", "Statistical STS algorithms"),
    ("know", "Knowledge-based STS algorithms"),
    ("embed", "Embedding services"),
    ("ml", "Custom ML models"),
];

fn family_rank(family: &str) -> usize {
    FAMILY_SECTIONS
        .iter()
        .position(|(k, _)| *k == family)
        .unwrap_or(FAMILY_SECTIONS.len())
}

/// One row of the long-format report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub family: String,
    pub method: String,
    pub dataset: String,
    pub pearson: Option<f64>,
    pub best: bool,
}

/// Long-format rows, grouped by family in table order, best per
/// (family, dataset) flagged. Later duplicates of (family, method, dataset)
/// replace earlier ones.
pub fn report_rows(entries: &[EvalEntry]) -> Vec<ReportRow> {
    let mut dedup: BTreeMap<(usize, String, String, String), Option<f64>> = BTreeMap::new();
    let mut order: BTreeMap<(usize, String, String, String), usize> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let key = (family_rank(&e.family), e.family.clone(), e.method.clone(), e.dataset.clone());
        order.entry(key.clone()).or_insert(i);
        dedup.insert(key, e.pearson);
    }
    let mut keys: Vec<_> = dedup.keys().cloned().collect();
    keys.sort_by_key(|k| (k.0, k.1.clone(), order[k]));
    let mut best: BTreeMap<(String, String), f64> = BTreeMap::new();
    for (k, r) in &dedup {
        if let Some(r) = r {
            let slot = best.entry((k.1.clone(), k.3.clone())).or_insert(f64::NEG_INFINITY);
            *slot = slot.max(*r);
        }
    }
    keys.into_iter()
        .map(|k| {
            let pearson = dedup[&k];
            let is_best = pearson.is_some_and(|r| best.get(&(k.1.clone(), k.3.clone())) == Some(&r));
            ReportRow {
                family: k.1,
                method: k.2,
                dataset: k.3,
                pearson,
                best: is_best,
            }
        })
        .collect()
}

pub fn render_report(entries: &[EvalEntry], format: ReportFormat) -> String {
    let rows = report_rows(entries);
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("family,method,dataset,pearson,best\n");
            for r in rows {
                let p = r.pearson.map_or_else(|| "NA".to_string(), |v| format!("{v}"));
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_field(&r.family),
                    csv_field(&r.method),
                    csv_field(&r.dataset),
                    p,
                    r.best
                );
            }
            out
        }
        ReportFormat::Markdown => render_markdown(&rows),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_markdown(rows: &[ReportRow]) -> String {
    let mut datasets: Vec<String> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.dataset) {
            datasets.push(r.dataset.clone());
        }
    }
    let mut out = String::from("| Method |");
    for d in &datasets {
        let _ = write!(out, " {d} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(datasets.len()));
    out.push('\n');

    let mut families: Vec<&str> = Vec::new();
    for r in rows {
        if !families.contains(&r.family.as_str()) {
            families.push(&r.family);
        }
    }
    for family in families {
        let title = FAMILY_SECTIONS
            .iter()
            .find(|(k, _)| *k == family)
            .map_or(family, |(_, t)| t);
        let _ = writeln!(out, "| **{title}** |{}", " |".repeat(datasets.len()));
        let mut methods: Vec<&str> = Vec::new();
        for r in rows.iter().filter(|r| r.family == family) {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        for method in methods {
            let _ = write!(out, "| {method} |");
            for d in &datasets {
                let cell = rows
                    .iter()
                    .find(|r| r.family == family && r.method == method && &r.dataset == d);
                match cell {
                    Some(ReportRow { pearson: Some(p), best: true, .. }) => {
                        let _ = write!(out, " **{p:.3}** |");
                    }
                    Some(ReportRow { pearson: Some(p), .. }) => {
                        let _ = write!(out, " {p:.3} |");
                    }
                    Some(ReportRow { pearson: None, .. }) => out.push_str(" n/a |"),
                    None => out.push_str(" |"),
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Parses the CSV produced by [`render_report`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("family,method,dataset,pearson,best") => {}
        _ => return Err(Error::InvalidInput("missing report CSV header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != 5 {
            return Err(Error::InvalidInput(format!("report line {}: expected 5 fields", i + 2)));
        }
        let pearson = match fields[3].as_str() {
            "NA" => None,
            v => Some(v.parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("report line {}: bad pearson {v:?}", i + 2))
            })?),
        };
        rows.push(ReportRow {
            family: fields[0].clone(),
            method: fields[1].clone(),
            dataset: fields[2].clone(),
            pearson,
            best: fields[4] == "true",
        });
    }
    Ok(rows)
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap().unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), None);
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn split_counts() {
        let gold: Vec<f64> = (0..100).map(|i| i as f64 / 20.0).collect();
        let s = stratified_split(&gold, 0.8, 5, 7).unwrap();
        assert_eq!((s.train.len(), s.holdout.len()), (80, 20));
        let strata = quantile_strata(&gold, 5);
        for b in 0..5 {
            let n = s.train.iter().filter(|&&r| strata[r] == b).count();
            assert!((15..=17).contains(&n), "stratum {b} has {n}");
        }

        let s = stratified_split(&[1.0, 2.0], 0.5, 5, 0).unwrap();
        assert_eq!((s.train.len(), s.holdout.len()), (1, 1));

        let s = stratified_split(&[3.0; 10], 0.7, 5, 1).unwrap();
        assert_eq!(quantile_strata(&[3.0; 10], 5), vec![0; 10]);
        assert_eq!(s.train.len(), 7);
        assert!(stratified_split(&gold, 1.0, 5, 0).is_err());
    }

    #[test]
    fn kfold_counts_and_determinism() {
        let gold: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let plan = stratified_kfold(&gold, 10, 5, 3).unwrap();
        let strata = quantile_strata(&gold, 5);
        for f in 0..10 {
            let rows = plan.fold_rows(f);
            assert_eq!(rows.len(), 10);
            for b in 0..5 {
                let n = rows.iter().filter(|&&r| strata[r] == b).count();
                assert!((1..=3).contains(&n));
            }
        }
        assert_eq!(plan, stratified_kfold(&gold, 10, 5, 3).unwrap());
        assert!(stratified_kfold(&gold[..5], 10, 5, 3).is_err());
        assert!(stratified_kfold(&gold, 1, 5, 3).is_err());
    }

    #[test]
    fn finalize_rejects_empty_holdout() {
        let x = Matrix::from_vec(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let ids = vec!["f".to_string()];
        let empty = Matrix::zeros(0, 1);
        assert!(finalize(ModelKind::Linear, &ids, &x, &[0.0, 1.0, 2.0], &empty, &[], 0).is_err());
    }

    #[test]
    fn comparison_edges() {
        let gold: Vec<f64> = (0..20).map(|i| (i as f64).sqrt()).collect();
        let pred: Vec<f64> = gold.iter().map(|g| g * 2.0 + (g * 7.0).sin()).collect();
        let c = compare_correlations(&pred, &pred, &gold, 200, 1).unwrap();
        assert_eq!(c.delta, 0.0);
        assert_eq!(c.p_value, 1.0);
        assert!(compare_correlations(&pred, &pred, &gold, 0, 1).is_err());
        assert!(compare_correlations(&pred[..3], &pred, &gold, 10, 1).is_err());
    }

    fn entry(family: &str, method: &str, dataset: &str, r: f64) -> EvalEntry {
        EvalEntry {
            method: method.into(),
            family: family.into(),
            dataset: dataset.into(),
            pearson: Some(r),
            selected_features: vec![],
            hyperparams: BTreeMap::new(),
            runtime_secs: 0.0,
        }
    }

    #[test]
    fn markdown_marks_best() {
        let one = render_report(&[entry("ml", "Linear Regression", "sick", 0.5)], ReportFormat::Markdown);
        assert_eq!(one.lines().filter(|l| l.starts_with("| Linear")).count(), 1);

        let md = render_report(
            &[
                entry("ml", "Linear Regression", "sick", 0.652),
                entry("ml", "Gradient Boosting Regression", "sick", 0.702),
                entry("term", "ochiai", "sick", 0.55),
            ],
            ReportFormat::Markdown,
        );
        assert!(md.contains("| Gradient Boosting Regression | **0.702** |"));
        assert!(md.contains("| Linear Regression | 0.652 |"));
        let term_at = md.find("Term-based").unwrap();
        let ml_at = md.find("Custom ML models").unwrap();
        assert!(term_at < ml_at);
    }

    #[test]
    fn csv_round_trip() {
        let entries = vec![
            entry("ml", "Linear, plain", "sts", 0.671234567),
            entry("ml", "Gradient Boosting Regression", "sts", 0.6851),
            EvalEntry {
                pearson: None,
                ..entry("char", "hamming", "sts", 0.0)
            },
        ];
        let csv = render_report(&entries, ReportFormat::Csv);
        let rows = parse_report_csv(&csv).unwrap();
        assert_eq!(rows, report_rows(&entries));
        let lin = rows.iter().find(|r| r.method == "Linear, plain").unwrap();
        assert_eq!(format!("{:.4}", lin.pearson.unwrap()), "0.6712");
        assert!(rows.iter().find(|r| r.method.starts_with("Gradient")).unwrap().best);
    }
}
