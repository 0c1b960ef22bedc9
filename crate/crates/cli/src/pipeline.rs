use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Serialize;
use sts_core::abcopt::{optimize_model, ModelFamily, RunArtifact, SearchSpace};
use sts_core::corpus::{load_dataset_with_scale, load_lemma_map, normalize, tokenize, LemmaMap, DEFAULT_SCALE_MAX};
use sts_core::embedclient::{embed_words, EmbedClient, EmbedConfig, EmbedMode};
use sts_core::eval::{finalize, pearson, stratified_kfold, stratified_split, EvalEntry, Split};
use sts_core::features::{default_registry, resource_tag, FeatureStore, FeatureTable, Resources};
use sts_core::knowsim::Taxonomy;
use sts_core::vecspace::{build_hal_from_text, load_word_vectors, CooccurrenceModel};
use sts_core::{Dataset, FeatureSpec, TokenMode};

use crate::config::RunConfig;
use crate::Failure;

pub const ARTIFACT_VERSION: u32 = 1;

/// A dataset name from the config, or a path to a dataset file.
pub fn load_dataset_arg(cfg: &RunConfig, name: &str, lemmatized: bool) -> Result<(String, Dataset, Option<LemmaMap>), Failure> {
    let (label, entry) = match cfg.datasets.get(name) {
        Some(e) => (name.to_string(), e.clone()),
        None => {
            let path = PathBuf::from(name);
            if !path.is_file() {
                let known: Vec<&str> = cfg.datasets.keys().map(String::as_str).collect();
                return Err(Failure::usage(format!(
                    "dataset `{name}` is neither a configured dataset ({}) nor an existing file",
                    known.join(", ")
                )));
            }
            let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let entry = crate::config::DatasetEntry {
                path,
                format: "sts-benchmark-tsv".into(),
                lemmas: None,
                scale_max: None,
            };
            (label, entry)
        }
    };
    if lemmatized && entry.lemmas.is_none() {
        return Err(Failure::usage(format!("dataset `{label}` has no lemma map for --lemmatized")));
    }
    let format = entry.format().map_err(Failure::usage)?;
    let mut dataset = load_dataset_with_scale(&entry.path, format, entry.scale_max.unwrap_or(DEFAULT_SCALE_MAX))
        .map_err(|e| Failure::runtime("load dataset", e))?;
    dataset.name = label.clone();
    let lemmas = match &entry.lemmas {
        Some(p) if lemmatized => {
            let map = load_lemma_map(p).map_err(|e| Failure::runtime("load lemmas", e))?;
            dataset.apply_lemmas(&map);
            Some(map)
        }
        _ => None,
    };
    Ok((label, dataset, lemmas))
}

fn lemmatize_corpus(text: &str, map: &LemmaMap) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let words: Vec<String> = tokenize(&normalize(line), TokenMode::Word)
            .into_iter()
            .map(|w| map.get(&w).cloned().unwrap_or(w))
            .collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}

/// Loads every configured resource. Returns whether a live embedding
/// service was used.
pub fn load_resources(
    cfg: &RunConfig,
    dataset: &Dataset,
    lemmatized: bool,
    lemmas: Option<&LemmaMap>,
) -> anyhow::Result<(Resources, bool)> {
    let r = &cfg.resources;
    let mut res = Resources::default();
    let mut tag_files: Vec<&Path> = Vec::new();
    let mut tag_extra = String::new();

    if let Some(p) = &r.taxonomy {
        res.taxonomy = Some(Taxonomy::load(p).context("loading taxonomy")?);
        tag_files.push(p);
    }
    if let Some(p) = &r.word_vectors {
        res.word_vectors = Some(load_word_vectors(p).context("loading word vectors")?);
        tag_files.push(p);
    }
    if let Some(p) = &r.hal_model {
        res.hal = Some(CooccurrenceModel::load(p).context("loading HAL model")?);
        tag_files.push(p);
    }
    if let Some(p) = &r.hal_corpus {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let text = match lemmas {
            Some(map) => lemmatize_corpus(&text, map),
            None => text,
        };
        res.hal = Some(build_hal_from_text(&text, cfg.hal).context("building HAL model")?);
        tag_files.push(p);
        tag_extra.push_str(&format!("hal:{:?}", cfg.hal));
    }

    let mut live = false;
    if let Some(e) = &cfg.embed {
        let mut ec = EmbedConfig::default();
        if let Some(v) = &e.base_url {
            ec.base_url = v.clone();
        }
        if let Some(v) = &e.model {
            ec.model_name = v.clone();
        }
        if let Some(v) = &e.api_key_env {
            ec.api_key_env = v.clone();
        }
        if let Some(v) = e.max_batch {
            ec.max_batch = v;
        }
        if let Some(v) = e.parallel_batches {
            ec.parallel_batches = v;
        }
        ec.cache_dir = e.cache_dir.clone();
        match &e.fixture {
            Some(p) => {
                ec.mode = EmbedMode::Fixture { path: p.clone() };
                tag_files.push(p);
            }
            None => live = true,
        }
        tag_extra.push_str(&format!("embed:{}", ec.model_name));
        let client = EmbedClient::new(ec).context("creating embedding client")?;
        if e.words {
            let words: Vec<&String> = dataset
                .pairs
                .iter()
                .flat_map(|p| p.a.words(lemmatized).iter().chain(p.b.words(lemmatized)))
                .collect();
            if !words.is_empty() {
                res.embed_words = Some(embed_words(&client, &words).context("embedding words")?);
            }
        }
        if e.sentences {
            let mut texts: Vec<String> = dataset.pairs.iter().flat_map(|p| [p.a.raw.clone(), p.b.raw.clone()]).collect();
            texts.sort();
            texts.dedup();
            if !texts.is_empty() {
                let vectors = client.embed(&texts).context("embedding sentences")?;
                res.sentence_embeddings = Some(texts.into_iter().zip(vectors).collect::<HashMap<_, _>>());
            }
        }
        let s = client.stats();
        log::info!(
            "embedding client: {} requests, {} cache hits, {} cache writes",
            s.requests,
            s.cache_hits,
            s.cache_writes
        );
    }
    res.tag = format!("{}|{tag_extra}", resource_tag(&tag_files)?);
    Ok((res, live))
}

pub fn registry(cfg: &RunConfig, resources: &Resources) -> anyhow::Result<Vec<FeatureSpec>> {
    let all = default_registry(resources);
    match &cfg.features {
        None => Ok(all),
        Some(ids) => {
            let mut out = Vec::new();
            for id in ids {
                match all.iter().find(|s| &s.id == id) {
                    Some(s) => out.push(s.clone()),
                    None => bail!("feature `{id}` is unknown or its resource is not configured"),
                }
            }
            Ok(out)
        }
    }
}

pub struct Prepared {
    pub label: String,
    pub dataset: Dataset,
    pub table: FeatureTable,
    pub split: Split,
    pub live: bool,
}

pub fn prepare(cfg: &RunConfig, dataset_arg: &str, lemmatized: bool) -> Result<Prepared, Failure> {
    let (label, dataset, lemmas) = load_dataset_arg(cfg, dataset_arg, lemmatized)?;
    if dataset.len() < cfg.split.folds * 2 {
        return Err(Failure::runtime(
            "split",
            format!("{} pairs are too few for {} folds", dataset.len(), cfg.split.folds),
        ));
    }
    let (resources, live) =
        load_resources(cfg, &dataset, lemmatized, lemmas.as_ref()).map_err(|e| Failure::runtime("load resources", e))?;
    let specs = registry(cfg, &resources).map_err(Failure::usage)?;
    let store = match &cfg.resources.feature_store {
        Some(dir) => Some(FeatureStore::open(dir).map_err(|e| Failure::runtime("feature store", e))?),
        None => None,
    };
    let table = FeatureTable::build(&dataset, &specs, lemmatized, &resources, store.as_ref())
        .map_err(|e| Failure::runtime("build features", e))?;
    let split = stratified_split(&dataset.gold(), cfg.split.train_fraction, cfg.split.bins, cfg.seed)
        .map_err(|e| Failure::runtime("split", e))?;
    Ok(Prepared {
        label,
        dataset,
        table,
        split,
        live,
    })
}

pub fn variant(lemmatized: bool) -> &'static str {
    if lemmatized {
        "lemmatized"
    } else {
        "raw"
    }
}

#[derive(Serialize)]
struct Timing {
    wall_secs: f64,
}

pub struct OptimizeOutcome {
    pub artifact: RunArtifact,
    pub path: PathBuf,
}

pub fn optimize(cfg: &RunConfig, family: ModelFamily, dataset_arg: &str, lemmatized: bool) -> Result<OptimizeOutcome, Failure> {
    let started = Instant::now();
    let p = prepare(cfg, dataset_arg, lemmatized)?;
    let train = p.table.subset(&p.split.train);
    let cv = stratified_kfold(&train.gold, cfg.split.folds, cfg.split.bins, cfg.seed)
        .map_err(|e| Failure::runtime("cross-validation plan", e))?;
    let space = SearchSpace::new(train.config_counts(), family).map_err(|e| Failure::runtime("search space", e))?;
    let abc = cfg.abc.with_seed(cfg.seed);
    let (run, decoded) =
        optimize_model(&abc, &space, &train, &cv, cfg.seed).map_err(|e| Failure::runtime("optimize", e))?;

    let selected = train.column_ids(&decoded.features);
    let holdout_pearson = if decoded.features.is_empty() {
        None
    } else {
        let holdout = p.table.subset(&p.split.holdout);
        let (r, _) = finalize(
            decoded.kind,
            &selected,
            &train.design(&decoded.features, &(0..train.n_rows()).collect::<Vec<_>>()),
            &train.gold,
            &holdout.design(&decoded.features, &(0..holdout.n_rows()).collect::<Vec<_>>()),
            &holdout.gold,
            cfg.seed,
        )
        .map_err(|e| Failure::runtime("finalize", e))?;
        r
    };

    let artifact = RunArtifact {
        version: ARTIFACT_VERSION,
        dataset: p.label.clone(),
        lemmatized,
        model: family,
        abc,
        seed: cfg.seed,
        live_embeddings: p.live,
        history: run.history,
        best_fitness: run.best_fitness,
        evaluations: run.evaluations,
        scouts: run.scouts,
        selected_features: selected,
        hyperparams: decoded.hyperparams,
        kind: decoded.kind,
        holdout_pearson,
        train_rows: p.split.train.len(),
        holdout_ids: p.split.holdout.iter().map(|&i| p.dataset.pairs[i].id.clone()).collect(),
    };
    let stem = format!("{}-{}-{}", p.label, variant(lemmatized), family.name());
    let path = write_json(&cfg.output_dir, &format!("{stem}.json"), &artifact)?;
    write_json(
        &cfg.output_dir,
        &format!("{stem}.timing.json"),
        &Timing {
            wall_secs: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(OptimizeOutcome { artifact, path })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime("write output", e))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::runtime("write output", e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Failure::runtime("write output", e))?;
    Ok(path)
}

/// Holdout Pearson of every single traditional feature. Each spec uses the
/// config with the best training Pearson.
pub fn baseline(cfg: &RunConfig, dataset_arg: &str, lemmatized: bool) -> Result<(Vec<EvalEntry>, PathBuf), Failure> {
    let p = prepare(cfg, dataset_arg, lemmatized)?;
    let train = p.table.subset(&p.split.train);
    let holdout = p.table.subset(&p.split.holdout);
    let dataset = format!("{} ({})", p.label, variant(lemmatized));
    let mut entries = Vec::new();
    for (s, spec) in p.table.specs.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..spec.configs.len() {
            let r = pearson(&train.columns[s][c].values, &train.gold)
                .map_err(|e| Failure::runtime("baseline", e))?
                .unwrap_or(f64::NEG_INFINITY);
            if best.map_or(true, |(_, b)| r > b) {
                best = Some((c, r));
            }
        }
        let (c, _) = best.expect("specs have configs");
        let r = pearson(&holdout.columns[s][c].values, &holdout.gold).map_err(|e| Failure::runtime("baseline", e))?;
        entries.push(EvalEntry {
            method: spec.column_name(c),
            family: spec.family.key().to_string(),
            dataset: dataset.clone(),
            pearson: r,
            selected_features: vec![spec.column_name(c)],
            hyperparams: BTreeMap::new(),
            runtime_secs: 0.0,
        });
    }
    let path = write_json(
        &cfg.output_dir,
        &format!("{}-{}-baselines.json", p.label, variant(lemmatized)),
        &entries,
    )?;
    Ok((entries, path))
}

/// Report entries from every artifact in `dir`.
pub fn collect_entries(dir: &Path) -> anyhow::Result<Vec<EvalEntry>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.ends_with(".json") && !name.ends_with(".timing.json")
        })
        .collect();
    paths.sort();
    let mut entries = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        if let Ok(a) = serde_json::from_str::<RunArtifact>(&text) {
            let timing = path.with_extension("timing.json");
            let runtime_secs = fs::read_to_string(&timing)
                .ok()
                .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
                .and_then(|v| v["wall_secs"].as_f64())
                .unwrap_or(0.0);
            entries.push(EvalEntry {
                method: a.kind.display_name().to_string(),
                family: "ml".into(),
                dataset: format!("{} ({})", a.dataset, variant(a.lemmatized)),
                pearson: a.holdout_pearson,
                selected_features: a.selected_features,
                hyperparams: a.hyperparams,
                runtime_secs,
            });
        } else if let Ok(list) = serde_json::from_str::<Vec<EvalEntry>>(&text) {
            entries.extend(list);
        } else {
            bail!("{} is neither a run artifact nor a baseline list", path.display());
        }
    }
    Ok(entries)
}
