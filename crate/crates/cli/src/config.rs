use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use sts_core::abcopt::{AbcConfig, ModelFamily};
use sts_core::corpus::DatasetFormat;
use sts_core::vecspace::HalParams;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub datasets: BTreeMap<String, DatasetEntry>,
    #[serde(default)]
    pub resources: ResourceConfig,
    #[serde(default)]
    pub hal: HalParams,
    pub embed: Option<EmbedSection>,
    #[serde(default)]
    pub abc: AbcSection,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub models: Vec<ModelFamily>,
    /// Restricts the registry to these spec ids.
    pub features: Option<Vec<String>>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: String,
    pub lemmas: Option<PathBuf>,
    pub scale_max: Option<f64>,
}

fn default_format() -> String {
    "sts-benchmark-tsv".into()
}

impl DatasetEntry {
    pub fn format(&self) -> anyhow::Result<DatasetFormat> {
        Ok(self.format.parse()?)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceConfig {
    pub taxonomy: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub hal_model: Option<PathBuf>,
    pub hal_corpus: Option<PathBuf>,
    pub feature_store: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedSection {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    /// Offline JSON map of text to vector; when set no request is made.
    pub fixture: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub max_batch: Option<usize>,
    pub parallel_batches: Option<usize>,
    #[serde(default = "yes")]
    pub words: bool,
    #[serde(default = "yes")]
    pub sentences: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbcSection {
    pub n_sources: usize,
    pub iterations: usize,
    pub limit: usize,
    pub onlookers: Option<usize>,
}

impl Default for AbcSection {
    fn default() -> Self {
        let d = AbcConfig::default();
        AbcSection {
            n_sources: d.n_sources,
            iterations: d.iterations,
            limit: d.limit,
            onlookers: d.onlookers,
        }
    }
}

impl AbcSection {
    pub fn with_seed(&self, seed: u64) -> AbcConfig {
        AbcConfig {
            n_sources: self.n_sources,
            iterations: self.iterations,
            limit: self.limit,
            seed,
            onlookers: self.onlookers,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub bins: usize,
    pub folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            bins: 5,
            folds: 10,
        }
    }
}

impl RunConfig {
    /// Parses the file and resolves every path against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix(&mut self.output_dir);
        for d in self.datasets.values_mut() {
            fix(&mut d.path);
            fix_opt(&mut d.lemmas);
        }
        let r = &mut self.resources;
        for p in [
            &mut r.taxonomy,
            &mut r.word_vectors,
            &mut r.hal_model,
            &mut r.hal_corpus,
            &mut r.feature_store,
        ] {
            fix_opt(p);
        }
        if let Some(e) = &mut self.embed {
            fix_opt(&mut e.fixture);
            fix_opt(&mut e.cache_dir);
        }
    }

    fn validate(&self) -> anyhow::Result<()> {
        let must_exist = |what: &str, p: &Path| -> anyhow::Result<()> {
            if !p.exists() {
                bail!("{what} {} does not exist", p.display());
            }
            Ok(())
        };
        for (name, d) in &self.datasets {
            must_exist(&format!("dataset `{name}`"), &d.path)?;
            d.format().with_context(|| format!("dataset `{name}`"))?;
            if let Some(l) = &d.lemmas {
                must_exist(&format!("lemma map of `{name}`"), l)?;
            }
        }
        let r = &self.resources;
        for (what, p) in [
            ("taxonomy", &r.taxonomy),
            ("word vectors", &r.word_vectors),
            ("HAL model", &r.hal_model),
            ("HAL corpus", &r.hal_corpus),
        ] {
            if let Some(p) = p {
                must_exist(what, p)?;
            }
        }
        if r.hal_model.is_some() && r.hal_corpus.is_some() {
            bail!("set either resources.hal_model or resources.hal_corpus, not both");
        }
        if let Some(f) = self.embed.as_ref().and_then(|e| e.fixture.as_ref()) {
            must_exist("embedding fixture", f)?;
        }
        if self.hal.window == 0 {
            bail!("hal.window must be >= 1");
        }
        self.abc.with_seed(self.seed).validate()?;
        let s = &self.split;
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            bail!("split.train_fraction must be in (0, 1)");
        }
        if s.folds < 2 || s.bins == 0 {
            bail!("split.folds must be >= 2 and split.bins >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.tsv"), "1\ta\tb\n").unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(
            &cfg_path,
            "seed = 3\n[datasets.toy]\npath = \"d.tsv\"\n[abc]\nn_sources = 4\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.datasets["toy"].path, dir.path().join("d.tsv"));
        assert_eq!(cfg.output_dir, dir.path().join("runs"));
        assert_eq!(cfg.abc.n_sources, 4);
        assert_eq!(cfg.abc.iterations, 30);
        assert_eq!(cfg.hal, HalParams::default());
    }

    #[test]
    fn rejects_missing_paths_and_seed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, "seed = 1\n[datasets.x]\npath = \"nope.tsv\"\n").unwrap();
        assert!(RunConfig::load(&cfg_path).is_err());
        std::fs::write(&cfg_path, "output_dir = \"out\"\n").unwrap();
        assert!(RunConfig::load(&cfg_path).is_err());
    }
}
