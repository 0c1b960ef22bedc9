//! `sts`: score sentence pairs, build HAL models, export features, tune
//! models with the bee colony and render result tables.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod config;
mod pipeline;

use std::fmt::Display;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sts_core::abcopt::ModelFamily;
use sts_core::eval::{render_report, ReportFormat};
use sts_core::features::{compute_cell, default_registry, known_names, resolve, Resources};
use sts_core::synth::{generate, SynthParams};
use sts_core::vecspace::{build_hal, HalParams};
use sts_core::{Sentence, SentencePair};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "sts", version, about = "Semantic textual similarity toolkit")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one sentence pair with one algorithm.
    Sim {
        /// Spec id (`lcsseq`) or spec id with config label (`jaccard-char2`).
        #[arg(long)]
        algo: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Run config providing vector and taxonomy resources.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a HAL co-occurrence model from a corpus, one sentence per line.
    HalBuild {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        window: u64,
        #[arg(long, default_value_t = 2)]
        min_count: usize,
        #[arg(long, default_value_t = 50_000)]
        max_vocab: usize,
    },
    /// Export every feature column of a dataset as CSV.
    Featurize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        lemmatized: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune feature selection and hyperparameters, then score the holdout.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// linear, ridge, decision-tree, random-forest or gradient-boosting.
        /// Defaults to every model listed in the config.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        lemmatized: bool,
        /// Overrides the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Holdout Pearson of every single traditional feature.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        lemmatized: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render all run artifacts in a directory as one table.
    Report {
        #[arg(long)]
        runs_dir: PathBuf,
        /// markdown or csv.
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the seeded synthetic dataset and its resources.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime { stage: String, message: String },
}

impl Failure {
    pub fn usage(e: impl Display) -> Self {
        Failure::Usage(format!("{e:#}"))
    }

    pub fn runtime(stage: &str, e: impl Display) -> Self {
        Failure::Runtime {
            stage: stage.to_string(),
            message: format!("{e:#}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime { stage, message }) => {
            eprintln!("error during {stage}: {message}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(Failure::usage)
}

fn load_config_with_output(path: &PathBuf, out_dir: Option<PathBuf>) -> Result<RunConfig, Failure> {
    let mut cfg = load_config(path)?;
    if let Some(dir) = out_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Sim { algo, a, b, config } => {
            let resources = match &config {
                Some(path) => {
                    let cfg = load_config(path)?;
                    let pair_set = sts_core::Dataset {
                        name: "cli".into(),
                        scale_max: 5.0,
                        pairs: vec![SentencePair {
                            id: "cli".into(),
                            a: Sentence::new(a.clone()),
                            b: Sentence::new(b.clone()),
                            gold: 0.0,
                        }],
                    };
                    pipeline::load_resources(&cfg, &pair_set, false, None)
                        .map_err(|e| Failure::runtime("load resources", e))?
                        .0
                }
                None => Resources::default(),
            };
            let registry = default_registry(&resources);
            let Some(spec) = resolve(&registry, &algo) else {
                return Err(Failure::Usage(format!(
                    "unknown algorithm `{algo}`; valid: {}",
                    known_names(&registry).join(", ")
                )));
            };
            let pair = SentencePair {
                id: "cli".into(),
                a: Sentence::new(a),
                b: Sentence::new(b),
                gold: 0.0,
            };
            let score = compute_cell(&spec.id, spec.active(), &pair, false, &resources)
                .map_err(|e| Failure::runtime("score", e))?;
            println!("{:.4}", score.value);
            Ok(())
        }
        Command::HalBuild {
            corpus,
            out,
            window,
            min_count,
            max_vocab,
        } => {
            if !corpus.is_file() {
                return Err(Failure::Usage(format!("corpus {} does not exist", corpus.display())));
            }
            let params = HalParams {
                window: window as usize,
                min_count,
                max_vocab,
            };
            let model = build_hal(&corpus, params).map_err(|e| Failure::runtime("build HAL", e))?;
            model.save(&out).map_err(|e| Failure::runtime("write model", e))?;
            println!("vocabulary {} tokens, dimension {}", model.vocab_size(), model.dim());
            Ok(())
        }
        Command::Featurize {
            config,
            dataset,
            lemmatized,
            out,
        } => {
            let cfg = load_config(&config)?;
            let p = pipeline::prepare(&cfg, &dataset, lemmatized)?;
            let selection: Vec<(usize, usize)> = p
                .table
                .specs
                .iter()
                .enumerate()
                .flat_map(|(s, spec)| (0..spec.configs.len()).map(move |c| (s, c)))
                .collect();
            let matrix = p.table.matrix(&selection).map_err(|e| Failure::runtime("featurize", e))?;
            fs::write(&out, matrix.to_csv()).map_err(|e| Failure::runtime("write output", e))?;
            println!("{} rows, {} columns", matrix.rows.nrows(), matrix.rows.ncols());
            Ok(())
        }
        Command::Optimize {
            config,
            model,
            dataset,
            lemmatized,
            out_dir,
        } => {
            let cfg = load_config_with_output(&config, out_dir)?;
            let families: Vec<ModelFamily> = match model {
                Some(m) => vec![m.parse().map_err(Failure::usage)?],
                None if cfg.models.is_empty() => {
                    return Err(Failure::Usage("no --model given and the config lists no models".into()))
                }
                None => cfg.models.clone(),
            };
            for family in families {
                let outcome = pipeline::optimize(&cfg, family, &dataset, lemmatized)?;
                let a = &outcome.artifact;
                println!("model: {}", family.name());
                println!("best fitness: {:.4}", a.best_fitness);
                match a.holdout_pearson {
                    Some(r) => println!("holdout pearson: {r:.4}"),
                    None => println!("holdout pearson: undefined"),
                }
                println!("selected: {}", a.selected_features.join(", "));
                println!("artifact: {}", outcome.path.display());
            }
            Ok(())
        }
        Command::Baseline {
            config,
            dataset,
            lemmatized,
            out_dir,
        } => {
            let cfg = load_config_with_output(&config, out_dir)?;
            let (entries, path) = pipeline::baseline(&cfg, &dataset, lemmatized)?;
            for e in &entries {
                match e.pearson {
                    Some(r) => println!("{}\t{r:.4}", e.method),
                    None => println!("{}\tNA", e.method),
                }
            }
            println!("artifact: {}", path.display());
            Ok(())
        }
        Command::Report { runs_dir, format, out } => {
            let format: ReportFormat = format.parse().map_err(Failure::usage)?;
            if !runs_dir.is_dir() {
                return Err(Failure::Usage(format!("{} is not a directory", runs_dir.display())));
            }
            let entries = pipeline::collect_entries(&runs_dir).map_err(|e| Failure::runtime("read runs", e))?;
            let text = render_report(&entries, format);
            match out {
                Some(path) => fs::write(&path, text).map_err(|e| Failure::runtime("write output", e))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Synth { out_dir, pairs, seed } => {
            let defaults = SynthParams::default();
            let params = SynthParams {
                pairs,
                seed: seed.unwrap_or(defaults.seed),
                ..defaults
            };
            let data = generate(&params).map_err(Failure::usage)?;
            fs::create_dir_all(&out_dir).map_err(|e| Failure::runtime("write output", e))?;
            for (name, text) in [
                ("synthetic_sts.tsv", data.dataset_tsv()),
                ("synthetic_lemmas.tsv", data.lemma_tsv.clone()),
                ("synthetic_taxonomy.txt", data.taxonomy.clone()),
                ("synthetic_corpus.txt", data.corpus.clone()),
            ] {
                fs::write(out_dir.join(name), text).map_err(|e| Failure::runtime("write output", e))?;
            }
            println!("{} pairs written to {}", data.dataset.len(), out_dir.display());
            Ok(())
        }
    }
}
