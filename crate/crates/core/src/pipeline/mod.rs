//! End-to-end commands: ingest, train, recommend, evaluate, synth.

pub mod bundle;
pub mod config;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::error::Error as StdError;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::embeddings::{train_embeddings, EmbeddingTable};
use crate::evaluation::{emit_report, run_experiment, EvalReport, ExperimentInputs, ExperimentPlan};
use crate::hybrid::{write_recommendations, HybridConfig, Method, Recommendation, Recommender};
use crate::ingest::{Dataset, DatasetSummary};
use crate::lfm::{sample_negatives, train_lfm};
use crate::preference::{build_feature_sets, BookFeatures, DemographicRegistry};
use crate::rng::fnv1a;
use crate::similarity::{OnDemandSimilarity, SimilarityMatrix, SimilaritySource};
use crate::topic_model::{select_topic_count, sweep_topic_count, train_lda, LdaConfig};

pub use self::bundle::{load_model, save_model, BundleError, ModelBundle, FORMAT_VERSION};
pub use self::config::PipelineConfig;
pub use self::synth::{generate, SynthError, SynthParams, SyntheticData};

pub const MODEL_FILE: &str = "model.json";
pub const SUMMARY_FILE: &str = "dataset_summary.json";
pub const RECOMMENDATIONS_FILE: &str = "recommendations.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<dyn StdError + Send + Sync>,
    },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl PipelineError {
    /// True for problems with the configuration rather than with a run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_) | PipelineError::Synth(SynthError::InvalidParams(_))
        )
    }
}

fn stage<E: StdError + Send + Sync + 'static>(name: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage: name,
        source: Box::new(e),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError {
    let path = path.display().to_string();
    move |source| PipelineError::Io { path, source }
}

fn checksum<T: Serialize + ?Sized>(value: &T) -> u64 {
    fnv1a(&serde_json::to_vec(value).expect("stage output serializes"))
}

pub fn load_dataset(config: &PipelineConfig) -> Result<Dataset, PipelineError> {
    config.check_inputs()?;
    let p = &config.paths;
    let dataset =
        Dataset::load(&p.transactions, &p.catalog, &p.profiles, &config.ingest_options()).map_err(stage("ingest"))?;
    log::info!(
        "ingest: {} transactions, {} books, {} customers, vocabulary {}; checksum {:016x}",
        dataset.transactions.len(),
        dataset.catalog.len(),
        dataset.customers().len(),
        dataset.vocabulary.len(),
        checksum(&(&dataset.transactions, &dataset.split))
    );
    Ok(dataset)
}

pub fn cmd_ingest(config: &PipelineConfig, out: Option<&Path>) -> Result<DatasetSummary, PipelineError> {
    let summary = load_dataset(config)?.summary();
    let dir = out.unwrap_or(&config.paths.model_dir);
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(SUMMARY_FILE);
    let body = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    fs::write(&path, body).map_err(io_err(&path))?;
    Ok(summary)
}

fn topic_stage(config: &PipelineConfig, dataset: &Dataset) -> Result<crate::topic_model::LdaModel, PipelineError> {
    let docs = dataset.documents();
    let vocab = dataset.vocabulary.len();
    let mut lda_config = config.lda_config();
    if let Some(ks) = &config.lda_sweep {
        let sweep = sweep_topic_count(&docs, vocab, ks, &lda_config).map_err(stage("topic sweep"))?;
        for (k, p) in &sweep {
            log::info!("topic sweep: K={k} perplexity {p:.4}");
        }
        let k = select_topic_count(&sweep).expect("non-empty sweep");
        lda_config = LdaConfig {
            num_topics: k,
            alpha: lda_config.alpha * lda_config.num_topics as f64 / k as f64,
            ..lda_config
        };
    }
    log::info!(
        "topics: K={} alpha={} beta={} sweeps={} seed={}",
        lda_config.num_topics,
        lda_config.alpha,
        lda_config.beta,
        lda_config.gibbs_iterations,
        lda_config.seed
    );
    let lda = train_lda(&docs, vocab, &lda_config).map_err(stage("topics"))?;
    log::info!("topics: checksum {:016x}", checksum(lda.phi()));
    Ok(lda)
}

fn embedding_stage(config: &PipelineConfig, dataset: &Dataset) -> Result<EmbeddingTable, PipelineError> {
    let table = match &config.paths.pretrained_vectors {
        Some(path) => {
            log::info!("embeddings: loading {}", path.display());
            let file = File::open(path).map_err(stage("embeddings"))?;
            EmbeddingTable::load_pretrained(BufReader::new(file)).map_err(stage("embeddings"))?
        }
        None => {
            let embed = config.embed_config();
            log::info!(
                "embeddings: training {:?} dim={} window={} epochs={} seed={}",
                embed.mode,
                embed.dim,
                embed.window,
                embed.epochs,
                embed.seed
            );
            // each sentence is the book type followed by its title
            let corpus: Vec<Vec<String>> = dataset
                .catalog
                .values()
                .map(|b| {
                    std::iter::once(b.book_type.clone())
                        .chain(b.title_tokens.iter().cloned())
                        .collect()
                })
                .collect();
            train_embeddings(&corpus, &embed)
                .map_err(stage("embeddings"))?
                .without_context()
        }
    };
    log::info!(
        "embeddings: {} vectors; checksum {:016x}",
        table.len(),
        checksum(table.vectors())
    );
    Ok(table)
}

/// Runs every training stage on an already-loaded dataset.
pub fn train_models(config: &PipelineConfig, dataset: &Dataset) -> Result<ModelBundle, PipelineError> {
    config.validate()?;
    let books = dataset.book_registry();
    let lda = topic_stage(config, dataset)?;
    let embeddings = embedding_stage(config, dataset)?;

    let topics: BTreeMap<String, Vec<f64>> = books
        .ids()
        .iter()
        .enumerate()
        .map(|(d, b)| (b.clone(), lda.theta().row(d).to_vec()))
        .collect();
    let type_vectors: BTreeMap<String, Vec<f64>> = dataset
        .catalog
        .values()
        .map(|b| (b.book_id.clone(), embeddings.vector_for_type(&b.book_type)))
        .collect();
    if embeddings.misses() > 0 {
        log::warn!(
            "preferences: {} book types have no embedding and use zeros",
            embeddings.misses()
        );
    }
    let demographics = DemographicRegistry::from_profiles(dataset.profiles.values());
    let train = dataset.train_purchases();
    let features = build_feature_sets(
        &dataset.customers(),
        &train,
        &dataset.profiles,
        &demographics,
        &BookFeatures {
            topics: &topics,
            type_vectors: &type_vectors,
            num_topics: lda.num_topics(),
            dim: embeddings.dim(),
        },
    );
    log::info!(
        "preferences: {} customers; checksum {:016x}",
        features.len(),
        checksum(&features)
    );

    let weights = config.similarity.weights;
    let similarity = if config.similarity.store_matrix {
        let m = SimilarityMatrix::build(&features, &weights).map_err(stage("similarity"))?;
        log::info!(
            "similarity: weights {:?}; checksum {:016x}",
            weights.as_array(),
            checksum(m.values())
        );
        Some(m)
    } else {
        None
    };

    let lfm_config = config.lfm_config();
    let positives: BTreeMap<String, BTreeSet<String>> = train
        .iter()
        .filter(|(_, b)| !b.is_empty())
        .map(|(c, b)| (c.clone(), b.iter().cloned().collect()))
        .collect();
    let interactions = sample_negatives(
        &positives,
        &dataset.book_popularity,
        lfm_config.negative_ratio,
        config.stage_seed("negatives"),
    )
    .map_err(stage("negative sampling"))?;
    log::info!(
        "negative sampling: {} positives, {} negatives",
        interactions.positives().len(),
        interactions.negatives().len()
    );
    log::info!(
        "lfm: F={} lambda={} lr0={} decay={} epochs={} negatives={:?}",
        lfm_config.num_factors,
        lfm_config.lambda,
        lfm_config.lr0,
        lfm_config.lr_decay,
        lfm_config.epochs,
        lfm_config.negative_mode
    );
    let lfm = train_lfm(&interactions, &lfm_config).map_err(stage("lfm"))?;
    log::info!(
        "lfm: final loss {:.6}; checksum {:016x}",
        lfm.loss_trace().last().copied().unwrap_or(0.0),
        checksum(lfm.customer_factors())
    );

    Ok(ModelBundle {
        config: config.clone(),
        books,
        lda,
        embeddings,
        demographics,
        features,
        lfm,
        similarity,
        train_purchases: train,
    })
}

pub fn model_path(config: &PipelineConfig, dir: Option<&Path>) -> PathBuf {
    dir.unwrap_or(&config.paths.model_dir).join(MODEL_FILE)
}

pub fn cmd_train(config: &PipelineConfig, out: Option<&Path>) -> Result<PathBuf, PipelineError> {
    let dataset = load_dataset(config)?;
    let bundle = train_models(config, &dataset)?;
    let path = model_path(config, out);
    save_model(&bundle, &path)?;
    log::info!("model written to {}", path.display());
    Ok(path)
}

fn open_bundle(config: &PipelineConfig) -> Result<ModelBundle, PipelineError> {
    let path = model_path(config, None);
    if !path.is_file() {
        return Err(PipelineError::MissingArtifact(format!(
            "model bundle {} (run `train` first)",
            path.display()
        )));
    }
    Ok(load_model(&path)?)
}

/// Similarity lookups for a bundle: the stored matrix, or on-demand pairs.
fn with_similarity<T>(bundle: &ModelBundle, f: impl FnOnce(&(dyn SimilaritySource + Sync)) -> T) -> T {
    match &bundle.similarity {
        Some(m) => f(m),
        None => f(&OnDemandSimilarity::new(
            &bundle.features,
            bundle.config.similarity.weights,
        )),
    }
}

pub fn recommend_with(
    bundle: &ModelBundle,
    config: &HybridConfig,
    customers: &[String],
    top_n: usize,
) -> Result<Vec<Recommendation>, PipelineError> {
    with_similarity(bundle, |sim| {
        let recommender = Recommender {
            similarity: sim,
            lfm: &bundle.lfm,
            candidates: &bundle.books,
            purchased: &bundle.train_purchases,
            config,
        };
        customers
            .iter()
            .map(|c| {
                let rec = recommender
                    .recommend(c, Method::Hybrid, top_n)
                    .map_err(stage("recommend"))?;
                if rec.cold {
                    log::warn!("customer {c} has no trained factors; scores fall back to 0");
                }
                Ok(rec)
            })
            .collect()
    })
}

/// Writes hybrid top-N lists for `customers` to `out/recommendations.csv`,
/// or to stdout when `out` is `None`.
pub fn cmd_recommend(
    config: &PipelineConfig,
    customers: &[String],
    top_n: usize,
    out: Option<&Path>,
) -> Result<Vec<Recommendation>, PipelineError> {
    if top_n == 0 {
        return Err(PipelineError::Config("list size must be >= 1".into()));
    }
    let bundle = open_bundle(config)?;
    let recs = recommend_with(&bundle, &config.hybrid, customers, top_n)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(RECOMMENDATIONS_FILE);
            let file = File::create(&path).map_err(io_err(&path))?;
            let mut w = BufWriter::new(file);
            write_recommendations(&mut w, &recs)
                .and_then(|_| w.flush())
                .map_err(io_err(&path))?;
        }
        None => {
            let stdout = io::stdout();
            write_recommendations(stdout.lock(), &recs).map_err(io_err(Path::new("<stdout>")))?;
        }
    }
    Ok(recs)
}

/// Scores a trained bundle against the held-out side of `dataset`.
pub fn evaluate_bundle(
    bundle: &ModelBundle,
    dataset: &Dataset,
    plan: &ExperimentPlan,
) -> Result<EvalReport, PipelineError> {
    if dataset.book_registry() != bundle.books {
        return Err(PipelineError::Stage {
            stage: "evaluate",
            source: "model was trained on a different catalog".into(),
        });
    }
    let test = dataset.test_purchases();
    with_similarity(bundle, |sim| {
        let inputs = ExperimentInputs {
            similarity: sim,
            lfm: &bundle.lfm,
            candidates: &bundle.books,
            train: &bundle.train_purchases,
            test: &test,
        };
        run_experiment(&inputs, plan).map_err(stage("evaluate"))
    })
}

pub fn cmd_evaluate(config: &PipelineConfig, out: Option<&Path>) -> Result<EvalReport, PipelineError> {
    let bundle = open_bundle(config)?;
    let dataset = load_dataset(config)?;
    let report = evaluate_bundle(&bundle, &dataset, &config.experiment_plan())?;
    let dir = out.unwrap_or(&config.paths.report_dir);
    emit_report(&report, dir).map_err(stage("report"))?;
    for c in &report.cells {
        log::info!(
            "{} N={} top{}: precision {:.4} recall {:.4} f {:.4}",
            c.method.as_str(),
            c.neighborhood,
            c.top_n,
            c.metrics.precision,
            c.metrics.recall,
            c.metrics.f
        );
    }
    Ok(report)
}

pub fn cmd_synth(params: &SynthParams, out: &Path) -> Result<SyntheticData, PipelineError> {
    let data = generate(params)?;
    data.write_to(out, params.seed)?;
    log::info!(
        "synth: {} customers, {} books, {} transactions (mean {:.2} per customer) in {}",
        data.profiles.len(),
        data.catalog.len(),
        data.transactions.len(),
        data.mean_purchases(),
        out.display()
    );
    Ok(data)
}
