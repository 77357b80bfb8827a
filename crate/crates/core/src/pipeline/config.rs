use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::embeddings::EmbedConfig;
use crate::evaluation::ExperimentPlan;
use crate::hybrid::{HybridConfig, Method};
use crate::ingest::{CsvOptions, IngestOptions, SplitPolicy, TokenizerMode};
use crate::lfm::LfmConfig;
use crate::rng::derive_seed;
use crate::similarity::SimilarityWeights;
use crate::topic_model::LdaConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub transactions: PathBuf,
    pub catalog: PathBuf,
    pub profiles: PathBuf,
    pub pretrained_vectors: Option<PathBuf>,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            transactions: "transactions.csv".into(),
            catalog: "catalog.csv".into(),
            profiles: "profiles.csv".into(),
            pretrained_vectors: None,
            model_dir: "model".into(),
            report_dir: "report".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub max_error_fraction: f64,
    pub tokenizer: TokenizerMode,
    pub split: SplitPolicy,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            max_error_fraction: CsvOptions::default().max_error_fraction,
            tokenizer: TokenizerMode::default(),
            split: SplitPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityConfig {
    pub weights: SimilarityWeights,
    /// Store the full customer-by-customer matrix in the model bundle.
    pub store_matrix: bool,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            weights: SimilarityWeights::default(),
            store_matrix: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub methods: Vec<Method>,
    pub neighborhood_sizes: Vec<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let plan = ExperimentPlan::default();
        EvaluationConfig {
            methods: plan.methods,
            neighborhood_sizes: plan.neighborhood_sizes,
        }
    }
}

/// Everything a pipeline run needs. Unknown keys are rejected. Stage seeds
/// are derived from the global `seed`; the `seed` fields inside stage
/// sections are overwritten at run time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub lda: LdaConfig,
    /// When set, K is chosen by held-out perplexity over these candidates
    /// instead of using `lda.num_topics`.
    pub lda_sweep: Option<Vec<usize>>,
    pub embeddings: EmbedConfig,
    pub similarity: SimilarityConfig,
    pub lfm: LfmConfig,
    pub hybrid: HybridConfig,
    pub evaluation: EvaluationConfig,
    pub seed: u64,
}

impl PipelineConfig {
    /// Reads a JSON config. Relative paths are resolved against the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.transactions);
        fix(&mut paths.catalog);
        fix(&mut paths.profiles);
        fix(&mut paths.model_dir);
        fix(&mut paths.report_dir);
        if let Some(p) = paths.pretrained_vectors.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let v = |r: Result<(), String>| r.map_err(PipelineError::Config);
        v(self.lda.validate().map_err(|e| e.to_string()))?;
        if let Some(ks) = &self.lda_sweep {
            if ks.is_empty() || ks.iter().any(|&k| k < 2) {
                return v(Err("lda_sweep must list candidates >= 2".into()));
            }
        }
        v(self.embeddings.validate().map_err(|e| e.to_string()))?;
        v(self.lfm.validate().map_err(|e| e.to_string()))?;
        v(self.hybrid.validate().map_err(|e| e.to_string()))?;
        let f = self.ingest.max_error_fraction;
        if !(0.0..=1.0).contains(&f) {
            return v(Err("ingest.max_error_fraction must be in [0, 1]".into()));
        }
        let split = self.ingest.split.fraction();
        if !(split > 0.0 && split < 1.0) {
            return v(Err("ingest.split fraction must be in (0, 1)".into()));
        }
        if self.evaluation.methods.is_empty() || self.evaluation.neighborhood_sizes.contains(&0) {
            return v(Err(
                "evaluation needs at least one method and positive neighborhood sizes".into(),
            ));
        }
        Ok(())
    }

    /// Fails when an input file named by the config does not exist.
    pub fn check_inputs(&self) -> Result<(), PipelineError> {
        let p = &self.paths;
        let required = [&p.transactions, &p.catalog, &p.profiles]
            .into_iter()
            .chain(p.pretrained_vectors.as_ref());
        for path in required {
            if !path.is_file() {
                return Err(PipelineError::Config(format!(
                    "input file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            csv: CsvOptions {
                max_error_fraction: self.ingest.max_error_fraction,
            },
            tokenizer: self.ingest.tokenizer,
            split: match self.ingest.split {
                SplitPolicy::GlobalRandom { fraction, .. } => SplitPolicy::GlobalRandom {
                    fraction,
                    seed: self.stage_seed("split"),
                },
                other => other,
            },
        }
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn lda_config(&self) -> LdaConfig {
        LdaConfig {
            seed: self.stage_seed("lda"),
            ..self.lda.clone()
        }
    }

    pub fn embed_config(&self) -> EmbedConfig {
        EmbedConfig {
            seed: self.stage_seed("embeddings"),
            ..self.embeddings.clone()
        }
    }

    pub fn lfm_config(&self) -> LfmConfig {
        LfmConfig {
            seed: self.stage_seed("lfm"),
            ..self.lfm.clone()
        }
    }

    pub fn experiment_plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            methods: self.evaluation.methods.clone(),
            neighborhood_sizes: self.evaluation.neighborhood_sizes.clone(),
            list_sizes: self.hybrid.list_sizes.clone(),
            exclude_purchased: self.hybrid.exclude_purchased,
            min_similarity: self.hybrid.min_similarity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let c: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"lfm": {"lamda": 0.1}}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"lda": {"num_topic": 3}}"#).is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"lda": {"num_topics": 4, "alpha": 12.5}, "lfm": {"epochs": 7}}"#).unwrap();
        assert_eq!(c.lda.num_topics, 4);
        assert_eq!(c.lda.alpha, 12.5);
        assert_eq!(c.lfm.epochs, 7);
        assert_eq!(c.lfm.num_factors, 5);
        // alpha follows 50/K for the configured K
        let c: PipelineConfig = serde_json::from_str(r#"{"lda": {"num_topics": 4}}"#).unwrap();
        assert_eq!(c.lda.alpha, 12.5);
        assert_eq!(c.lda.beta, 0.01);
    }

    #[test]
    fn round_trips_through_json() {
        let c = PipelineConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&s).unwrap(), c);
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"similarity": {"weights": [0.5, 0.5, 0.5]}}"#).is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let c = PipelineConfig {
            seed: 3,
            ..Default::default()
        };
        assert_ne!(c.lda_config().seed, c.lfm_config().seed);
        assert_eq!(c.lda_config().seed, c.clone().lda_config().seed);
    }
}
