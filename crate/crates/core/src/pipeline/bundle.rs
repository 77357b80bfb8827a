//! Single-file JSON model bundle. Matrices are stored as nested row arrays
//! with explicit dimensions; reals use the shortest representation that
//! parses back to the same bits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::PipelineConfig;
use crate::embeddings::EmbeddingTable;
use crate::lfm::FactorModel;
use crate::matrix::Matrix;
use crate::preference::{CustomerFeatureSet, DemographicRegistry};
use crate::registry::Registry;
use crate::similarity::{SimilarityMatrix, SimilaritySource};
use crate::topic_model::{LdaConfig, LdaModel};

pub const FORMAT_VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: &[u32] = &[FORMAT_VERSION];

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("model file is truncated: {0}")]
    Truncated(String),
    #[error("model file is malformed: {0}")]
    Malformed(String),
    #[error("model format version {found} is not supported (supported: {supported:?}); retrain with this version")]
    Version { found: u64, supported: Vec<u32> },
    #[error("{matrix} row {row} has {found} entries, expected {expected}")]
    Dimension {
        matrix: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    /// Catalog books in LDA document order.
    pub books: Registry,
    pub lda: LdaModel,
    pub embeddings: EmbeddingTable,
    pub demographics: DemographicRegistry,
    pub features: Vec<CustomerFeatureSet>,
    pub lfm: FactorModel,
    pub similarity: Option<SimilarityMatrix>,
    /// Training purchases, needed to exclude already-bought books.
    pub train_purchases: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct StoredMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

impl StoredMatrix {
    fn from_matrix(m: &Matrix) -> Self {
        StoredMatrix {
            rows: m.rows(),
            cols: m.cols(),
            data: m.to_rows(),
        }
    }

    fn into_matrix(self, name: &str, expected_cols: usize) -> Result<Matrix, BundleError> {
        if self.cols != expected_cols {
            return Err(BundleError::Inconsistent(format!(
                "{name} declares {} columns, expected {expected_cols}",
                self.cols
            )));
        }
        if self.data.len() != self.rows {
            return Err(BundleError::Inconsistent(format!(
                "{name} declares {} rows but stores {}",
                self.rows,
                self.data.len()
            )));
        }
        Matrix::from_rows(&self.data, self.cols).map_err(|row| BundleError::Dimension {
            matrix: name.to_string(),
            row,
            expected: self.cols,
            found: self.data[row].len(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoredLda {
    config: LdaConfig,
    vocab_size: usize,
    documents: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    phi: StoredMatrix,
    theta: StoredMatrix,
}

#[derive(Serialize, Deserialize)]
struct StoredEmbeddings {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct StoredFactors {
    customers: Registry,
    books: Registry,
    customer_factors: StoredMatrix,
    book_factors: StoredMatrix,
    loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredSimilarity {
    customers: Registry,
    values: StoredMatrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredBundle {
    format_version: u32,
    config: PipelineConfig,
    books: Registry,
    lda: StoredLda,
    embeddings: StoredEmbeddings,
    demographics: DemographicRegistry,
    features: Vec<CustomerFeatureSet>,
    lfm: StoredFactors,
    similarity: Option<StoredSimilarity>,
    train_purchases: BTreeMap<String, Vec<String>>,
}

impl ModelBundle {
    fn to_stored(&self) -> StoredBundle {
        let lda = &self.lda;
        StoredBundle {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            books: self.books.clone(),
            lda: StoredLda {
                config: lda.config().clone(),
                vocab_size: lda.vocab_size(),
                documents: lda.documents().to_vec(),
                assignments: lda.assignments().to_vec(),
                phi: StoredMatrix::from_matrix(lda.phi()),
                theta: StoredMatrix::from_matrix(lda.theta()),
            },
            embeddings: StoredEmbeddings {
                dim: self.embeddings.dim(),
                vectors: self.embeddings.vectors().clone(),
            },
            demographics: self.demographics.clone(),
            features: self.features.clone(),
            lfm: StoredFactors {
                customers: self.lfm.customers().clone(),
                books: self.lfm.books().clone(),
                customer_factors: StoredMatrix::from_matrix(self.lfm.customer_factors()),
                book_factors: StoredMatrix::from_matrix(self.lfm.book_factors()),
                loss_trace: self.lfm.loss_trace().to_vec(),
            },
            similarity: self.similarity.as_ref().map(|s| {
                let n = s.len();
                StoredSimilarity {
                    customers: SimilaritySource::customers(s).clone(),
                    values: StoredMatrix::from_matrix(&Matrix::from_vec(n, n, s.values().to_vec()).expect("square")),
                }
            }),
            train_purchases: self.train_purchases.clone(),
        }
    }

    fn from_stored(s: StoredBundle) -> Result<Self, BundleError> {
        let inconsistent = |m: String| BundleError::Inconsistent(m);
        let k = s.lda.config.num_topics;
        let phi = s.lda.phi.into_matrix("phi", s.lda.vocab_size)?;
        let theta = s.lda.theta.into_matrix("theta", k)?;
        let lda = LdaModel::from_assignments(s.lda.config, s.lda.vocab_size, s.lda.documents, s.lda.assignments)
            .map_err(|e| inconsistent(e.to_string()))?;
        if lda.phi() != &phi || lda.theta() != &theta {
            return Err(inconsistent(
                "stored topic matrices do not match the stored assignments".into(),
            ));
        }
        if lda.num_documents() != s.books.len() {
            return Err(inconsistent(format!(
                "{} topic documents for {} books",
                lda.num_documents(),
                s.books.len()
            )));
        }
        let embeddings = EmbeddingTable::from_vectors(s.embeddings.dim, s.embeddings.vectors)
            .map_err(|e| inconsistent(format!("embeddings: {e}")))?;

        let f = s.lfm.customer_factors.cols;
        let p = s.lfm.customer_factors.into_matrix("customer_factors", f)?;
        let q = s.lfm.book_factors.into_matrix("book_factors", f)?;
        let lfm = FactorModel::from_parts(s.lfm.customers, s.lfm.books, p, q, s.lfm.loss_trace)
            .map_err(|e| inconsistent(e.to_string()))?;

        let feature_ids: BTreeSet<&str> = s.features.iter().map(|c| c.customer_id.as_str()).collect();
        if feature_ids.len() != s.features.len() {
            return Err(inconsistent("duplicate customer in feature sets".into()));
        }
        for c in &s.features {
            if c.topic_pref.len() != k || c.type_pref.len() != embeddings.dim() {
                return Err(inconsistent(format!(
                    "feature set of {} has wrong dimensions",
                    c.customer_id
                )));
            }
        }
        if let Some(c) = lfm.customers().ids().iter().find(|c| !feature_ids.contains(c.as_str())) {
            return Err(inconsistent(format!("factor customer {c} has no feature set")));
        }
        if let Some(b) = lfm.books().ids().iter().find(|b| !s.books.contains(b)) {
            return Err(inconsistent(format!("factor book {b} is not in the catalog")));
        }
        let similarity = match s.similarity {
            None => None,
            Some(sim) => {
                let n = sim.customers.len();
                let values = sim.values.into_matrix("similarity", n)?;
                if values.rows() != n {
                    return Err(inconsistent("similarity matrix is not square".into()));
                }
                if !sim.customers.ids().iter().all(|c| feature_ids.contains(c.as_str())) {
                    return Err(inconsistent("similarity customers differ from feature sets".into()));
                }
                Some(SimilarityMatrix::from_parts(sim.customers, values.as_slice().to_vec()).expect("square"))
            }
        };
        Ok(ModelBundle {
            config: s.config,
            books: s.books,
            lda,
            embeddings,
            demographics: s.demographics,
            features: s.features,
            lfm,
            similarity,
            train_purchases: s.train_purchases,
        })
    }

    /// Canonical bytes: equal bundles always serialize identically.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.to_stored()).expect("bundle serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| {
            if e.is_eof() {
                BundleError::Truncated(e.to_string())
            } else {
                BundleError::Malformed(e.to_string())
            }
        })?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| BundleError::Malformed("missing format_version".into()))?;
        if !SUPPORTED_VERSIONS.iter().any(|&v| v as u64 == version) {
            return Err(BundleError::Version {
                found: version,
                supported: SUPPORTED_VERSIONS.to_vec(),
            });
        }
        let stored: StoredBundle = serde_json::from_value(value).map_err(|e| BundleError::Malformed(e.to_string()))?;
        ModelBundle::from_stored(stored)
    }
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<(), BundleError> {
    let io_err = |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    fs::write(path, bundle.to_bytes()).map_err(io_err)
}

pub fn load_model(path: &Path) -> Result<ModelBundle, BundleError> {
    let bytes = fs::read(path).map_err(|source| BundleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModelBundle::from_bytes(&bytes)
}
