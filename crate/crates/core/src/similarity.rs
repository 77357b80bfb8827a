//! Customer–customer similarity from symmetrized KL divergence.
//!
//! Topic and type preferences are compared as probability vectors with
//! `D_s(P, Q) = (D(P‖Q) + D(Q‖P)) / 2` and mapped to `(0, 1]` by
//! `1 / (1 + D_s)`. Type-preference vectors live in embedding space, so they
//! are softmax-normalized first. Demographic similarity is the fraction of
//! the four profile fields that agree. The three parts are blended with
//! weights that sum to one.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preference::CustomerFeatureSet;
use crate::registry::Registry;

/// Floor applied to probabilities inside the logarithm.
pub const KL_EPSILON: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("distributions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("similarity weights must be non-negative and sum to 1, got ({0}, {1}, {2})")]
    InvalidWeights(f64, f64, f64),
    #[error("unknown customer {0:?}")]
    UnknownCustomer(String),
    #[error("neighborhood size must be at least 1")]
    ZeroNeighbors,
}

/// `Σ P(i) · ln(P(i) / Q(i))`, natural log, with both probabilities floored
/// at [`KL_EPSILON`] inside the log.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, SimilarityError> {
    if p.len() != q.len() {
        return Err(SimilarityError::LengthMismatch(p.len(), q.len()));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (pi.max(KL_EPSILON).ln() - qi.max(KL_EPSILON).ln()))
        .sum())
}

/// Symmetrized KL divergence.
///
/// Summed term by term as `(P − Q)(ln P − ln Q) / 2`, which is algebraically
/// `(D(P‖Q) + D(Q‖P)) / 2` but makes every term non-negative and the result
/// bitwise symmetric in its arguments.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> Result<f64, SimilarityError> {
    if p.len() != q.len() {
        return Err(SimilarityError::LengthMismatch(p.len(), q.len()));
    }
    let twice: f64 = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| (pi - qi) * (pi.max(KL_EPSILON).ln() - qi.max(KL_EPSILON).ln()))
        .sum();
    Ok(twice / 2.0)
}

pub fn divergence_to_similarity(d: f64) -> f64 {
    1.0 / (1.0 + d)
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSimilarities {
    pub topic: f64,
    pub book_type: f64,
    pub demographic: f64,
}

pub fn component_similarities(
    u: &CustomerFeatureSet,
    v: &CustomerFeatureSet,
) -> Result<ComponentSimilarities, SimilarityError> {
    let topic = divergence_to_similarity(symmetric_kl(&u.topic_pref, &v.topic_pref)?);
    if u.type_pref.len() != v.type_pref.len() {
        return Err(SimilarityError::LengthMismatch(u.type_pref.len(), v.type_pref.len()));
    }
    let book_type = divergence_to_similarity(symmetric_kl(&softmax(&u.type_pref), &softmax(&v.type_pref))?);
    let demographic = u.demographics.matches(&v.demographics) as f64 / 4.0;
    Ok(ComponentSimilarities {
        topic,
        book_type,
        demographic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct SimilarityWeights {
    topic: f64,
    book_type: f64,
    demographic: f64,
}

impl SimilarityWeights {
    pub fn new(topic: f64, book_type: f64, demographic: f64) -> Result<Self, SimilarityError> {
        let all_ok = [topic, book_type, demographic]
            .iter()
            .all(|w| *w >= 0.0 && w.is_finite());
        if !all_ok || (topic + book_type + demographic - 1.0).abs() > 1e-12 {
            return Err(SimilarityError::InvalidWeights(topic, book_type, demographic));
        }
        Ok(SimilarityWeights {
            topic,
            book_type,
            demographic,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.topic, self.book_type, self.demographic]
    }
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights {
            topic: 0.6,
            book_type: 0.3,
            demographic: 0.1,
        }
    }
}

impl TryFrom<[f64; 3]> for SimilarityWeights {
    type Error = SimilarityError;

    fn try_from(w: [f64; 3]) -> Result<Self, Self::Error> {
        SimilarityWeights::new(w[0], w[1], w[2])
    }
}

impl From<SimilarityWeights> for [f64; 3] {
    fn from(w: SimilarityWeights) -> Self {
        w.as_array()
    }
}

/// Weighted blend of the three similarities, clamped to `[0, 1]`.
pub fn weighted_similarity(c: &ComponentSimilarities, w: &SimilarityWeights) -> f64 {
    (w.topic * c.topic + w.book_type * c.book_type + w.demographic * c.demographic).clamp(0.0, 1.0)
}

pub fn customer_similarity(
    u: &CustomerFeatureSet,
    v: &CustomerFeatureSet,
    w: &SimilarityWeights,
) -> Result<f64, SimilarityError> {
    if u.customer_id == v.customer_id {
        return Ok(1.0);
    }
    Ok(weighted_similarity(&component_similarities(u, v)?, w))
}

/// Anything that can answer `sim(u, v)` by customer index.
pub trait SimilaritySource {
    fn customers(&self) -> &Registry;
    fn similarity(&self, u: usize, v: usize) -> f64;
}

/// Dense symmetric matrix over every customer pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    customers: Registry,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Computes all pairs in parallel. Features must share dimensions.
    pub fn build(features: &[CustomerFeatureSet], weights: &SimilarityWeights) -> Result<Self, SimilarityError> {
        let n = features.len();
        let customers = Registry::from_ids(features.iter().map(|f| f.customer_id.clone()));
        if customers.len() != n {
            return Err(SimilarityError::UnknownCustomer(
                "duplicate customer in feature list".into(),
            ));
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|u| {
                ((u + 1)..n)
                    .map(|v| {
                        component_similarities(&features[u], &features[v]).map(|c| weighted_similarity(&c, weights))
                    })
                    .collect::<Result<Vec<f64>, SimilarityError>>()
            })
            .collect::<Result<_, _>>()?;
        let mut values = vec![0.0; n * n];
        for u in 0..n {
            values[u * n + u] = 1.0;
            for (off, &s) in rows[u].iter().enumerate() {
                let v = u + 1 + off;
                values[u * n + v] = s;
                values[v * n + u] = s;
            }
        }
        Ok(SimilarityMatrix { customers, values })
    }

    pub fn from_parts(customers: Registry, values: Vec<f64>) -> Option<Self> {
        let n = customers.len();
        (values.len() == n * n).then_some(SimilarityMatrix { customers, values })
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    pub fn row(&self, u: usize) -> &[f64] {
        let n = self.len();
        &self.values[u * n..(u + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, u: &str, v: &str) -> Option<f64> {
        Some(self.similarity(self.customers.get(u)?, self.customers.get(v)?))
    }
}

impl SimilaritySource for SimilarityMatrix {
    fn customers(&self) -> &Registry {
        &self.customers
    }

    fn similarity(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.len() + v]
    }
}

/// Computes similarities pair by pair for populations too large to
/// materialize.
pub struct OnDemandSimilarity<'a> {
    customers: Registry,
    features: &'a [CustomerFeatureSet],
    weights: SimilarityWeights,
    by_id: HashMap<&'a str, usize>,
}

impl<'a> OnDemandSimilarity<'a> {
    pub fn new(features: &'a [CustomerFeatureSet], weights: SimilarityWeights) -> Self {
        OnDemandSimilarity {
            customers: Registry::from_ids(features.iter().map(|f| f.customer_id.clone())),
            by_id: features
                .iter()
                .enumerate()
                .map(|(i, f)| (f.customer_id.as_str(), i))
                .collect(),
            features,
            weights,
        }
    }

    pub fn features(&self, id: &str) -> Option<&CustomerFeatureSet> {
        self.by_id.get(id).map(|&i| &self.features[i])
    }
}

impl SimilaritySource for OnDemandSimilarity<'_> {
    fn customers(&self) -> &Registry {
        &self.customers
    }

    fn similarity(&self, u: usize, v: usize) -> f64 {
        customer_similarity(&self.features[u], &self.features[v], &self.weights)
            .expect("feature sets built with shared dimensions")
    }
}

/// Orders `(id, score)` pairs by descending score, then ascending id.
pub fn rank_desc(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// The `n` most similar other customers, descending; ties by ascending id.
pub fn top_n_neighbors<S: SimilaritySource + ?Sized>(
    source: &S,
    customer: &str,
    n: usize,
) -> Result<Vec<(String, f64)>, SimilarityError> {
    if n == 0 {
        return Err(SimilarityError::ZeroNeighbors);
    }
    let reg = source.customers();
    let u = reg
        .get(customer)
        .ok_or_else(|| SimilarityError::UnknownCustomer(customer.to_string()))?;
    let mut all: Vec<(String, f64)> = (0..reg.len())
        .filter(|&v| v != u)
        .map(|v| (reg.id(v).to_string(), source.similarity(u, v)))
        .collect();
    if n < all.len() {
        all.select_nth_unstable_by(n - 1, rank_desc);
        all.truncate(n);
    }
    all.sort_by(rank_desc);
    Ok(all)
}
