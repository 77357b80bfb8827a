//! LDA over book-title documents, trained by collapsed Gibbs sampling.
//!
//! Each token's topic is resampled from
//!
//! ```text
//! p(z = k | rest) ∝ (n_mk + α) · (n_kv + β) / (n_k + V·β)
//! ```
//!
//! with the token's own assignment removed from the counts. φ and θ are read
//! out from the smoothed counts of the final sweep.
//!
//! Held-out perplexity folds each test document in with a fixed number of
//! Gibbs sweeps against the frozen φ, then scores every token with the
//! topic-marginal `p(w|d) = Σ_k θ_dk φ_kw`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng::{derive_seed, fnv1a, seeded};

/// Gibbs sweeps used to estimate θ for an unseen document.
pub const FOLD_IN_SWEEPS: usize = 20;

/// Fraction of documents held out by [`sweep_topic_count`].
pub const SWEEP_HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum TopicModelError {
    #[error("invalid LDA configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("token id {token} in document {document} is outside the vocabulary (V = {vocab_size})")]
    TokenOutOfRange {
        document: usize,
        token: u32,
        vocab_size: usize,
    },
    #[error("document index {0} is not part of the trained corpus")]
    UnknownDocument(usize),
    #[error("token {token} has zero probability under the model")]
    ZeroProbability { token: u32 },
    #[error("need at least two documents to hold some out, got {0}")]
    TooFewDocuments(usize),
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
}

/// Missing fields take their defaults; a missing `alpha` follows `50/K` for
/// the configured K rather than the default K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LdaConfigRepr")]
pub struct LdaConfig {
    pub num_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gibbs_iterations: usize,
    /// Sweeps before the chain is considered mixed. Readout always uses the
    /// final sweep, so this only affects the logged likelihood trace.
    pub burn_in: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// α = 50/K, β = 0.01, 500 sweeps with 100 burn-in.
    pub fn with_topics(num_topics: usize) -> Self {
        LdaConfig {
            num_topics,
            alpha: 50.0 / num_topics as f64,
            beta: 0.01,
            gibbs_iterations: 500,
            burn_in: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TopicModelError> {
        let bad = |m: &str| Err(TopicModelError::InvalidConfig(m.to_string()));
        if self.num_topics < 2 {
            return bad("num_topics must be >= 2");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if self.gibbs_iterations == 0 {
            return bad("gibbs_iterations must be positive");
        }
        if self.burn_in >= self.gibbs_iterations {
            return bad("burn_in must be smaller than gibbs_iterations");
        }
        Ok(())
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig::with_topics(20)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LdaConfigRepr {
    num_topics: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gibbs_iterations: Option<usize>,
    burn_in: Option<usize>,
    seed: Option<u64>,
}

impl From<LdaConfigRepr> for LdaConfig {
    fn from(r: LdaConfigRepr) -> Self {
        let base = LdaConfig::with_topics(r.num_topics.unwrap_or(LdaConfig::default().num_topics));
        LdaConfig {
            alpha: r.alpha.unwrap_or(base.alpha),
            beta: r.beta.unwrap_or(base.beta),
            gibbs_iterations: r.gibbs_iterations.unwrap_or(base.gibbs_iterations),
            burn_in: r.burn_in.unwrap_or(base.burn_in),
            seed: r.seed.unwrap_or(base.seed),
            ..base
        }
    }
}

/// A length-K point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicDistribution(pub Vec<f64>);

impl TopicDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    config: LdaConfig,
    vocab_size: usize,
    documents: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    phi: Matrix,
    theta: Matrix,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_totals: Vec<u32>,
}

struct Counts {
    k: usize,
    v: usize,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_totals: Vec<u32>,
}

impl Counts {
    fn new(m: usize, k: usize, v: usize) -> Self {
        Counts {
            k,
            v,
            doc_topic: vec![0; m * k],
            topic_word: vec![0; k * v],
            topic_totals: vec![0; k],
        }
    }

    fn add(&mut self, doc: usize, word: u32, topic: usize) {
        self.doc_topic[doc * self.k + topic] += 1;
        self.topic_word[topic * self.v + word as usize] += 1;
        self.topic_totals[topic] += 1;
    }

    fn remove(&mut self, doc: usize, word: u32, topic: usize) {
        self.doc_topic[doc * self.k + topic] -= 1;
        self.topic_word[topic * self.v + word as usize] -= 1;
        self.topic_totals[topic] -= 1;
    }
}

fn check_tokens(documents: &[Vec<u32>], vocab_size: usize) -> Result<usize, TopicModelError> {
    let mut total = 0;
    for (d, doc) in documents.iter().enumerate() {
        for &token in doc {
            if token as usize >= vocab_size {
                return Err(TopicModelError::TokenOutOfRange {
                    document: d,
                    token,
                    vocab_size,
                });
            }
        }
        total += doc.len();
    }
    Ok(total)
}

/// Draws an index from unnormalized cumulative weights.
fn sample_cumulative<R: Rng>(rng: &mut R, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("at least one topic");
    let u = rng.random::<f64>() * total;
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

pub fn train_lda(documents: &[Vec<u32>], vocab_size: usize, config: &LdaConfig) -> Result<LdaModel, TopicModelError> {
    config.validate()?;
    let total_tokens = check_tokens(documents, vocab_size)?;
    if total_tokens == 0 {
        return Err(TopicModelError::EmptyCorpus);
    }
    let k = config.num_topics;
    if k > total_tokens {
        log::warn!("LDA: {k} topics exceed the {total_tokens} corpus tokens; the model will be degenerate");
    }

    let mut rng = seeded(config.seed);
    let mut counts = Counts::new(documents.len(), k, vocab_size);
    let mut assignments: Vec<Vec<u32>> = Vec::with_capacity(documents.len());
    for (d, doc) in documents.iter().enumerate() {
        let z: Vec<u32> = doc
            .iter()
            .map(|&w| {
                let t = rng.random_range(0..k);
                counts.add(d, w, t);
                t as u32
            })
            .collect();
        assignments.push(z);
    }

    let vbeta = vocab_size as f64 * config.beta;
    let mut cumulative = vec![0.0; k];
    for sweep in 0..config.gibbs_iterations {
        for (d, doc) in documents.iter().enumerate() {
            for (n, &w) in doc.iter().enumerate() {
                let old = assignments[d][n] as usize;
                counts.remove(d, w, old);
                let mut acc = 0.0;
                for (t, c) in cumulative.iter_mut().enumerate() {
                    let ndk = counts.doc_topic[d * k + t] as f64;
                    let nkw = counts.topic_word[t * vocab_size + w as usize] as f64;
                    let nk = counts.topic_totals[t] as f64;
                    acc += (ndk + config.alpha) * (nkw + config.beta) / (nk + vbeta);
                    *c = acc;
                }
                let new = sample_cumulative(&mut rng, &cumulative);
                counts.add(d, w, new);
                assignments[d][n] = new as u32;
            }
        }
        if log::log_enabled!(log::Level::Debug) && sweep >= config.burn_in && (sweep + 1) % 50 == 0 {
            let ll = corpus_log_likelihood(documents, &counts, config);
            log::debug!("LDA sweep {}: token log-likelihood {ll:.4}", sweep + 1);
        }
    }

    Ok(LdaModel::from_counts(
        config.clone(),
        vocab_size,
        documents.to_vec(),
        assignments,
        counts,
    ))
}

fn corpus_log_likelihood(documents: &[Vec<u32>], counts: &Counts, config: &LdaConfig) -> f64 {
    let (k, v) = (counts.k, counts.v);
    let mut ll = 0.0;
    for (d, doc) in documents.iter().enumerate() {
        let nd = doc.len() as f64;
        for &w in doc {
            let p: f64 = (0..k)
                .map(|t| {
                    let theta = (counts.doc_topic[d * k + t] as f64 + config.alpha) / (nd + k as f64 * config.alpha);
                    let phi = (counts.topic_word[t * v + w as usize] as f64 + config.beta)
                        / (counts.topic_totals[t] as f64 + v as f64 * config.beta);
                    theta * phi
                })
                .sum();
            ll += p.ln();
        }
    }
    ll
}

impl LdaModel {
    fn from_counts(
        config: LdaConfig,
        vocab_size: usize,
        documents: Vec<Vec<u32>>,
        assignments: Vec<Vec<u32>>,
        counts: Counts,
    ) -> Self {
        let k = config.num_topics;
        let v = vocab_size;
        let mut phi = Matrix::zeros(k, v);
        for t in 0..k {
            let denom = counts.topic_totals[t] as f64 + v as f64 * config.beta;
            for (w, cell) in phi.row_mut(t).iter_mut().enumerate() {
                *cell = (counts.topic_word[t * v + w] as f64 + config.beta) / denom;
            }
        }
        let mut theta = Matrix::zeros(documents.len(), k);
        for (d, doc) in documents.iter().enumerate() {
            let denom = doc.len() as f64 + k as f64 * config.alpha;
            for (t, cell) in theta.row_mut(d).iter_mut().enumerate() {
                *cell = (counts.doc_topic[d * k + t] as f64 + config.alpha) / denom;
            }
        }
        LdaModel {
            config,
            vocab_size,
            documents,
            assignments,
            phi,
            theta,
            doc_topic: counts.doc_topic,
            topic_word: counts.topic_word,
            topic_totals: counts.topic_totals,
        }
    }

    /// Rebuilds a trained model from its corpus and final assignments, as
    /// stored in a model bundle.
    pub fn from_assignments(
        config: LdaConfig,
        vocab_size: usize,
        documents: Vec<Vec<u32>>,
        assignments: Vec<Vec<u32>>,
    ) -> Result<Self, TopicModelError> {
        config.validate()?;
        check_tokens(&documents, vocab_size)?;
        if documents.len() != assignments.len() {
            return Err(TopicModelError::Inconsistent(format!(
                "{} documents but {} assignment rows",
                documents.len(),
                assignments.len()
            )));
        }
        let k = config.num_topics;
        let mut counts = Counts::new(documents.len(), k, vocab_size);
        for (d, (doc, z)) in documents.iter().zip(&assignments).enumerate() {
            if doc.len() != z.len() {
                return Err(TopicModelError::Inconsistent(format!(
                    "document {d} has {} tokens but {} assignments",
                    doc.len(),
                    z.len()
                )));
            }
            for (&w, &t) in doc.iter().zip(z) {
                if t as usize >= k {
                    return Err(TopicModelError::Inconsistent(format!(
                        "document {d} assigns topic {t} but K = {k}"
                    )));
                }
                counts.add(d, w, t as usize);
            }
        }
        Ok(LdaModel::from_counts(
            config,
            vocab_size,
            documents,
            assignments,
            counts,
        ))
    }

    /// A model with only a topic-word matrix and no training corpus, used
    /// for baselines such as the uniform-φ reference in perplexity checks.
    pub fn from_topic_word(phi: Matrix, config: LdaConfig) -> Result<Self, TopicModelError> {
        config.validate()?;
        if phi.rows() != config.num_topics {
            return Err(TopicModelError::Inconsistent(format!(
                "phi has {} rows, expected K = {}",
                phi.rows(),
                config.num_topics
            )));
        }
        let k = config.num_topics;
        let v = phi.cols();
        Ok(LdaModel {
            config,
            vocab_size: v,
            documents: Vec::new(),
            assignments: Vec::new(),
            theta: Matrix::zeros(0, k),
            phi,
            doc_topic: Vec::new(),
            topic_word: vec![0; k * v],
            topic_totals: vec![0; k],
        })
    }

    pub fn config(&self) -> &LdaConfig {
        &self.config
    }

    pub fn num_topics(&self) -> usize {
        self.config.num_topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn documents(&self) -> &[Vec<u32>] {
        &self.documents
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.assignments
    }

    /// Topic–word matrix, K × V.
    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    /// Document–topic matrix, M × K.
    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn doc_topic_count(&self, doc: usize, topic: usize) -> u32 {
        self.doc_topic[doc * self.num_topics() + topic]
    }

    pub fn topic_word_count(&self, topic: usize, word: usize) -> u32 {
        self.topic_word[topic * self.vocab_size + word]
    }

    pub fn topic_total(&self, topic: usize) -> u32 {
        self.topic_totals[topic]
    }

    /// Relabels topics: new topic `j` is old topic `perm[j]`.
    pub fn permute_topics(&self, perm: &[usize]) -> LdaModel {
        let k = self.num_topics();
        assert_eq!(perm.len(), k, "permutation length must equal K");
        let mut inverse = vec![0u32; k];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new as u32;
        }
        let assignments: Vec<Vec<u32>> = self
            .assignments
            .iter()
            .map(|z| z.iter().map(|&t| inverse[t as usize]).collect())
            .collect();
        let mut phi = Matrix::zeros(k, self.vocab_size);
        for (new, &old) in perm.iter().enumerate() {
            phi.row_mut(new).copy_from_slice(self.phi.row(old));
        }
        let mut theta = Matrix::zeros(self.theta.rows(), k);
        for d in 0..self.theta.rows() {
            for (new, &old) in perm.iter().enumerate() {
                theta.set(d, new, self.theta.get(d, old));
            }
        }
        let mut counts = Counts::new(self.documents.len(), k, self.vocab_size);
        for (d, (doc, z)) in self.documents.iter().zip(&assignments).enumerate() {
            for (&w, &t) in doc.iter().zip(z) {
                counts.add(d, w, t as usize);
            }
        }
        LdaModel {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            documents: self.documents.clone(),
            assignments,
            phi,
            theta,
            doc_topic: counts.doc_topic,
            topic_word: counts.topic_word,
            topic_totals: counts.topic_totals,
        }
    }

    /// Topic indices ordered by their φ rows. Fold-in sampling walks topics in
    /// this order so relabeling topics cannot change a held-out score.
    fn canonical_topic_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_topics()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (self.phi.row(a), self.phi.row(b));
            ra.iter()
                .zip(rb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order
    }

    /// Log-likelihood of one held-out document after fold-in.
    fn document_log_likelihood(&self, doc: &[u32], order: &[usize]) -> Result<f64, TopicModelError> {
        let k = self.num_topics();
        let alpha = self.config.alpha;
        let mut rng = seeded(derive_seed(self.config.seed ^ document_hash(doc), "fold-in"));
        let mut ranks: Vec<usize> = doc.iter().map(|_| rng.random_range(0..k)).collect();
        let mut n = vec![0u32; k];
        for &r in &ranks {
            n[r] += 1;
        }
        let mut cumulative = vec![0.0; k];
        for _ in 0..FOLD_IN_SWEEPS {
            for (pos, &w) in doc.iter().enumerate() {
                n[ranks[pos]] -= 1;
                let mut acc = 0.0;
                for (r, c) in cumulative.iter_mut().enumerate() {
                    acc += (n[r] as f64 + alpha) * self.phi.get(order[r], w as usize);
                    *c = acc;
                }
                let r = sample_cumulative(&mut rng, &cumulative);
                n[r] += 1;
                ranks[pos] = r;
            }
        }
        let denom = doc.len() as f64 + k as f64 * alpha;
        let mut ll = 0.0;
        for &w in doc {
            let p: f64 = (0..k)
                .map(|r| (n[r] as f64 + alpha) / denom * self.phi.get(order[r], w as usize))
                .sum();
            if p.is_nan() || p <= 0.0 {
                return Err(TopicModelError::ZeroProbability { token: w });
            }
            ll += p.ln();
        }
        Ok(ll)
    }
}

fn document_hash(doc: &[u32]) -> u64 {
    let bytes: Vec<u8> = doc.iter().flat_map(|t| t.to_le_bytes()).collect();
    fnv1a(&bytes)
}

/// `exp(−Σ log p(w) / N)` over held-out documents.
///
/// The result does not depend on document order or on topic labels: each
/// document's fold-in is seeded from its own content, and per-document
/// log-likelihoods are summed in sorted order.
pub fn perplexity(model: &LdaModel, test_documents: &[Vec<u32>]) -> Result<f64, TopicModelError> {
    let total = check_tokens(test_documents, model.vocab_size)?;
    if total == 0 {
        return Err(TopicModelError::EmptyCorpus);
    }
    let order = model.canonical_topic_order();
    let mut per_doc: Vec<f64> = test_documents
        .iter()
        .filter(|d| !d.is_empty())
        .map(|d| model.document_log_likelihood(d, &order))
        .collect::<Result<_, _>>()?;
    per_doc.sort_by(f64::total_cmp);
    let ll: f64 = per_doc.iter().sum();
    Ok((-ll / total as f64).exp())
}

/// Trains one model per candidate K on a seeded 80% of the documents and
/// reports perplexity on the remaining 20%, sorted by K.
///
/// The template's total prior mass α·K is held fixed across K, so a template
/// built with [`LdaConfig::with_topics`] keeps the α = 50/K rule.
pub fn sweep_topic_count(
    documents: &[Vec<u32>],
    vocab_size: usize,
    candidate_ks: &[usize],
    template: &LdaConfig,
) -> Result<Vec<(usize, f64)>, TopicModelError> {
    if candidate_ks.is_empty() {
        return Err(TopicModelError::InvalidConfig("no candidate topic counts".into()));
    }
    if let Some(&bad) = candidate_ks.iter().find(|&&k| k < 2) {
        return Err(TopicModelError::InvalidConfig(format!(
            "candidate K = {bad} is below 2"
        )));
    }
    let (train, held_out) = holdout_split(documents, template.seed)?;
    let prior_mass = template.alpha * template.num_topics as f64;
    let mut results: Vec<(usize, f64)> = candidate_ks
        .par_iter()
        .map(|&k| {
            let config = LdaConfig {
                num_topics: k,
                alpha: prior_mass / k as f64,
                ..template.clone()
            };
            let model = train_lda(&train, vocab_size, &config)?;
            Ok((k, perplexity(&model, &held_out)?))
        })
        .collect::<Result<_, TopicModelError>>()?;
    results.sort_by_key(|&(k, _)| k);
    Ok(results)
}

/// Training and held-out documents.
type Split = (Vec<Vec<u32>>, Vec<Vec<u32>>);

fn holdout_split(documents: &[Vec<u32>], seed: u64) -> Result<Split, TopicModelError> {
    use rand::seq::SliceRandom;
    let non_empty: Vec<&Vec<u32>> = documents.iter().filter(|d| !d.is_empty()).collect();
    if non_empty.len() < 2 {
        return Err(TopicModelError::TooFewDocuments(non_empty.len()));
    }
    let mut idx: Vec<usize> = (0..non_empty.len()).collect();
    idx.shuffle(&mut seeded(derive_seed(seed, "lda-holdout")));
    let n_held = ((non_empty.len() as f64 * SWEEP_HOLDOUT_FRACTION).round() as usize).clamp(1, non_empty.len() - 1);
    let held = idx[..n_held].iter().map(|&i| non_empty[i].clone()).collect();
    let train = idx[n_held..].iter().map(|&i| non_empty[i].clone()).collect();
    Ok((train, held))
}

/// The K with the lowest perplexity; ties go to the smaller K.
pub fn select_topic_count(sweep: &[(usize, f64)]) -> Option<usize> {
    sweep
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|&(k, _)| k)
}

pub fn book_topic_distribution(model: &LdaModel, book_index: usize) -> Result<TopicDistribution, TopicModelError> {
    if book_index >= model.num_documents() {
        return Err(TopicModelError::UnknownDocument(book_index));
    }
    Ok(TopicDistribution(model.theta.row(book_index).to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn quick(k: usize, iters: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            gibbs_iterations: iters,
            burn_in: 0,
            seed,
            ..LdaConfig::with_topics(k)
        }
    }

    fn planted_corpus(docs: usize, len: usize, seed: u64) -> Vec<Vec<u32>> {
        // topic A emits 0..5, topic B emits 5..10; θ_m ~ Dir(0.5, 0.5)
        let mut rng = seeded(seed);
        (0..docs)
            .map(|_| {
                let a: f64 = rng.random::<f64>();
                (0..len)
                    .map(|_| {
                        let base = if rng.random::<f64>() < a { 0 } else { 5 };
                        base + rng.random_range(0..5u32)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_document_rows_normalize() {
        let m = train_lda(&[vec![0, 0, 0]], 1, &quick(2, 10, 1)).unwrap();
        let s: f64 = m.theta().row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        for t in 0..2 {
            assert!((m.phi().row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn counts_conserved_and_simplex() {
        let docs = planted_corpus(40, 12, 3);
        let m = train_lda(&docs, 10, &quick(3, 30, 9)).unwrap();
        for (d, doc) in docs.iter().enumerate() {
            let s: u32 = (0..3).map(|t| m.doc_topic_count(d, t)).sum();
            assert_eq!(s as usize, doc.len());
            let row_sum: f64 = m.theta().row(d).iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-9);
        }
        for t in 0..3 {
            let s: u32 = (0..10).map(|w| m.topic_word_count(t, w)).sum();
            assert_eq!(s, m.topic_total(t));
            assert!(m.phi().row(t).iter().all(|&p| p >= 0.0));
            assert!((m.phi().row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let docs = planted_corpus(20, 10, 5);
        let a = train_lda(&docs, 10, &quick(2, 20, 42)).unwrap();
        let b = train_lda(&docs, 10, &quick(2, 20, 42)).unwrap();
        assert_eq!(a.phi().as_slice(), b.phi().as_slice());
        assert_eq!(a.theta().as_slice(), b.theta().as_slice());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            train_lda(&[], 3, &quick(2, 5, 0)),
            Err(TopicModelError::EmptyCorpus)
        ));
        assert!(matches!(
            train_lda(&[vec![]], 3, &quick(2, 5, 0)),
            Err(TopicModelError::EmptyCorpus)
        ));
        assert!(matches!(
            train_lda(&[vec![0, 7]], 3, &quick(2, 5, 0)),
            Err(TopicModelError::TokenOutOfRange { token: 7, .. })
        ));
        let mut c = quick(1, 5, 0);
        assert!(train_lda(&[vec![0]], 1, &c).is_err());
        c = quick(2, 5, 0);
        c.burn_in = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn perplexity_of_certain_model_is_one() {
        let phi = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let m = LdaModel::from_topic_word(phi, quick(2, 1, 0)).unwrap();
        let p = perplexity(&m, &[vec![0, 0, 0], vec![0]]).unwrap();
        assert!((p - 1.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn perplexity_of_uniform_model_is_vocab_size() {
        let v = 7;
        let phi = Matrix::from_vec(3, v, vec![1.0 / v as f64; 3 * v]).unwrap();
        let m = LdaModel::from_topic_word(phi, quick(3, 1, 0)).unwrap();
        let p = perplexity(&m, &[vec![0, 1, 6], vec![2, 2]]).unwrap();
        assert!((p - v as f64).abs() < 1e-9, "{p}");
    }

    #[test]
    fn perplexity_rejects_unseen_ids_and_empty_sets() {
        let phi = Matrix::from_vec(2, 2, vec![0.5; 4]).unwrap();
        let m = LdaModel::from_topic_word(phi, quick(2, 1, 0)).unwrap();
        assert!(perplexity(&m, &[vec![2]]).is_err());
        assert!(perplexity(&m, &[vec![]]).is_err());
    }

    #[test]
    fn perplexity_invariant_to_order_and_labels() {
        let docs = planted_corpus(60, 15, 8);
        let (train, test) = docs.split_at(45);
        let m = train_lda(train, 10, &quick(3, 40, 2)).unwrap();
        let base = perplexity(&m, test).unwrap();
        let mut reversed = test.to_vec();
        reversed.reverse();
        assert_eq!(base.to_bits(), perplexity(&m, &reversed).unwrap().to_bits());
        let permuted = m.permute_topics(&[2, 0, 1]);
        assert_eq!(base.to_bits(), perplexity(&permuted, test).unwrap().to_bits());
        // relabeling permutes the θ columns
        assert_eq!(permuted.theta().get(0, 0), m.theta().get(0, 2));
    }

    #[test]
    fn alpha_limit_gives_uniform_distribution() {
        let mut c = quick(2, 10, 1);
        c.alpha = 1e6;
        let m = train_lda(&[vec![0, 1, 1]], 2, &c).unwrap();
        let d = book_topic_distribution(&m, 0).unwrap();
        for p in d.probs() {
            assert!((p - 0.5).abs() < 1e-6);
        }
        assert!(matches!(
            book_topic_distribution(&m, 1),
            Err(TopicModelError::UnknownDocument(1))
        ));
    }

    #[test]
    fn from_assignments_reproduces_model() {
        let docs = planted_corpus(15, 8, 4);
        let m = train_lda(&docs, 10, &quick(2, 15, 3)).unwrap();
        let back = LdaModel::from_assignments(m.config().clone(), 10, docs.clone(), m.assignments().to_vec()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.assignments().to_vec();
        bad[0][0] = 9;
        assert!(LdaModel::from_assignments(m.config().clone(), 10, docs, bad).is_err());
    }

    #[test]
    fn sweep_reports_each_k() {
        let docs = planted_corpus(30, 10, 1);
        let out = sweep_topic_count(&docs, 10, &[2], &quick(2, 20, 0)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, 2);
        assert!(out[0].1 > 0.0);
        assert!(sweep_topic_count(&docs, 10, &[], &quick(2, 20, 0)).is_err());
        assert!(sweep_topic_count(&docs, 10, &[1], &quick(2, 20, 0)).is_err());
    }

    #[test]
    fn selection_prefers_smaller_k_on_ties() {
        assert_eq!(select_topic_count(&[(2, 5.0), (5, 3.0), (10, 3.0)]), Some(5));
        assert_eq!(select_topic_count(&[]), None);
    }
}
