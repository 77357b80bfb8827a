//! Latent factor model on implicit purchase data.
//!
//! Purchases are positives (`r = 1`). Negatives (`r = 0`) are drawn per
//! customer from the books they did not buy, with probability proportional to
//! book popularity. Factors are fit by per-pair SGD on
//!
//! ```text
//! C = Σ (r_ui − p_u·q_i)² + λ‖p_u‖² + λ‖q_i‖²
//! ```
//!
//! with step `lr0 / (1 + decay · epoch)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{dot, Matrix};
use crate::registry::Registry;
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Error, PartialEq)]
pub enum LfmError {
    #[error("invalid LFM configuration: {0}")]
    InvalidConfig(String),
    #[error("popularity table is empty")]
    EmptyPopularity,
    #[error("customer {0:?} has no positive interactions")]
    NoPositives(String),
    #[error("interaction set is empty")]
    EmptyInteractions,
    #[error("pair ({0}, {1}) is labeled both positive and negative")]
    ConflictingLabels(String, String),
    #[error("pair references an id outside the registries")]
    UnknownId,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("per-epoch random negatives need an interaction set built by sample_negatives")]
    NoSamplingSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    /// Sample negatives once and reuse them every epoch.
    Fixed,
    /// Draw a fresh negative set every epoch.
    PerEpochRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LfmConfig {
    pub num_factors: usize,
    pub lambda: f64,
    pub lr0: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub negative_ratio: f64,
    pub negative_mode: NegativeMode,
    pub seed: u64,
}

impl Default for LfmConfig {
    fn default() -> Self {
        LfmConfig {
            num_factors: 5,
            lambda: 0.01,
            lr0: 0.02,
            lr_decay: 0.05,
            epochs: 100,
            negative_ratio: 1.0,
            negative_mode: NegativeMode::Fixed,
            seed: 0,
        }
    }
}

impl LfmConfig {
    pub fn validate(&self) -> Result<(), LfmError> {
        let bad = |m: &str| Err(LfmError::InvalidConfig(m.to_string()));
        if self.num_factors == 0 {
            return bad("num_factors must be >= 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return bad("lr_decay must be non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.negative_ratio > 0.0 && self.negative_ratio.is_finite()) {
            return bad("negative_ratio must be positive");
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 / (1.0 + self.lr_decay * epoch as f64)
    }
}

/// What negatives are drawn from: each customer's positives and the
/// popularity weight of every book.
#[derive(Debug, Clone, PartialEq)]
struct SamplingSource {
    positives: Vec<BTreeSet<u32>>,
    popularity: Vec<f64>,
    ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    customers: Registry,
    books: Registry,
    positives: Vec<(u32, u32)>,
    negatives: Vec<(u32, u32)>,
    /// Customers whose positives leave no book to draw a negative from.
    saturated: Vec<String>,
    source: Option<SamplingSource>,
}

impl InteractionSet {
    /// Builds a set from explicit labeled pairs. Such a set cannot be
    /// resampled, so it only supports [`NegativeMode::Fixed`].
    pub fn from_labeled(
        customers: Registry,
        books: Registry,
        positives: Vec<(u32, u32)>,
        negatives: Vec<(u32, u32)>,
    ) -> Result<Self, LfmError> {
        let in_range = |&(u, i): &(u32, u32)| (u as usize) < customers.len() && (i as usize) < books.len();
        if !positives.iter().chain(&negatives).all(in_range) {
            return Err(LfmError::UnknownId);
        }
        let pos: BTreeSet<(u32, u32)> = positives.iter().copied().collect();
        if let Some(&(u, i)) = negatives.iter().find(|p| pos.contains(p)) {
            return Err(LfmError::ConflictingLabels(
                customers.id(u as usize).to_string(),
                books.id(i as usize).to_string(),
            ));
        }
        Ok(InteractionSet {
            customers,
            books,
            positives,
            negatives,
            saturated: Vec::new(),
            source: None,
        })
    }

    pub fn customers(&self) -> &Registry {
        &self.customers
    }

    pub fn books(&self) -> &Registry {
        &self.books
    }

    pub fn positives(&self) -> &[(u32, u32)] {
        &self.positives
    }

    pub fn negatives(&self) -> &[(u32, u32)] {
        &self.negatives
    }

    pub fn saturated_customers(&self) -> &[String] {
        &self.saturated
    }

    /// Negatives drawn for one customer index.
    pub fn negatives_for(&self, customer: u32) -> Vec<u32> {
        self.negatives.iter().filter(|p| p.0 == customer).map(|p| p.1).collect()
    }

    fn labeled(&self, negatives: &[(u32, u32)]) -> Vec<(u32, u32, f64)> {
        self.positives
            .iter()
            .map(|&(u, i)| (u, i, 1.0))
            .chain(negatives.iter().map(|&(u, i)| (u, i, 0.0)))
            .collect()
    }
}

fn draw_count(ratio: f64, positives: usize) -> usize {
    ((ratio * positives as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Weighted sampling without replacement over `candidates` by exponential
/// keys `ln(U) / w`: the largest `k` keys form a sample whose successive
/// draws each pick a remaining item with probability proportional to its
/// weight.
fn weighted_without_replacement<R: Rng>(rng: &mut R, candidates: &[(u32, f64)], k: usize) -> Vec<u32> {
    let mut keyed: Vec<(f64, u32)> = candidates
        .iter()
        .map(|&(item, w)| {
            let u: f64 = 1.0 - rng.random::<f64>();
            (u.ln() / w, item)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, item)| item).collect()
}

fn draw_negatives(source: &SamplingSource, seed: u64) -> (Vec<(u32, u32)>, Vec<usize>) {
    let mut rng = seeded(seed);
    let mut negatives = Vec::new();
    let mut saturated = Vec::new();
    for (u, pos) in source.positives.iter().enumerate() {
        let candidates: Vec<(u32, f64)> = source
            .popularity
            .iter()
            .enumerate()
            .filter(|&(i, &w)| w > 0.0 && !pos.contains(&(i as u32)))
            .map(|(i, &w)| (i as u32, w))
            .collect();
        let want = draw_count(source.ratio, pos.len());
        if candidates.len() < want {
            saturated.push(u);
        }
        for i in weighted_without_replacement(&mut rng, &candidates, want) {
            negatives.push((u as u32, i));
        }
    }
    (negatives, saturated)
}

/// Draws `⌈ratio · |positives_u|⌉` distinct non-purchased books per customer,
/// proportional to popularity. Customers are processed in ascending id
/// order from a single seeded stream.
pub fn sample_negatives(
    positives: &BTreeMap<String, BTreeSet<String>>,
    popularity: &BTreeMap<String, u64>,
    ratio: f64,
    seed: u64,
) -> Result<InteractionSet, LfmError> {
    if popularity.is_empty() {
        return Err(LfmError::EmptyPopularity);
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(LfmError::InvalidConfig("negative_ratio must be positive".into()));
    }
    if let Some((c, _)) = positives.iter().find(|(_, b)| b.is_empty()) {
        return Err(LfmError::NoPositives(c.clone()));
    }
    let book_ids: BTreeSet<&String> = popularity.keys().chain(positives.values().flatten()).collect();
    let books = Registry::from_ids(book_ids.into_iter().cloned());
    let customers = Registry::from_ids(positives.keys().cloned());
    let popularity_w: Vec<f64> = books
        .ids()
        .iter()
        .map(|b| popularity.get(b).copied().unwrap_or(0) as f64)
        .collect();
    let pos_sets: Vec<BTreeSet<u32>> = positives
        .values()
        .map(|bs| bs.iter().map(|b| books.get(b).expect("registered") as u32).collect())
        .collect();
    let source = SamplingSource {
        positives: pos_sets,
        popularity: popularity_w,
        ratio,
    };
    let (negatives, saturated_idx) = draw_negatives(&source, seed);
    let saturated: Vec<String> = saturated_idx.iter().map(|&u| customers.id(u).to_string()).collect();
    if !saturated.is_empty() {
        log::warn!(
            "{} customers have too few non-purchased books for a full negative sample",
            saturated.len()
        );
    }
    let positives_flat = source
        .positives
        .iter()
        .enumerate()
        .flat_map(|(u, set)| set.iter().map(move |&i| (u as u32, i)))
        .collect();
    Ok(InteractionSet {
        customers,
        books,
        positives: positives_flat,
        negatives,
        saturated,
        source: Some(source),
    })
}

/// `(r − p·q)² + λ‖p‖² + λ‖q‖²` for one pair.
pub fn pair_loss(p: &[f64], q: &[f64], r: f64, lambda: f64) -> f64 {
    let e = r - dot(p, q);
    e * e + lambda * dot(p, p) + lambda * dot(q, q)
}

/// Gradient of [`pair_loss`] with respect to `p` and `q`.
pub fn pair_gradient(p: &[f64], q: &[f64], r: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let e = r - dot(p, q);
    let gp = p
        .iter()
        .zip(q)
        .map(|(pk, qk)| -2.0 * e * qk + 2.0 * lambda * pk)
        .collect();
    let gq = p
        .iter()
        .zip(q)
        .map(|(pk, qk)| -2.0 * e * pk + 2.0 * lambda * qk)
        .collect();
    (gp, gq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    customers: Registry,
    books: Registry,
    p: Matrix,
    q: Matrix,
    loss_trace: Vec<f64>,
}

/// A predicted correlation; `cold` marks a customer or book without factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub cold: bool,
}

impl FactorModel {
    pub fn from_parts(
        customers: Registry,
        books: Registry,
        p: Matrix,
        q: Matrix,
        loss_trace: Vec<f64>,
    ) -> Result<Self, LfmError> {
        if p.rows() != customers.len() || q.rows() != books.len() || p.cols() != q.cols() {
            return Err(LfmError::InvalidConfig(format!(
                "factor shapes {}x{} / {}x{} do not match registries of {} customers and {} books",
                p.rows(),
                p.cols(),
                q.rows(),
                q.cols(),
                customers.len(),
                books.len()
            )));
        }
        Ok(FactorModel {
            customers,
            books,
            p,
            q,
            loss_trace,
        })
    }

    pub fn customers(&self) -> &Registry {
        &self.customers
    }

    pub fn books(&self) -> &Registry {
        &self.books
    }

    pub fn customer_factors(&self) -> &Matrix {
        &self.p
    }

    pub fn book_factors(&self) -> &Matrix {
        &self.q
    }

    pub fn num_factors(&self) -> usize {
        self.p.cols()
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    pub fn predict_index(&self, u: usize, i: usize) -> f64 {
        dot(self.p.row(u), self.q.row(i))
    }

    /// `p_u · q_i`; unknown customers or books score 0 with the cold flag set.
    pub fn predict_correlation(&self, customer: &str, book: &str) -> Correlation {
        match (self.customers.get(customer), self.books.get(book)) {
            (Some(u), Some(i)) => Correlation {
                value: self.predict_index(u, i),
                cold: false,
            },
            _ => Correlation { value: 0.0, cold: true },
        }
    }
}

fn loss_on_pairs(p: &Matrix, q: &Matrix, pairs: &[(u32, u32, f64)], lambda: f64) -> f64 {
    let mut sq = 0.0;
    let mut seen_u = BTreeSet::new();
    let mut seen_i = BTreeSet::new();
    for &(u, i, r) in pairs {
        let e = r - dot(p.row(u as usize), q.row(i as usize));
        sq += e * e;
        seen_u.insert(u);
        seen_i.insert(i);
    }
    let reg_u: f64 = seen_u.iter().map(|&u| dot(p.row(u as usize), p.row(u as usize))).sum();
    let reg_i: f64 = seen_i.iter().map(|&i| dot(q.row(i as usize), q.row(i as usize))).sum();
    sq + lambda * (reg_u + reg_i)
}

/// Squared error over every labeled pair plus λ times the squared norm of
/// each customer and book that appears, each counted once. Pairs are matched
/// to the model by id; unknown ids predict 0 and carry no penalty.
pub fn compute_loss(model: &FactorModel, interactions: &InteractionSet, lambda: f64) -> f64 {
    let mut sq = 0.0;
    let mut seen_u = BTreeSet::new();
    let mut seen_i = BTreeSet::new();
    for (u, i, r) in interactions.labeled(&interactions.negatives) {
        let cu = model.customers.get(interactions.customers.id(u as usize));
        let bi = model.books.get(interactions.books.id(i as usize));
        let pred = match (cu, bi) {
            (Some(cu), Some(bi)) => model.predict_index(cu, bi),
            _ => 0.0,
        };
        sq += (r - pred) * (r - pred);
        seen_u.extend(cu);
        seen_i.extend(bi);
    }
    let reg_u: f64 = seen_u.iter().map(|&u| dot(model.p.row(u), model.p.row(u))).sum();
    let reg_i: f64 = seen_i.iter().map(|&i| dot(model.q.row(i), model.q.row(i))).sum();
    sq + lambda * (reg_u + reg_i)
}

pub fn train_lfm(interactions: &InteractionSet, config: &LfmConfig) -> Result<FactorModel, LfmError> {
    config.validate()?;
    if interactions.positives.is_empty() && interactions.negatives.is_empty() {
        return Err(LfmError::EmptyInteractions);
    }
    if config.negative_mode == NegativeMode::PerEpochRandom && interactions.source.is_none() {
        return Err(LfmError::NoSamplingSource);
    }
    let f = config.num_factors;
    let mut rng = seeded(config.seed);
    let bound = 1.0 / (f as f64).sqrt();
    let mut init = |rows: usize| {
        let data = (0..rows * f).map(|_| rng.random_range(0.0..bound)).collect();
        Matrix::from_vec(rows, f, data).expect("sized")
    };
    let mut p = init(interactions.customers.len());
    let mut q = init(interactions.books.len());

    let mut trace = Vec::with_capacity(config.epochs);
    let mut touched_u = vec![false; interactions.customers.len()];
    let mut touched_i = vec![false; interactions.books.len()];
    let fixed = interactions.labeled(&interactions.negatives);
    for epoch in 0..config.epochs {
        let mut pairs = match config.negative_mode {
            NegativeMode::Fixed => fixed.clone(),
            NegativeMode::PerEpochRandom => {
                let source = interactions.source.as_ref().expect("checked above");
                let seed = derive_seed(config.seed, &format!("negatives/{epoch}"));
                interactions.labeled(&draw_negatives(source, seed).0)
            }
        };
        pairs.shuffle(&mut rng);
        let lr = config.learning_rate(epoch);
        for &(u, i, r) in &pairs {
            touched_u[u as usize] = true;
            touched_i[i as usize] = true;
            let (gp, gq) = pair_gradient(p.row(u as usize), q.row(i as usize), r, config.lambda);
            for (x, g) in p.row_mut(u as usize).iter_mut().zip(&gp) {
                *x -= lr * g;
            }
            for (x, g) in q.row_mut(i as usize).iter_mut().zip(&gq) {
                *x -= lr * g;
            }
        }
        let loss = loss_on_pairs(&p, &q, &pairs, config.lambda);
        if !loss.is_finite() {
            return Err(LfmError::Diverged { epoch: epoch + 1, loss });
        }
        trace.push(loss);
    }
    log::debug!(
        "LFM final loss {:.6} after {} epochs",
        trace.last().unwrap_or(&0.0),
        config.epochs
    );
    // entities that never received an update carry no evidence; drop them so
    // they are treated as cold
    let (customers, p) = keep_rows(&interactions.customers, &p, &touched_u);
    let (books, q) = keep_rows(&interactions.books, &q, &touched_i);
    Ok(FactorModel {
        customers,
        books,
        p,
        q,
        loss_trace: trace,
    })
}

fn keep_rows(registry: &Registry, m: &Matrix, keep: &[bool]) -> (Registry, Matrix) {
    let rows: Vec<usize> = (0..registry.len()).filter(|&r| keep[r]).collect();
    let ids = Registry::from_ids(rows.iter().map(|&r| registry.id(r).to_string()));
    let data = rows.iter().flat_map(|&r| m.row(r).iter().copied()).collect();
    (ids, Matrix::from_vec(rows.len(), m.cols(), data).expect("sized"))
}
