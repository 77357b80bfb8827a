//! Blends neighbor similarity with latent-factor correlations into one
//! predicted rating per (customer, book), and cuts top-N lists from it.
//!
//! For a customer `u` with neighbors `v_1..v_N` and `w = 1/(N+1)`:
//!
//! ```text
//! p(u, i) = Σ_v w · sim(u, v) · r̂(v, i)  +  w · r̂(u, i)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lfm::FactorModel;
use crate::registry::Registry;
use crate::similarity::{rank_desc, top_n_neighbors, SimilaritySource};

#[derive(Debug, Error, PartialEq)]
pub enum HybridError {
    #[error("invalid recommender configuration: {0}")]
    InvalidConfig(String),
    #[error("candidate set is empty")]
    EmptyCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hybrid,
    LfmOnly,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hybrid => "hybrid",
            Method::LfmOnly => "lfm_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridConfig {
    pub neighborhood_size: usize,
    pub list_sizes: Vec<usize>,
    pub exclude_purchased: bool,
    /// Neighbors below this similarity are dropped.
    pub min_similarity: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            neighborhood_size: 10,
            list_sizes: vec![10, 20],
            exclude_purchased: true,
            min_similarity: 0.0,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), HybridError> {
        if self.neighborhood_size == 0 {
            return Err(HybridError::InvalidConfig("neighborhood_size must be >= 1".into()));
        }
        if self.list_sizes.is_empty() || self.list_sizes.contains(&0) {
            return Err(HybridError::InvalidConfig(
                "list_sizes must be non-empty and positive".into(),
            ));
        }
        if !self.min_similarity.is_finite() {
            return Err(HybridError::InvalidConfig("min_similarity must be finite".into()));
        }
        Ok(())
    }

    pub fn max_list_size(&self) -> usize {
        self.list_sizes.iter().copied().max().unwrap_or(0)
    }
}

/// Per-neighbor weight and self weight for a neighborhood of `n`; both are
/// `1/(n+1)`, so `n · w + w = 1`.
pub fn neighbor_weights(n: usize) -> (f64, f64) {
    let w = 1.0 / (n as f64 + 1.0);
    (w, w)
}

/// Score from `(sim(u, v), r̂(v, i))` neighbor terms and the self term `r̂(u, i)`.
pub fn hybrid_score_terms(neighbors: &[(f64, f64)], self_correlation: f64) -> f64 {
    let (w, w_self) = neighbor_weights(neighbors.len());
    neighbors.iter().map(|&(sim, r)| w * sim * r).sum::<f64>() + w_self * self_correlation
}

/// Predicted rating of `book` for `customer` given its neighbor list.
/// Customers or books without factors contribute a correlation of 0.
pub fn hybrid_score(customer: &str, book: &str, neighbors: &[(String, f64)], lfm: &FactorModel) -> f64 {
    let terms: Vec<(f64, f64)> = neighbors
        .iter()
        .map(|(v, sim)| (*sim, lfm.predict_correlation(v, book).value))
        .collect();
    hybrid_score_terms(&terms, lfm.predict_correlation(customer, book).value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingPrediction {
    pub customer: String,
    pub book: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub customer: String,
    pub items: Vec<RatingPrediction>,
    /// Neighbors that entered the score.
    pub neighbors: usize,
    /// The customer has no factor row.
    pub cold: bool,
}

/// Everything needed to score candidates; all parts are read-only.
pub struct Recommender<'a, S: SimilaritySource + Sync + ?Sized> {
    pub similarity: &'a S,
    pub lfm: &'a FactorModel,
    pub candidates: &'a Registry,
    pub purchased: &'a BTreeMap<String, Vec<String>>,
    pub config: &'a HybridConfig,
}

impl<S: SimilaritySource + Sync + ?Sized> Recommender<'_, S> {
    fn neighbors(&self, customer: &str) -> Vec<(String, f64)> {
        if !self.similarity.customers().contains(customer) {
            return Vec::new();
        }
        let mut list = top_n_neighbors(self.similarity, customer, self.config.neighborhood_size)
            .expect("neighborhood size validated and customer registered");
        list.retain(|(_, s)| *s >= self.config.min_similarity);
        list
    }

    /// The `top_n` best candidates for one customer, descending by score,
    /// ties by ascending book id.
    pub fn recommend(&self, customer: &str, method: Method, top_n: usize) -> Result<Recommendation, HybridError> {
        self.config.validate()?;
        if self.candidates.is_empty() {
            return Err(HybridError::EmptyCandidates);
        }
        let excluded: BTreeSet<&str> = if self.config.exclude_purchased {
            self.purchased
                .get(customer)
                .map(|b| b.iter().map(String::as_str).collect())
                .unwrap_or_default()
        } else {
            BTreeSet::new()
        };
        let neighbors = match method {
            Method::Hybrid => self.neighbors(customer),
            Method::LfmOnly => Vec::new(),
        };
        let lfm = self.lfm;
        let u_row = lfm.customers().get(customer);
        let v_rows: Vec<(f64, Option<usize>)> = neighbors.iter().map(|(v, s)| (*s, lfm.customers().get(v))).collect();
        let mut scored: Vec<(String, f64)> = self
            .candidates
            .ids()
            .iter()
            .filter(|b| !excluded.contains(b.as_str()))
            .map(|b| {
                let i = lfm.books().get(b);
                let r = |u: Option<usize>| match (u, i) {
                    (Some(u), Some(i)) => lfm.predict_index(u, i),
                    _ => 0.0,
                };
                let score = match method {
                    Method::LfmOnly => r(u_row),
                    Method::Hybrid => {
                        let terms: Vec<(f64, f64)> = v_rows.iter().map(|&(s, v)| (s, r(v))).collect();
                        hybrid_score_terms(&terms, r(u_row))
                    }
                };
                (b.clone(), score)
            })
            .collect();
        if scored.is_empty() {
            log::warn!("no candidates left for customer {customer} after excluding purchases");
        }
        scored.sort_by(rank_desc);
        scored.truncate(top_n);
        Ok(Recommendation {
            customer: customer.to_string(),
            items: scored
                .into_iter()
                .map(|(book, score)| RatingPrediction {
                    customer: customer.to_string(),
                    book,
                    score,
                })
                .collect(),
            neighbors: neighbors.len(),
            cold: u_row.is_none(),
        })
    }

    /// Recommendations for many customers, computed in parallel and returned
    /// in ascending customer order.
    pub fn recommend_all<'c, I>(
        &self,
        customers: I,
        method: Method,
        top_n: usize,
    ) -> Result<BTreeMap<String, Recommendation>, HybridError>
    where
        I: IntoIterator<Item = &'c String>,
    {
        let ids: Vec<&String> = customers.into_iter().collect();
        let recs: Vec<Recommendation> = ids
            .par_iter()
            .map(|c| self.recommend(c, method, top_n))
            .collect::<Result<_, _>>()?;
        Ok(recs.into_iter().map(|r| (r.customer.clone(), r)).collect())
    }
}

pub const RECOMMENDATIONS_HEADER: &str = "customer_id,rank,book_id,score";

/// Writes `customer_id,rank,book_id,score` rows; ranks start at 1.
pub fn write_recommendations<'a, W, I>(mut out: W, recs: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Recommendation>,
{
    writeln!(out, "{RECOMMENDATIONS_HEADER}")?;
    for rec in recs {
        for (rank, item) in rec.items.iter().enumerate() {
            writeln!(out, "{},{},{},{}", rec.customer, rank + 1, item.book, item.score)?;
        }
    }
    Ok(())
}
