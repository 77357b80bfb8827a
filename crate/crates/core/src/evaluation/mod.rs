//! Precision, recall and F over top-N lists, and the method comparison
//! experiment.

mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybrid::{HybridConfig, HybridError, Method, Recommender};
use crate::lfm::FactorModel;
use crate::registry::Registry;
use crate::similarity::SimilaritySource;

pub use self::report::{emit_report, render_svg, write_metrics_csv, METRICS_HEADER, REFERENCE_NOTE};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no customer has held-out purchases")]
    NoRelevantItems,
    #[error("report has no cells")]
    EmptyReport,
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("invalid experiment: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// Micro-averaged scores with the pooled counts behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Σ|R(u) ∩ T(u)|
    pub hits: usize,
    /// Σ|R(u)|
    pub recommended: usize,
    /// Σ|T(u)|
    pub relevant: usize,
    /// Customers with a non-empty T(u).
    pub customers: usize,
}

/// Pools intersections, list sizes and truth sizes over every customer whose
/// truth set is non-empty, then takes ratios. F is 0 when precision and
/// recall are both 0.
pub fn precision_recall_f(
    recommendations: &BTreeMap<String, Vec<String>>,
    truth: &BTreeMap<String, BTreeSet<String>>,
) -> Result<Metrics, EvalError> {
    let mut hits = 0;
    let mut recommended = 0;
    let mut relevant = 0;
    let mut customers = 0;
    for (u, t) in truth.iter().filter(|(_, t)| !t.is_empty()) {
        let r: BTreeSet<&String> = recommendations.get(u).map(|r| r.iter().collect()).unwrap_or_default();
        hits += r.iter().filter(|b| t.contains(**b)).count();
        recommended += r.len();
        relevant += t.len();
        customers += 1;
    }
    if customers == 0 {
        return Err(EvalError::NoRelevantItems);
    }
    let precision = if recommended == 0 {
        0.0
    } else {
        hits as f64 / recommended as f64
    };
    let recall = hits as f64 / relevant as f64;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        precision,
        recall,
        f,
        hits,
        recommended,
        relevant,
        customers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub method: Method,
    pub neighborhood: usize,
    pub top_n: usize,
    pub metrics: Metrics,
    /// Fraction of test customers that have a factor row.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by method, neighborhood, then list size.
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, method: Method, neighborhood: usize, top_n: usize) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.neighborhood == neighborhood && c.top_n == top_n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub methods: Vec<Method>,
    pub neighborhood_sizes: Vec<usize>,
    pub list_sizes: Vec<usize>,
    pub exclude_purchased: bool,
    pub min_similarity: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let hybrid = HybridConfig::default();
        ExperimentPlan {
            methods: vec![Method::Hybrid, Method::LfmOnly],
            neighborhood_sizes: (10..=28).step_by(2).collect(),
            list_sizes: hybrid.list_sizes,
            exclude_purchased: hybrid.exclude_purchased,
            min_similarity: hybrid.min_similarity,
        }
    }
}

/// Trained, train-side artifacts plus the held-out truth.
pub struct ExperimentInputs<'a, S: SimilaritySource + Sync + ?Sized> {
    pub similarity: &'a S,
    pub lfm: &'a FactorModel,
    pub candidates: &'a Registry,
    pub train: &'a BTreeMap<String, Vec<String>>,
    pub test: &'a BTreeMap<String, BTreeSet<String>>,
}

/// Scores every method × neighborhood × list-size cell. Lists are cut from a
/// single ranking at the largest list size, so a shorter list is always a
/// prefix of a longer one.
pub fn run_experiment<S: SimilaritySource + Sync + ?Sized>(
    inputs: &ExperimentInputs<'_, S>,
    plan: &ExperimentPlan,
) -> Result<EvalReport, EvalError> {
    if plan.methods.is_empty() || plan.neighborhood_sizes.is_empty() || plan.list_sizes.is_empty() {
        return Err(EvalError::InvalidPlan(
            "methods, neighborhood sizes and list sizes must be non-empty".into(),
        ));
    }
    let test_customers: Vec<&String> = inputs
        .test
        .iter()
        .filter(|(_, t)| !t.is_empty())
        .map(|(c, _)| c)
        .collect();
    if test_customers.is_empty() {
        return Err(EvalError::NoRelevantItems);
    }
    let covered = test_customers
        .iter()
        .filter(|c| inputs.lfm.customers().contains(c))
        .count();
    let coverage = covered as f64 / test_customers.len() as f64;
    let max_n = plan.list_sizes.iter().copied().max().unwrap_or(0);

    let methods: BTreeSet<Method> = plan.methods.iter().copied().collect();
    let sizes: BTreeSet<usize> = plan.neighborhood_sizes.iter().copied().collect();
    let list_sizes: BTreeSet<usize> = plan.list_sizes.iter().copied().collect();
    let mut cells = Vec::new();
    for &method in &methods {
        let mut lfm_lists = None;
        for &n in &sizes {
            let config = HybridConfig {
                neighborhood_size: n,
                list_sizes: plan.list_sizes.clone(),
                exclude_purchased: plan.exclude_purchased,
                min_similarity: plan.min_similarity,
            };
            let recommender = Recommender {
                similarity: inputs.similarity,
                lfm: inputs.lfm,
                candidates: inputs.candidates,
                purchased: inputs.train,
                config: &config,
            };
            // latent-factor ranking ignores the neighborhood; compute it once
            let lists = match (method, &lfm_lists) {
                (Method::LfmOnly, Some(l)) => Clone::clone(l),
                _ => {
                    let recs = recommender.recommend_all(test_customers.iter().copied(), method, max_n)?;
                    let l: BTreeMap<String, Vec<String>> = recs
                        .into_iter()
                        .map(|(c, r)| (c, r.items.into_iter().map(|i| i.book).collect()))
                        .collect();
                    if method == Method::LfmOnly {
                        lfm_lists = Some(l.clone());
                    }
                    l
                }
            };
            for &top_n in &list_sizes {
                let cut: BTreeMap<String, Vec<String>> = lists
                    .iter()
                    .map(|(c, l)| (c.clone(), l.iter().take(top_n).cloned().collect()))
                    .collect();
                cells.push(EvalCell {
                    method,
                    neighborhood: n,
                    top_n,
                    metrics: precision_recall_f(&cut, inputs.test)?,
                    coverage,
                });
            }
        }
    }
    Ok(EvalReport { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lists(pairs: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(c, bs)| (c.to_string(), bs.iter().map(|b| b.to_string()).collect()))
            .collect()
    }

    fn sets(pairs: &[(&str, &[&str])]) -> BTreeMap<String, BTreeSet<String>> {
        pairs
            .iter()
            .map(|(c, bs)| (c.to_string(), bs.iter().map(|b| b.to_string()).collect()))
            .collect()
    }

    #[test]
    fn worked_example() {
        let m = precision_recall_f(
            &lists(&[("u", &["1", "2", "3", "4", "5"])]),
            &sets(&[("u", &["2", "5", "9"])]),
        )
        .unwrap();
        assert_eq!(m.precision, 0.4);
        assert_eq!(m.recall, 2.0 / 3.0);
        assert!((m.f - 0.5).abs() < 1e-15);
        assert_eq!((m.hits, m.recommended, m.relevant), (2, 5, 3));
    }

    #[test]
    fn perfect_and_disjoint() {
        let t = sets(&[("a", &["1", "2"]), ("b", &["3"])]);
        let m = precision_recall_f(&lists(&[("a", &["1", "2"]), ("b", &["3"])]), &t).unwrap();
        assert_eq!((m.precision, m.recall, m.f), (1.0, 1.0, 1.0));
        let m = precision_recall_f(&lists(&[("a", &["7"]), ("b", &["8"])]), &t).unwrap();
        assert_eq!((m.precision, m.recall, m.f), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_truth_customers_are_skipped() {
        let m = precision_recall_f(
            &lists(&[("a", &["1"]), ("b", &["2", "3"])]),
            &sets(&[("a", &["1"]), ("b", &[])]),
        )
        .unwrap();
        assert_eq!((m.recommended, m.customers), (1, 1));
        assert!(matches!(
            precision_recall_f(&lists(&[("a", &["1"])]), &sets(&[("a", &[])])),
            Err(EvalError::NoRelevantItems)
        ));
    }

    fn instance() -> impl Strategy<Value = (BTreeMap<String, Vec<String>>, BTreeMap<String, BTreeSet<String>>)> {
        let user = (
            prop::collection::btree_set(0u8..15, 0..8),
            prop::collection::btree_set(0u8..15, 0..6),
        );
        prop::collection::vec(user, 1..10).prop_map(|users| {
            let mut r = BTreeMap::new();
            let mut t = BTreeMap::new();
            for (i, (rs, ts)) in users.into_iter().enumerate() {
                r.insert(format!("u{i}"), rs.iter().map(|b| format!("b{b}")).collect());
                t.insert(format!("u{i}"), ts.iter().map(|b| format!("b{b}")).collect());
            }
            (r, t)
        })
    }

    proptest! {
        #[test]
        fn pooled_counts_bound(inst in instance()) {
            let (r, t) = inst;
            if let Ok(m) = precision_recall_f(&r, &t) {
                prop_assert!(m.hits <= m.recommended.min(m.relevant));
                for x in [m.precision, m.recall, m.f] {
                    prop_assert!((0.0..=1.0).contains(&x));
                }
            }
        }

        #[test]
        fn relabeling_customers_is_invariant(inst in instance()) {
            let (r, t) = inst;
            let rename = |c: &String| format!("z{}", 100 - c[1..].parse::<i32>().unwrap());
            let r2 = r.iter().map(|(c, l)| (rename(c), l.clone())).collect();
            let t2 = t.iter().map(|(c, l)| (rename(c), l.clone())).collect();
            match (precision_recall_f(&r, &t), precision_recall_f(&r2, &t2)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }
    }
}
