use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{IngestError, TransactionRecord};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum SplitPolicy {
    /// Each customer's latest purchases go to test; customers with fewer
    /// than two purchases stay in train.
    PerCustomerTail { fraction: f64 },
    /// Every transaction independently lands in test with probability `fraction`.
    GlobalRandom { fraction: f64, seed: u64 },
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy::PerCustomerTail { fraction: 0.2 }
    }
}

impl SplitPolicy {
    pub fn fraction(&self) -> f64 {
        match *self {
            SplitPolicy::PerCustomerTail { fraction } | SplitPolicy::GlobalRandom { fraction, .. } => fraction,
        }
    }
}

/// Transaction indices on each side of the split, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_train_test(transactions: &[TransactionRecord], policy: SplitPolicy) -> Result<Split, IngestError> {
    if transactions.is_empty() {
        return Err(IngestError::EmptyTransactions);
    }
    let fraction = policy.fraction();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(IngestError::InvalidOption(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut in_test = vec![false; transactions.len()];
    match policy {
        SplitPolicy::PerCustomerTail { fraction } => {
            let mut by_customer: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, t) in transactions.iter().enumerate() {
                by_customer.entry(&t.customer_id).or_default().push(i);
            }
            for mut idx in by_customer.into_values() {
                if idx.len() < 2 {
                    continue;
                }
                // stable on file order for equal timestamps
                idx.sort_by_key(|&i| (transactions[i].timestamp, i));
                let n_test = tail_count(fraction, idx.len());
                for &i in &idx[idx.len() - n_test..] {
                    in_test[i] = true;
                }
            }
        }
        SplitPolicy::GlobalRandom { fraction, seed } => {
            let mut rng = seeded(seed);
            for flag in in_test.iter_mut() {
                *flag = rng.random::<f64>() < fraction;
            }
        }
    }
    let mut split = Split::default();
    for (i, test) in in_test.into_iter().enumerate() {
        if test {
            split.test.push(i);
        } else {
            split.train.push(i);
        }
    }
    Ok(split)
}

/// ⌈fraction · count⌉, guarded against representation error such as
/// `0.7 * 10 = 7.000000000000001`.
fn tail_count(fraction: f64, count: usize) -> usize {
    let raw = fraction * count as f64;
    let n = (raw - 1e-9).ceil().max(0.0) as usize;
    n.min(count)
}
