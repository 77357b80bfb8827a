//! Input tables, title tokenization and the train/test split.

mod csv;
mod split;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::Registry;

pub use self::csv::{
    parse_catalog, parse_profiles, parse_transactions, write_catalog, write_profiles, write_transactions, CsvOptions,
    Parsed, RowError, CATALOG_HEADER, MAX_AGE, PROFILES_HEADER, TRANSACTIONS_HEADER,
};
pub use self::split::{split_train_test, Split, SplitPolicy};
pub use self::tokenize::{tokenize_title, TokenizerMode};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing or malformed header, expected `{expected}`")]
    MissingHeader { expected: &'static str },
    #[error("{failed} of {total} rows failed to parse (first at line {}: {})", first.line, first.message)]
    TooManyRowErrors {
        failed: usize,
        total: usize,
        first: RowError,
    },
    #[error("title {0:?} has no tokens after tokenization")]
    EmptyTitle(String),
    #[error("transaction list is empty")]
    EmptyTransactions,
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub customer_id: String,
    pub book_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookCatalogEntry {
    pub book_id: String,
    pub title: String,
    pub book_type: String,
    pub title_tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Gender {
    pub fn parse(s: &str) -> Gender {
        match s.trim().to_lowercase().as_str() {
            "male" | "m" => Gender::Male,
            "female" | "f" => Gender::Female,
            _ => Gender::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

/// Missing categorical values are `None` (the "unknown" category).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerProfileRecord {
    pub customer_id: String,
    pub card_type: Option<String>,
    pub age: Option<u32>,
    pub gender: Gender,
    pub contact: Option<String>,
}

impl CustomerProfileRecord {
    pub fn unknown(customer_id: &str) -> Self {
        CustomerProfileRecord {
            customer_id: customer_id.to_string(),
            card_type: None,
            age: None,
            gender: Gender::Unknown,
            contact: None,
        }
    }
}

/// Token ↔ id map over title tokens. Ids are dense in `0..len`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary(Registry);

impl Vocabulary {
    pub fn from_documents<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut reg = Registry::default();
        for doc in docs {
            for tok in doc {
                reg.insert(tok.clone());
            }
        }
        Vocabulary(reg)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.0.get(token).map(|i| i as u32)
    }

    pub fn token(&self, id: u32) -> &str {
        self.0.id(id as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub transaction_row_errors: Vec<RowError>,
    pub catalog_row_errors: Vec<RowError>,
    pub profile_row_errors: Vec<RowError>,
    pub duplicate_books: usize,
    pub duplicate_profiles: usize,
    /// Transactions dropped because their book is not in the catalog.
    pub orphan_transactions: usize,
    /// Customers with purchases but no profile row; they get an all-unknown profile.
    pub missing_profiles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub transactions: Vec<TransactionRecord>,
    pub catalog: BTreeMap<String, BookCatalogEntry>,
    pub profiles: BTreeMap<String, CustomerProfileRecord>,
    pub split: Split,
    pub vocabulary: Vocabulary,
    /// Train purchase count per catalog book (zero for unsold books).
    pub book_popularity: BTreeMap<String, u64>,
    pub stats: IngestStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IngestOptions {
    pub csv: CsvOptions,
    pub tokenizer: TokenizerMode,
    pub split: SplitPolicy,
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::File {
            path: path.display().to_string(),
            source,
        })
}

impl Dataset {
    pub fn load(
        transactions: &Path,
        catalog: &Path,
        profiles: &Path,
        opts: &IngestOptions,
    ) -> Result<Dataset, IngestError> {
        let tx = parse_transactions(open(transactions)?, &opts.csv)?;
        let cat = parse_catalog(open(catalog)?, opts.tokenizer, &opts.csv)?;
        let prof = parse_profiles(open(profiles)?, &opts.csv)?;
        Dataset::assemble(tx, cat, prof, opts.split)
    }

    /// Joins parsed tables, drops transactions whose book is unknown,
    /// fills in missing profiles and applies the split.
    pub fn assemble(
        transactions: Parsed<TransactionRecord>,
        catalog: Parsed<BookCatalogEntry>,
        profiles: Parsed<CustomerProfileRecord>,
        split: SplitPolicy,
    ) -> Result<Dataset, IngestError> {
        let catalog_map: BTreeMap<String, BookCatalogEntry> =
            catalog.records.into_iter().map(|b| (b.book_id.clone(), b)).collect();
        if catalog_map.is_empty() {
            return Err(IngestError::EmptyCatalog);
        }
        let total = transactions.records.len();
        let kept: Vec<TransactionRecord> = transactions
            .records
            .into_iter()
            .filter(|t| catalog_map.contains_key(&t.book_id))
            .collect();
        let orphan_transactions = total - kept.len();
        if orphan_transactions > 0 {
            log::warn!("{orphan_transactions} transactions reference books missing from the catalog");
        }

        let mut profile_map: BTreeMap<String, CustomerProfileRecord> = profiles
            .records
            .into_iter()
            .map(|p| (p.customer_id.clone(), p))
            .collect();
        let mut missing_profiles = 0;
        for t in &kept {
            if !profile_map.contains_key(&t.customer_id) {
                profile_map.insert(t.customer_id.clone(), CustomerProfileRecord::unknown(&t.customer_id));
                missing_profiles += 1;
            }
        }

        let split = split_train_test(&kept, split)?;
        let vocabulary = Vocabulary::from_documents(catalog_map.values().map(|b| b.title_tokens.as_slice()));
        let mut book_popularity: BTreeMap<String, u64> = catalog_map.keys().map(|k| (k.clone(), 0)).collect();
        for &i in &split.train {
            *book_popularity.get_mut(&kept[i].book_id).expect("filtered above") += 1;
        }

        Ok(Dataset {
            transactions: kept,
            catalog: catalog_map,
            profiles: profile_map,
            split,
            vocabulary,
            book_popularity,
            stats: IngestStats {
                transaction_row_errors: transactions.row_errors,
                catalog_row_errors: catalog.row_errors,
                profile_row_errors: profiles.row_errors,
                duplicate_books: catalog.duplicates,
                duplicate_profiles: profiles.duplicates,
                orphan_transactions,
                missing_profiles,
            },
        })
    }

    /// Books in document order (ascending book id).
    pub fn book_registry(&self) -> Registry {
        Registry::from_ids(self.catalog.keys().cloned())
    }

    /// One LDA document per catalog book, in `book_registry` order.
    pub fn documents(&self) -> Vec<Vec<u32>> {
        self.catalog
            .values()
            .map(|b| self.vocabulary.encode(&b.title_tokens))
            .collect()
    }

    /// Every customer that appears in a transaction, ascending.
    pub fn customers(&self) -> BTreeSet<String> {
        self.transactions.iter().map(|t| t.customer_id.clone()).collect()
    }

    /// Train purchases per customer in timestamp order; repeats are kept.
    pub fn train_purchases(&self) -> BTreeMap<String, Vec<String>> {
        self.purchases(&self.split.train)
    }

    /// Held-out purchases per customer as a set.
    pub fn test_purchases(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.purchases(&self.split.test)
            .into_iter()
            .map(|(c, books)| (c, books.into_iter().collect()))
            .collect()
    }

    fn purchases(&self, idx: &[usize]) -> BTreeMap<String, Vec<String>> {
        let mut sorted: Vec<usize> = idx.to_vec();
        sorted.sort_by_key(|&i| (self.transactions[i].timestamp, i));
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for i in sorted {
            let t = &self.transactions[i];
            out.entry(t.customer_id.clone()).or_default().push(t.book_id.clone());
        }
        out
    }

    pub fn summary(&self) -> DatasetSummary {
        let customers = self.customers().len();
        DatasetSummary {
            transactions: self.transactions.len(),
            train: self.split.train.len(),
            test: self.split.test.len(),
            books: self.catalog.len(),
            customers,
            profiles: self.profiles.len(),
            vocabulary_size: self.vocabulary.len(),
            mean_purchases_per_customer: if customers == 0 {
                0.0
            } else {
                self.transactions.len() as f64 / customers as f64
            },
            stats: self.stats.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub transactions: usize,
    pub train: usize,
    pub test: usize,
    pub books: usize,
    pub customers: usize,
    pub profiles: usize,
    pub vocabulary_size: usize,
    pub mean_purchases_per_customer: f64,
    pub stats: IngestStats,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset() -> Dataset {
        let tx = "customer_id,book_id,timestamp\n\
                  c1,b1,1\nc1,b2,2\nc1,b3,3\nc1,b1,4\nc1,b2,5\n\
                  c2,b2,1\nc3,b9,1\nc3,b3,2\n";
        let cat = "book_id,title,book_type\nb1,The Art of War,history\nb2,War and Peace,literature\nb3,Peace Garden,children\n";
        let prof = "customer_id,card_type,age,gender,contact\nc1,gift,35,male,email\n";
        let opts = CsvOptions::default();
        Dataset::assemble(
            parse_transactions(tx.as_bytes(), &opts).unwrap(),
            parse_catalog(cat.as_bytes(), TokenizerMode::Whitespace, &opts).unwrap(),
            parse_profiles(prof.as_bytes(), &opts).unwrap(),
            SplitPolicy::default(),
        )
        .unwrap()
    }

    #[test]
    fn orphans_dropped_and_profiles_filled() {
        let d = dataset();
        assert_eq!(d.stats.orphan_transactions, 1);
        assert_eq!(d.transactions.len(), 7);
        assert_eq!(d.stats.missing_profiles, 2);
        assert_eq!(d.profiles["c3"], CustomerProfileRecord::unknown("c3"));
        assert!(d.transactions.iter().all(|t| d.catalog.contains_key(&t.book_id)));
    }

    #[test]
    fn vocabulary_is_dense_bijection() {
        let d = dataset();
        let v = &d.vocabulary;
        for id in 0..v.len() as u32 {
            assert_eq!(v.id(v.token(id)), Some(id));
        }
        // the, art, of, war, and, peace, garden
        assert_eq!(v.len(), 7);
        assert!(d.documents().iter().flatten().all(|&t| (t as usize) < v.len()));
    }

    #[test]
    fn popularity_counts_train_purchases() {
        let d = dataset();
        let total: u64 = d.book_popularity.values().sum();
        assert_eq!(total as usize, d.split.train.len());
        // c1 has 5 purchases -> last one (b2 at t=5) is held out
        assert_eq!(d.test_purchases()["c1"], BTreeSet::from(["b2".to_string()]));
        assert_eq!(d.train_purchases()["c1"], ["b1", "b2", "b3", "b1"]);
        assert_eq!(d.book_popularity["b1"], 2);
    }
}
