//! Planted-preference corpus generator.
//!
//! Each genre owns a title vocabulary and a book-type token. Customers draw
//! a sparse genre mixture and buy books from it, favoring popular titles.
//! Demographics lean on each customer's dominant genre, so every feature
//! block carries some signal.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{PathsConfig, PipelineConfig};
use crate::ingest::{
    write_catalog, write_profiles, write_transactions, BookCatalogEntry, CustomerProfileRecord, Gender,
    TransactionRecord,
};
use crate::rng::{derive_seed, seeded};

const GENRE_NAMES: [&str; 8] = [
    "mystery", "romance", "science", "history", "fantasy", "travel", "cooking", "poetry",
];
const SHARED_WORDS: [&str; 10] = [
    "the", "of", "a", "and", "tales", "book", "story", "guide", "new", "life",
];
const SHARED_WORD_RATE: f64 = 0.2;
const CARD_TYPES: [&str; 3] = ["standard", "silver", "gold"];
const CONTACTS: [&str; 3] = ["email", "phone", "sms"];
const START_TIME: u64 = 1_577_836_800;
const DAY: u64 = 86_400;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub customers: usize,
    pub books: usize,
    pub genres: usize,
    pub words_per_genre: usize,
    pub min_title_words: usize,
    pub max_title_words: usize,
    pub min_purchases: usize,
    /// Caps purchases per customer; the mean is the midpoint of the range.
    pub max_purchases: usize,
    /// Dirichlet concentration of customer genre mixtures; small values
    /// give customers one or two dominant genres.
    pub genre_concentration: f64,
    /// Within a genre, book weight falls off as `rank^-exponent`.
    pub popularity_exponent: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            customers: 200,
            books: 500,
            genres: 4,
            words_per_genre: 40,
            min_title_words: 2,
            max_title_words: 6,
            min_purchases: 2,
            max_purchases: 10,
            genre_concentration: 0.1,
            popularity_exponent: 1.5,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.customers == 0 || self.genres == 0 || self.words_per_genre == 0 {
            return bad("customers, genres and words_per_genre must be positive");
        }
        if self.books < self.genres {
            return bad("need at least one book per genre");
        }
        if self.min_title_words == 0 || self.min_title_words > self.max_title_words {
            return bad("title length range is empty");
        }
        if self.min_purchases == 0 || self.min_purchases > self.max_purchases {
            return bad("purchase range is empty");
        }
        if !(self.genre_concentration > 0.0 && self.genre_concentration.is_finite()) {
            return bad("genre_concentration must be positive");
        }
        if !(self.popularity_exponent >= 0.0 && self.popularity_exponent.is_finite()) {
            return bad("popularity_exponent must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub transactions: Vec<TransactionRecord>,
    pub catalog: Vec<BookCatalogEntry>,
    pub profiles: Vec<CustomerProfileRecord>,
    /// Planted genre of each catalog entry.
    pub book_genres: Vec<usize>,
    /// Planted genre mixture of each customer.
    pub mixtures: Vec<Vec<f64>>,
}

fn genre_name(g: usize) -> String {
    GENRE_NAMES
        .get(g)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("genre{g}"))
}

fn genre_word(g: usize, j: usize) -> String {
    match GENRE_NAMES.get(g) {
        Some(name) => format!("{}{j}", &name[..4]),
        None => format!("gen{g}w{j}"),
    }
}

fn id(prefix: char, i: usize, count: usize) -> String {
    let width = count.to_string().len();
    format!("{prefix}{:0width$}", i + 1)
}

pub fn generate(params: &SynthParams) -> Result<SyntheticData, SynthError> {
    params.validate()?;
    let mut rng = seeded(derive_seed(params.seed, "synth"));
    let g_count = params.genres;

    // catalog: books spread evenly over genres
    let mut catalog = Vec::with_capacity(params.books);
    let mut book_genres = Vec::with_capacity(params.books);
    for b in 0..params.books {
        let g = b % g_count;
        let len = rng.random_range(params.min_title_words..=params.max_title_words);
        let words: Vec<String> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < SHARED_WORD_RATE {
                    SHARED_WORDS[rng.random_range(0..SHARED_WORDS.len())].to_string()
                } else {
                    genre_word(g, rng.random_range(0..params.words_per_genre))
                }
            })
            .collect();
        catalog.push(BookCatalogEntry {
            book_id: id('b', b, params.books),
            title: words.join(" "),
            book_type: genre_name(g),
            title_tokens: words,
        });
        book_genres.push(g);
    }

    // per-genre popularity weights from a shuffled rank order
    let mut genre_books: Vec<Vec<usize>> = vec![Vec::new(); g_count];
    for (b, &g) in book_genres.iter().enumerate() {
        genre_books[g].push(b);
    }
    let mut genre_samplers = Vec::with_capacity(g_count);
    for books in &genre_books {
        let mut ranks: Vec<usize> = (1..=books.len()).collect();
        ranks.shuffle(&mut rng);
        let weights: Vec<f64> = ranks
            .iter()
            .map(|&r| (r as f64).powf(-params.popularity_exponent))
            .collect();
        genre_samplers.push(WeightedIndex::new(&weights).expect("positive weights"));
    }

    let gamma = Gamma::new(params.genre_concentration, 1.0).expect("validated shape");
    let mut transactions = Vec::new();
    let mut profiles = Vec::with_capacity(params.customers);
    let mut mixtures = Vec::with_capacity(params.customers);
    for c in 0..params.customers {
        let customer_id = id('c', c, params.customers);
        let raw: Vec<f64> = (0..g_count).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = raw.iter().sum();
        let mixture: Vec<f64> = if total > 0.0 {
            raw.iter().map(|x| x / total).collect()
        } else {
            vec![1.0 / g_count as f64; g_count]
        };
        let genre_pick = WeightedIndex::new(&mixture).expect("normalized mixture");

        let n = rng.random_range(params.min_purchases..=params.max_purchases);
        let mut bought = BTreeSet::new();
        let mut t = START_TIME + rng.random_range(0..365) * DAY;
        for _ in 0..n {
            let mut pick = None;
            for _ in 0..20 {
                let g = genre_pick.sample(&mut rng);
                let b = genre_books[g][genre_samplers[g].sample(&mut rng)];
                if !bought.contains(&b) {
                    pick = Some(b);
                    break;
                }
            }
            let Some(b) = pick else { continue };
            bought.insert(b);
            t += rng.random_range(1..=30) * DAY + rng.random_range(0..DAY);
            transactions.push(TransactionRecord {
                customer_id: customer_id.clone(),
                book_id: catalog[b].book_id.clone(),
                timestamp: t,
            });
        }

        let dominant = mixture
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(g, _)| g)
            .unwrap_or(0);
        let lean = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
            if rng.random::<f64>() < 0.7 {
                dominant % n
            } else {
                rng.random_range(0..n)
            }
        };
        let card = lean(&mut rng, CARD_TYPES.len());
        let contact = lean(&mut rng, CONTACTS.len());
        let age = (rng.random::<f64>() >= 0.05).then(|| 18 + 12 * (dominant as u32 % 5) + rng.random_range(0..15));
        let female = rng.random::<f64>() < if dominant % 2 == 0 { 0.7 } else { 0.3 };
        profiles.push(CustomerProfileRecord {
            customer_id,
            card_type: Some(CARD_TYPES[card].to_string()),
            age,
            gender: if female { Gender::Female } else { Gender::Male },
            contact: Some(CONTACTS[contact].to_string()),
        });
        mixtures.push(mixture);
    }

    Ok(SyntheticData {
        transactions,
        catalog,
        profiles,
        book_genres,
        mixtures,
    })
}

impl SyntheticData {
    pub fn mean_purchases(&self) -> f64 {
        self.transactions.len() as f64 / self.profiles.len().max(1) as f64
    }

    /// Writes the three input tables and a `config.json` that points at
    /// them, so the directory can be handed straight to `train`.
    pub fn write_to(&self, dir: &Path, seed: u64) -> Result<Vec<PathBuf>, SynthError> {
        let io_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let config = PipelineConfig {
            paths: PathsConfig::default(),
            seed,
            ..PipelineConfig::default()
        };
        let p = &config.paths;
        let mut written = Vec::new();
        let mut emit = |name: &Path, f: &dyn Fn(&mut dyn Write) -> io::Result<()>| -> Result<(), SynthError> {
            let path = dir.join(name);
            let file = File::create(&path).map_err(io_err(&path))?;
            let mut out = BufWriter::new(file);
            f(&mut out).and_then(|_| out.flush()).map_err(io_err(&path))?;
            written.push(path);
            Ok(())
        };
        emit(&p.transactions, &|w| write_transactions(w, &self.transactions))?;
        emit(&p.catalog, &|w| write_catalog(w, &self.catalog))?;
        emit(&p.profiles, &|w| write_profiles(w, &self.profiles))?;
        emit(Path::new("config.json"), &|w| {
            serde_json::to_writer_pretty(&mut *w, &config).map_err(io::Error::other)?;
            writeln!(w)
        })?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthParams {
        SynthParams {
            customers: 30,
            books: 40,
            genres: 3,
            ..SynthParams::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthParams { seed: 8, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn sparsity_and_shape() {
        let d = generate(&SynthParams::default()).unwrap();
        assert_eq!(d.catalog.len(), 500);
        assert_eq!(d.profiles.len(), 200);
        assert!(d.mean_purchases() <= 10.0);
        let mut per_customer = std::collections::BTreeMap::new();
        for t in &d.transactions {
            *per_customer.entry(&t.customer_id).or_insert(0) += 1;
        }
        assert!(per_customer.values().all(|&n| n <= 10));
        let types: BTreeSet<&str> = d.catalog.iter().map(|b| b.book_type.as_str()).collect();
        assert_eq!(types.len(), 4);
    }

    #[test]
    fn purchases_follow_mixtures() {
        let d = generate(&SynthParams::default()).unwrap();
        let genre_of: std::collections::BTreeMap<&str, usize> = d
            .catalog
            .iter()
            .zip(&d.book_genres)
            .map(|(b, &g)| (b.book_id.as_str(), g))
            .collect();
        let index: std::collections::BTreeMap<&str, usize> = d
            .profiles
            .iter()
            .enumerate()
            .map(|(i, p)| (p.customer_id.as_str(), i))
            .collect();
        let mass: f64 = d
            .transactions
            .iter()
            .map(|t| d.mixtures[index[t.customer_id.as_str()]][genre_of[t.book_id.as_str()]])
            .sum::<f64>()
            / d.transactions.len() as f64;
        // uniform buying would average 1/G = 0.25
        assert!(mass > 0.5, "{mass}");
    }

    #[test]
    fn titles_tokenize_back() {
        let d = generate(&small()).unwrap();
        for b in &d.catalog {
            let toks = crate::ingest::tokenize_title(&b.title, Default::default()).unwrap();
            assert_eq!(toks, b.title_tokens);
        }
    }
}
