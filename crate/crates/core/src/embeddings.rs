//! Word vectors for book-type tokens.
//!
//! Tables come either from a pretrained file in the word2vec text format or
//! from a small CBOW / skip-gram trainer. The trainer maximizes
//! `Σ log P(w | context)` where `P` is a softmax over the vocabulary of
//! output-vector · context-representation scores; the negative-sampling
//! objective is offered for larger toy corpora.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{cosine, dot, Matrix};
use crate::rng::seeded;

/// Largest vocabulary the full-softmax objective is allowed on.
pub const MAX_SOFTMAX_VOCAB: usize = 10_000;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("header declares {declared} words but {found} were read")]
    CountMismatch { declared: usize, found: usize },
    #[error("token {0:?} is not in the table")]
    UnknownToken(String),
    #[error("token {0:?} has a zero vector; cosine similarity is undefined")]
    ZeroVector(String),
    #[error("vector for {token:?} has {found} components, table dimension is {expected}")]
    WrongDimension {
        token: String,
        expected: usize,
        found: usize,
    },
    #[error("vector for {0:?} contains a non-finite component")]
    NonFinite(String),
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
    #[error("training corpus has no tokens")]
    EmptyVocabulary,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    Cbow,
    Skipgram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Objective {
    FullSoftmax,
    NegativeSampling { negatives: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub dim: usize,
    pub mode: EmbedMode,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 50,
            mode: EmbedMode::Cbow,
            window: 2,
            epochs: 10,
            learning_rate: 0.05,
            objective: Objective::FullSoftmax,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if let Objective::NegativeSampling { negatives: 0 } = self.objective {
            return bad("negative sampling needs at least one negative");
        }
        Ok(())
    }
}

/// Token → vector map with a fixed dimension.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    context_vectors: Option<BTreeMap<String, Vec<f64>>>,
    misses: AtomicU64,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        EmbeddingTable {
            dim: self.dim,
            vectors: self.vectors.clone(),
            context_vectors: self.context_vectors.clone(),
            misses: AtomicU64::new(self.misses()),
        }
    }
}

/// Miss counters are diagnostics and do not take part in equality.
impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.vectors == other.vectors && self.context_vectors == other.context_vectors
    }
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
            context_vectors: None,
            misses: AtomicU64::new(0),
        }
    }

    pub fn from_vectors(dim: usize, vectors: BTreeMap<String, Vec<f64>>) -> Result<Self, EmbeddingError> {
        let mut table = EmbeddingTable::new(dim);
        for (token, v) in vectors {
            table.insert(token, v)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, token: String, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::WrongDimension {
                token,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if !vector.iter().all(|x| x.is_finite()) {
            return Err(EmbeddingError::NonFinite(token));
        }
        self.vectors.insert(token, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn vectors(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.vectors
    }

    pub fn context_vectors(&self) -> Option<&BTreeMap<String, Vec<f64>>> {
        self.context_vectors.as_ref()
    }

    /// Drops the training-only output vectors.
    pub fn without_context(mut self) -> Self {
        self.context_vectors = None;
        self
    }

    /// Number of [`vector_for_type`](Self::vector_for_type) lookups that missed.
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Exact-match lookup. A miss yields the zero vector and bumps the miss
    /// counter.
    pub fn vector_for_type(&self, book_type: &str) -> Vec<f64> {
        match self.vectors.get(book_type) {
            Some(v) => v.clone(),
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                vec![0.0; self.dim]
            }
        }
    }

    /// Top-`k` tokens by cosine similarity to `token`, excluding itself.
    /// Zero vectors among the candidates score 0.
    pub fn nearest_neighbors(&self, token: &str, k: usize) -> Result<Vec<(String, f64)>, EmbeddingError> {
        let query = self
            .get(token)
            .ok_or_else(|| EmbeddingError::UnknownToken(token.to_string()))?;
        if query.iter().all(|&x| x == 0.0) {
            return Err(EmbeddingError::ZeroVector(token.to_string()));
        }
        let mut scored: Vec<(String, f64)> = self
            .vectors
            .iter()
            .filter(|(t, _)| t.as_str() != token)
            .map(|(t, v)| (t.clone(), cosine(query, v).unwrap_or(0.0)))
            .collect();
        // BTreeMap iteration is already lexicographic, so a stable sort keeps the tie order
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        Ok(scored)
    }

    /// Reads the word2vec text format: a `<count> <dim>` header, then one
    /// `<word> <v1> ... <v_dim>` line per word.
    pub fn load_pretrained<R: BufRead>(source: R) -> Result<Self, EmbeddingError> {
        let mut lines = source.lines();
        let header = lines.next().transpose()?.ok_or(EmbeddingError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let header = header.trim_start_matches('\u{feff}');
        let parts: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (declared, dim) = match parts.as_slice() {
            [n, d] => match (parse_usize(n), parse_usize(d)) {
                (Some(n), Some(d)) if d > 0 => (n, d),
                _ => {
                    return Err(EmbeddingError::Format {
                        line: 1,
                        message: format!("bad header {header:?}"),
                    })
                }
            },
            _ => {
                return Err(EmbeddingError::Format {
                    line: 1,
                    message: format!("bad header {header:?}"),
                })
            }
        };
        let mut table = EmbeddingTable::new(dim);
        let mut found = 0;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<&str> = parts.collect();
            if values.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: line_no,
                    expected: dim,
                    found: values.len(),
                });
            }
            let vector = values
                .iter()
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| EmbeddingError::Format {
                    line: line_no,
                    message: "unparsable or non-finite component".into(),
                })?;
            if table.vectors.contains_key(word) {
                return Err(EmbeddingError::DuplicateWord {
                    line: line_no,
                    word: word.to_string(),
                });
            }
            table.vectors.insert(word.to_string(), vector);
            found += 1;
        }
        if found != declared {
            return Err(EmbeddingError::CountMismatch { declared, found });
        }
        Ok(table)
    }

    /// Writes the word2vec text format with six significant digits per component.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.vectors.len(), self.dim)?;
        for (word, v) in &self.vectors {
            write!(out, "{word}")?;
            for x in v {
                write!(out, " {}", format_significant(*x, 6))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

/// log-softmax probability of `target` given context representation `x`,
/// with scores `output[w] · x`.
pub fn softmax_log_prob(output: &Matrix, x: &[f64], target: usize) -> f64 {
    let scores: Vec<f64> = (0..output.rows()).map(|w| dot(output.row(w), x)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores[target] - log_z
}

/// Softmax distribution `P(w | x)` over every row of `output`.
pub fn softmax_probs(output: &Matrix, x: &[f64]) -> Vec<f64> {
    let scores: Vec<f64> = (0..output.rows()).map(|w| dot(output.row(w), x)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Gradient of [`softmax_log_prob`] with respect to every output vector and
/// to `x`. Returns `(log_prob, d/d output, d/d x)`.
pub fn softmax_log_prob_grad(output: &Matrix, x: &[f64], target: usize) -> (f64, Matrix, Vec<f64>) {
    let probs = softmax_probs(output, x);
    let dim = x.len();
    let mut grad_out = Matrix::zeros(output.rows(), dim);
    let mut grad_x = output.row(target).to_vec();
    for (w, &p) in probs.iter().enumerate() {
        let coeff = if w == target { 1.0 - p } else { -p };
        for (g, xi) in grad_out.row_mut(w).iter_mut().zip(x) {
            *g = coeff * xi;
        }
        for (gx, o) in grad_x.iter_mut().zip(output.row(w)) {
            *gx -= p * o;
        }
    }
    (probs[target].ln(), grad_out, grad_x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Seeded CBOW / skip-gram trainer.
pub struct Word2Vec {
    config: EmbedConfig,
    vocab: Vec<String>,
    corpus: Vec<Vec<usize>>,
    input: Matrix,
    output: Matrix,
    noise: Option<WeightedIndex<f64>>,
    rng: ChaCha8Rng,
    epochs_run: usize,
}

impl Word2Vec {
    pub fn new(corpus: &[Vec<String>], config: &EmbedConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        let vocab: Vec<String> = corpus
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<String>>()
            .into_iter()
            .collect();
        if vocab.is_empty() {
            return Err(EmbeddingError::EmptyVocabulary);
        }
        if config.objective == Objective::FullSoftmax && vocab.len() > MAX_SOFTMAX_VOCAB {
            return Err(EmbeddingError::InvalidConfig(format!(
                "full softmax is limited to {MAX_SOFTMAX_VOCAB} words, vocabulary has {}",
                vocab.len()
            )));
        }
        let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let ids: Vec<Vec<usize>> = corpus
            .iter()
            .map(|s| s.iter().map(|w| index[w.as_str()]).collect())
            .collect();

        let mut rng = seeded(config.seed);
        let bound = 0.5 / config.dim as f64;
        let mut init = |rows: usize| {
            let data = (0..rows * config.dim)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Matrix::from_vec(rows, config.dim, data).expect("sized")
        };
        let input = init(vocab.len());
        let output = init(vocab.len());

        let noise = match config.objective {
            Objective::FullSoftmax => None,
            Objective::NegativeSampling { .. } => {
                let mut counts = vec![0.0; vocab.len()];
                for &w in ids.iter().flatten() {
                    counts[w] += 1.0;
                }
                let weights: Vec<f64> = counts.iter().map(|c: &f64| c.powf(0.75)).collect();
                Some(WeightedIndex::new(weights).expect("every vocabulary word occurs"))
            }
        };

        Ok(Word2Vec {
            config: config.clone(),
            vocab,
            corpus: ids,
            input,
            output,
            noise,
            rng,
            epochs_run: 0,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn input_vectors(&self) -> &Matrix {
        &self.input
    }

    pub fn output_vectors(&self) -> &Matrix {
        &self.output
    }

    fn context(&self, sentence: &[usize], pos: usize) -> Vec<usize> {
        let lo = pos.saturating_sub(self.config.window);
        let hi = (pos + self.config.window + 1).min(sentence.len());
        (lo..hi).filter(|&j| j != pos).map(|j| sentence[j]).collect()
    }

    fn mean_input(&self, context: &[usize]) -> Vec<f64> {
        let mut x = vec![0.0; self.config.dim];
        for &c in context {
            for (xi, v) in x.iter_mut().zip(self.input.row(c)) {
                *xi += v;
            }
        }
        let n = context.len() as f64;
        x.iter_mut().for_each(|xi| *xi /= n);
        x
    }

    /// Full-softmax log-likelihood of the corpus under the current vectors:
    /// `Σ log P(w | mean context)` for CBOW, `Σ Σ_j log P(w | w_j)` for skip-gram.
    pub fn objective(&self) -> f64 {
        let mut total = 0.0;
        for sentence in &self.corpus {
            for (pos, &w) in sentence.iter().enumerate() {
                let ctx = self.context(sentence, pos);
                if ctx.is_empty() {
                    continue;
                }
                match self.config.mode {
                    EmbedMode::Cbow => {
                        total += softmax_log_prob(&self.output, &self.mean_input(&ctx), w);
                    }
                    EmbedMode::Skipgram => {
                        for &c in &ctx {
                            total += softmax_log_prob(&self.output, self.input.row(c), w);
                        }
                    }
                }
            }
        }
        total
    }

    /// One gradient-ascent step for predicting `target` from context `x`.
    /// Updates output vectors in place and returns the gradient for `x`.
    fn step(&mut self, x: &[f64], target: usize) -> Vec<f64> {
        let lr = self.config.learning_rate;
        match self.config.objective {
            Objective::FullSoftmax => {
                let (_, grad_out, grad_x) = softmax_log_prob_grad(&self.output, x, target);
                for w in 0..self.output.rows() {
                    for (o, g) in self.output.row_mut(w).iter_mut().zip(grad_out.row(w)) {
                        *o += lr * g;
                    }
                }
                grad_x
            }
            Objective::NegativeSampling { negatives } => {
                let mut grad_x = vec![0.0; x.len()];
                let noise = self.noise.as_ref().expect("noise table built for negative sampling");
                let mut samples = Vec::with_capacity(negatives + 1);
                samples.push((target, 1.0));
                while samples.len() < negatives + 1 {
                    let n = noise.sample(&mut self.rng);
                    if n != target || self.vocab.len() == 1 {
                        samples.push((n, 0.0));
                    }
                }
                for (w, label) in samples {
                    let g = label - sigmoid(dot(self.output.row(w), x));
                    for (gx, o) in grad_x.iter_mut().zip(self.output.row(w)) {
                        *gx += g * o;
                    }
                    for (o, xi) in self.output.row_mut(w).iter_mut().zip(x) {
                        *o += lr * g * xi;
                    }
                }
                grad_x
            }
        }
    }

    pub fn train_epoch(&mut self) {
        let mut order: Vec<usize> = (0..self.corpus.len()).collect();
        order.shuffle(&mut self.rng);
        let lr = self.config.learning_rate;
        for s in order {
            let sentence = self.corpus[s].clone();
            for (pos, &w) in sentence.iter().enumerate() {
                let ctx = self.context(&sentence, pos);
                if ctx.is_empty() {
                    continue;
                }
                match self.config.mode {
                    EmbedMode::Cbow => {
                        let x = self.mean_input(&ctx);
                        let grad_x = self.step(&x, w);
                        let scale = lr / ctx.len() as f64;
                        for &c in &ctx {
                            for (v, g) in self.input.row_mut(c).iter_mut().zip(&grad_x) {
                                *v += scale * g;
                            }
                        }
                    }
                    EmbedMode::Skipgram => {
                        for &c in &ctx {
                            let x = self.input.row(c).to_vec();
                            let grad_x = self.step(&x, w);
                            for (v, g) in self.input.row_mut(c).iter_mut().zip(&grad_x) {
                                *v += lr * g;
                            }
                        }
                    }
                }
            }
        }
        self.epochs_run += 1;
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    pub fn table(&self) -> EmbeddingTable {
        let rows = |m: &Matrix| -> BTreeMap<String, Vec<f64>> {
            self.vocab
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), m.row(i).to_vec()))
                .collect()
        };
        EmbeddingTable {
            dim: self.config.dim,
            vectors: rows(&self.input),
            context_vectors: Some(rows(&self.output)),
            misses: AtomicU64::new(0),
        }
    }
}

pub fn train_embeddings(corpus: &[Vec<String>], config: &EmbedConfig) -> Result<EmbeddingTable, EmbeddingError> {
    let mut trainer = Word2Vec::new(corpus, config)?;
    for _ in 0..config.epochs {
        trainer.train_epoch();
    }
    let table = trainer.table();
    if table.vectors.values().flatten().any(|x| !x.is_finite()) {
        return Err(EmbeddingError::InvalidConfig(
            "training diverged; lower the learning rate".into(),
        ));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|s| s.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn load_small_table() {
        let t = EmbeddingTable::load_pretrained("2 3\napple 1 0 0\npear 0 1 0".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("pear").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn load_rejects_count_mismatch() {
        let e = EmbeddingTable::load_pretrained("3 3\napple 1 0 0\npear 0 1 0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, EmbeddingError::CountMismatch { declared: 3, found: 2 }));
    }

    #[test]
    fn load_names_short_line() {
        let e = EmbeddingTable::load_pretrained("2 3\napple 1 0 0\npear 0 1\n".as_bytes()).unwrap_err();
        assert!(matches!(
            e,
            EmbeddingError::DimensionMismatch {
                line: 3,
                expected: 3,
                found: 2
            }
        ));
    }

    #[test]
    fn load_rejects_duplicates() {
        let e = EmbeddingTable::load_pretrained("2 1\na 1\na 2\n".as_bytes()).unwrap_err();
        assert!(matches!(e, EmbeddingError::DuplicateWord { line: 3, .. }));
    }

    #[test]
    fn write_then_load() {
        let mut t = EmbeddingTable::new(2);
        t.insert("x".into(), vec![0.123456789, -2.0]).unwrap();
        t.insert("y".into(), vec![1.5e-7, 123456789.0]).unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "2 2\nx 0.123457 -2\ny 1.5e-7 1.23457e8\n");
        let back = EmbeddingTable::load_pretrained(buf.as_slice()).unwrap();
        assert_eq!(back.get("x").unwrap(), &[0.123457, -2.0]);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0, 6), "0");
        assert_eq!(format_significant(9.9999996, 6), "10");
        assert_eq!(format_significant(999999.6, 6), "1e6");
        assert_eq!(format_significant(0.0001, 6), "0.0001");
        assert_eq!(format_significant(0.00001234, 6), "1.234e-5");
    }

    #[test]
    fn lookup_and_miss_counter() {
        let t = EmbeddingTable::load_pretrained("1 2\nscience 0.5 -0.5\n".as_bytes()).unwrap();
        assert_eq!(t.vector_for_type("science"), vec![0.5, -0.5]);
        assert_eq!(t.vector_for_type("science"), t.vector_for_type("science"));
        assert_eq!(t.misses(), 0);
        assert_eq!(t.vector_for_type("poetry"), vec![0.0, 0.0]);
        assert_eq!(t.misses(), 1);
    }

    #[test]
    fn neighbors_by_cosine() {
        let t = EmbeddingTable::load_pretrained("3 2\na 1 0\nb 1 0\nc 0 1\n".as_bytes()).unwrap();
        let n = t.nearest_neighbors("a", 2).unwrap();
        assert_eq!(n, vec![("b".to_string(), 1.0), ("c".to_string(), 0.0)]);
        assert_eq!(t.nearest_neighbors("a", 10).unwrap().len(), 2);
        assert!(matches!(
            t.nearest_neighbors("z", 1),
            Err(EmbeddingError::UnknownToken(_))
        ));
        let z = EmbeddingTable::load_pretrained("2 2\na 0 0\nb 1 0\n".as_bytes()).unwrap();
        assert!(matches!(
            z.nearest_neighbors("a", 1),
            Err(EmbeddingError::ZeroVector(_))
        ));
    }

    #[test]
    fn neighbor_ties_are_lexicographic() {
        let t = EmbeddingTable::load_pretrained("4 2\nq 1 0\nz 2 0\nb 3 0\nm 0 1\n".as_bytes()).unwrap();
        let n = t.nearest_neighbors("q", 3).unwrap();
        let names: Vec<&str> = n.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(names, ["b", "z", "m"]);
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn softmax_normalizes() {
        let out = random_matrix(5, 2, 3);
        for seed in 0..10 {
            let x = random_matrix(1, 2, 100 + seed);
            let s: f64 = softmax_probs(&out, x.row(0)).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            // skip-gram conditions on a single word vector
            let s: f64 = softmax_probs(&out, out.row(seed as usize % 5)).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let h = 1e-6;
        for seed in 0..5 {
            let out = random_matrix(5, 2, seed);
            let x = random_matrix(1, 2, 50 + seed).row(0).to_vec();
            let target = seed as usize % 5;
            let (_, g_out, g_x) = softmax_log_prob_grad(&out, &x, target);
            for w in 0..5 {
                for d in 0..2 {
                    let mut plus = out.clone();
                    let mut minus = out.clone();
                    plus.set(w, d, out.get(w, d) + h);
                    minus.set(w, d, out.get(w, d) - h);
                    let fd = (softmax_log_prob(&plus, &x, target) - softmax_log_prob(&minus, &x, target)) / (2.0 * h);
                    assert!(
                        rel_err(fd, g_out.get(w, d)) < 1e-4,
                        "out[{w}][{d}]: {fd} vs {}",
                        g_out.get(w, d)
                    );
                }
            }
            for d in 0..2 {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[d] += h;
                minus[d] -= h;
                let fd = (softmax_log_prob(&out, &plus, target) - softmax_log_prob(&out, &minus, target)) / (2.0 * h);
                assert!(rel_err(fd, g_x[d]) < 1e-4);
            }
        }
    }

    #[test]
    fn one_epoch_raises_objective() {
        let corpus = sentences(&["a b"]);
        for mode in [EmbedMode::Cbow, EmbedMode::Skipgram] {
            let cfg = EmbedConfig {
                dim: 4,
                mode,
                window: 1,
                epochs: 1,
                learning_rate: 0.1,
                objective: Objective::FullSoftmax,
                seed: 3,
            };
            let mut w2v = Word2Vec::new(&corpus, &cfg).unwrap();
            let before = w2v.objective();
            w2v.train_epoch();
            assert!(w2v.objective() > before, "{mode:?}");
        }
    }

    fn shared_context_corpus() -> Vec<Vec<String>> {
        let mut lines = Vec::new();
        for adj in ["small", "happy", "lazy", "old"] {
            lines.push(format!("the {adj} cat sleeps on the sofa"));
            lines.push(format!("the {adj} dog sleeps on the sofa"));
            lines.push(format!("a heavy rock lies in the {adj} river"));
        }
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        sentences(&refs)
    }

    #[test]
    fn shared_contexts_give_similar_vectors() {
        let corpus = shared_context_corpus();
        let objectives = [Objective::FullSoftmax, Objective::NegativeSampling { negatives: 5 }];
        for mode in [EmbedMode::Cbow, EmbedMode::Skipgram] {
            for objective in objectives {
                let cfg = EmbedConfig {
                    dim: 10,
                    mode,
                    window: 2,
                    epochs: 200,
                    learning_rate: 0.05,
                    objective,
                    seed: 11,
                };
                let t = train_embeddings(&corpus, &cfg).unwrap();
                let cat = t.get("cat").unwrap();
                let dog = cosine(cat, t.get("dog").unwrap()).unwrap();
                let rock = cosine(cat, t.get("rock").unwrap()).unwrap();
                assert!(dog > rock, "{mode:?} {objective:?}: dog {dog} rock {rock}");
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = shared_context_corpus();
        let cfg = EmbedConfig {
            dim: 6,
            epochs: 3,
            seed: 5,
            ..EmbedConfig::default()
        };
        assert_eq!(
            train_embeddings(&corpus, &cfg).unwrap(),
            train_embeddings(&corpus, &cfg).unwrap()
        );
    }

    #[test]
    fn empty_vocabulary_rejected() {
        let cfg = EmbedConfig::default();
        assert!(matches!(
            train_embeddings(&[vec![]], &cfg),
            Err(EmbeddingError::EmptyVocabulary)
        ));
        let bad = EmbedConfig { window: 0, ..cfg };
        assert!(train_embeddings(&sentences(&["a b"]), &bad).is_err());
    }
}
