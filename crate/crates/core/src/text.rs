//! Tokenization, vocabulary masking and cosine-normalized tf-idf vectors.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};
use crate::prevalence::BinaryLabelVector;

/// Version tag of the bundled English stop list (318 words).
pub const STOP_LIST_VERSION: &str = "en-318-v1";

static STOP_WORDS: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| include_str!("stopwords_en.txt").lines().filter(|l| !l.is_empty()).collect());

static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}+").unwrap());

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.contains(token)
}

/// Lowercases, replaces Unicode punctuation with whitespace, splits on
/// whitespace and drops stop words.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    PUNCTUATION
        .replace_all(&lowered, " ")
        .split_whitespace()
        .filter(|t| !is_stop_word(t))
        .map(str::to_owned)
        .collect()
}

/// Raw labelled documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub documents: Vec<String>,
    pub labels: BinaryLabelVector,
}

impl Corpus {
    pub fn new(name: impl Into<String>, documents: Vec<String>, labels: BinaryLabelVector) -> Result<Self> {
        if documents.len() != labels.len() {
            return Err(QuantError::DimensionMismatch(format!(
                "{} documents but {} labels",
                documents.len(),
                labels.len()
            )));
        }
        Ok(Self { name: name.into(), documents, labels })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Terms kept after masking, with their training document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyParts")]
pub struct Vocabulary {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    train_size: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

#[derive(Deserialize)]
struct VocabularyParts {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    train_size: usize,
}

impl TryFrom<VocabularyParts> for Vocabulary {
    type Error = QuantError;

    fn try_from(p: VocabularyParts) -> Result<Self> {
        Vocabulary::from_parts(p.terms, p.document_frequency, p.train_size)
    }
}

impl Vocabulary {
    /// Assembles a vocabulary from its stored parts.
    pub fn from_parts(terms: Vec<String>, document_frequency: Vec<usize>, train_size: usize) -> Result<Self> {
        if terms.len() != document_frequency.len() {
            return Err(QuantError::DimensionMismatch("terms vs document frequencies".into()));
        }
        if terms.is_empty() {
            return Err(QuantError::EmptyVocabulary);
        }
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Self { terms, document_frequency, train_size, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn document_frequency(&self, id: u32) -> usize {
        self.document_frequency[id as usize]
    }

    pub fn train_size(&self) -> usize {
        self.train_size
    }

    pub fn idf(&self, id: u32) -> f64 {
        (self.train_size as f64 / self.document_frequency[id as usize] as f64).ln()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Keeps the terms whose total occurrence count over the training documents
/// is at least `min_count`. Term ids follow lexicographic order.
pub fn build_vocabulary(documents: &[String], min_count: usize) -> Result<Vocabulary> {
    if documents.is_empty() {
        return Err(QuantError::EmptySample);
    }
    let mut occurrences: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for doc in documents {
        let tokens = tokenize(doc);
        let mut seen = HashSet::new();
        for t in tokens {
            let first = seen.insert(t.clone());
            let e = occurrences.entry(t).or_default();
            e.0 += 1;
            if first {
                e.1 += 1;
            }
        }
    }
    let (terms, dfs): (Vec<_>, Vec<_>) = occurrences
        .into_iter()
        .filter(|(_, (count, _))| *count >= min_count)
        .map(|(t, (_, df))| (t, df))
        .unzip();
    Vocabulary::from_parts(terms, dfs, documents.len())
}

/// Sparse rows of `(feature id, weight)` sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDocMatrix {
    rows: Vec<Vec<(u32, f64)>>,
    n_features: usize,
}

impl SparseDocMatrix {
    pub fn new(rows: Vec<Vec<(u32, f64)>>, n_features: usize) -> Result<Self> {
        for row in &rows {
            if row.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(QuantError::InvalidArgument("row ids must be strictly increasing".into()));
            }
            if row.last().is_some_and(|&(id, _)| id as usize >= n_features) {
                return Err(QuantError::InvalidArgument("feature id out of range".into()));
            }
        }
        Ok(Self { rows, n_features })
    }

    /// Dense rows, zeros dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_features = rows.first().map_or(0, Vec::len);
        let rows = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, &v)| (i as u32, v))
                    .collect()
            })
            .collect();
        Self { rows, n_features }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(u32, f64)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            n_features: self.n_features,
        }
    }

    pub fn dot(&self, i: usize, w: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(f, v)| w[f as usize] * v).sum()
    }
}

fn term_counts(text: &str, vocab: &Vocabulary) -> Vec<(u32, f64)> {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for t in tokenize(text) {
        if let Some(id) = vocab.id(&t) {
            *counts.entry(id).or_default() += 1.0;
        }
    }
    counts.into_iter().collect()
}

/// Sublinear term frequency: `1 + ln(c)` for `c >= 1`.
pub fn tf(count: f64) -> f64 {
    if count > 0.0 {
        1.0 + count.ln()
    } else {
        0.0
    }
}

/// Raw in-vocabulary term counts per document.
pub fn count_matrix(documents: &[String], vocab: &Vocabulary) -> SparseDocMatrix {
    let rows = documents.par_iter().map(|d| term_counts(d, vocab)).collect();
    SparseDocMatrix { rows, n_features: vocab.len() }
}

/// tf-idf weights, each row scaled to unit Euclidean norm. Out-of-vocabulary
/// terms are ignored; zero-weight features are dropped.
pub fn vectorize(documents: &[String], vocab: &Vocabulary) -> SparseDocMatrix {
    let rows = documents
        .par_iter()
        .map(|d| tfidf_row(term_counts(d, vocab), vocab))
        .collect();
    SparseDocMatrix { rows, n_features: vocab.len() }
}

fn tfidf_row(counts: Vec<(u32, f64)>, vocab: &Vocabulary) -> Vec<(u32, f64)> {
    let mut row: Vec<(u32, f64)> = counts
        .into_iter()
        .map(|(id, c)| (id, tf(c) * vocab.idf(id)))
        .filter(|&(_, w)| w != 0.0)
        .collect();
    let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter_mut().for_each(|(_, w)| *w /= norm);
    }
    row
}

/// Both feature views of a labelled document set: tf-idf for the linear
/// learners and raw counts for multinomial naive Bayes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub tfidf: SparseDocMatrix,
    pub counts: SparseDocMatrix,
    pub labels: BinaryLabelVector,
}

impl FeatureSet {
    pub fn from_corpus(corpus: &Corpus, vocab: &Vocabulary) -> Self {
        Self {
            tfidf: vectorize(&corpus.documents, vocab),
            counts: count_matrix(&corpus.documents, vocab),
            labels: corpus.labels.clone(),
        }
    }

    /// Uses the same matrix for both views; handy for synthetic dense data.
    pub fn from_matrix(x: SparseDocMatrix, labels: BinaryLabelVector) -> Result<Self> {
        if x.n_rows() != labels.len() {
            return Err(QuantError::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.n_rows(),
                labels.len()
            )));
        }
        Ok(Self { tfidf: x.clone(), counts: x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            tfidf: self.tfidf.select_rows(indices),
            counts: self.counts.select_rows(indices),
            labels: self.labels.select(indices)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prevalence::Label;
    use approx::assert_abs_diff_eq;

    fn docs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("Great movie!!"), vec!["great", "movie"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("The THE the").is_empty());
        assert_eq!(tokenize("¡Hola, señor…» «ÉTÉ"), vec!["hola", "señor", "été"]);
    }

    #[test]
    fn stop_list_size() {
        assert_eq!(STOP_WORDS.len(), 318);
    }

    #[test]
    fn masking_boundary() {
        let corpus = docs(&["alpha alpha alpha", "alpha alpha beta", "beta beta beta"]);
        let v = build_vocabulary(&corpus, 5).unwrap();
        // alpha: 5 occurrences kept, beta: 4 dropped
        assert!(v.id("alpha").is_some());
        assert!(v.id("beta").is_none());
        assert_eq!(v.document_frequency(v.id("alpha").unwrap()), 2);
        assert_eq!(v.train_size(), 3);

        let all = build_vocabulary(&docs(&["one thing", "zebra the"]), 1).unwrap();
        // "one" is a stop word
        assert_eq!(all.terms(), &["thing".to_string(), "zebra".to_string()]);

        assert_eq!(build_vocabulary(&docs(&["the a of"]), 1), Err(QuantError::EmptyVocabulary));
    }

    #[test]
    fn tfidf_single_feature() {
        let v = Vocabulary::from_parts(vec!["film".into(), "plot".into()], vec![10, 100], 100).unwrap();
        assert_abs_diff_eq!(tf(1.0) * v.idf(0), 10f64.ln(), epsilon = 1e-12);
        let m = vectorize(&docs(&["film", "plot", "nothing here", "film film plot"]), &v);
        assert_eq!(m.row(0), &[(0, 1.0)]);
        // df = |L| gives idf 0
        assert!(m.row(1).is_empty());
        assert!(m.row(2).is_empty());
        assert_eq!(m.row(3).len(), 1);
    }

    #[test]
    fn rows_have_unit_norm() {
        let corpus = docs(&[
            "red green blue red",
            "green green yellow",
            "blue yellow yellow red",
            "purple",
        ]);
        let v = build_vocabulary(&corpus, 1).unwrap();
        let m = vectorize(&corpus, &v);
        for row in m.rows() {
            let n: f64 = row.iter().map(|(_, w)| w * w).sum();
            if !row.is_empty() {
                assert_abs_diff_eq!(n.sqrt(), 1.0, epsilon = 1e-9);
            }
            assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn vectorizing_unlabelled_data_does_not_touch_vocabulary() {
        let train = docs(&["cat dog", "dog bird", "cat cat fish"]);
        let test = docs(&["dog fish", "unknown words", "cat"]);
        let v = build_vocabulary(&train, 1).unwrap();
        let before = v.clone();
        let first = vectorize(&test, &v);
        let _ = vectorize(&train, &v);
        let second = vectorize(&test, &v);
        assert_eq!(first, second);
        assert_eq!(v, before);
    }

    #[test]
    fn word_order_is_irrelevant() {
        let v = build_vocabulary(&docs(&["a1 b2 c3 b2", "c3 d4"]), 1).unwrap();
        let m = vectorize(&docs(&["a1 b2 c3 b2", "b2 c3 b2 a1"]), &v);
        assert_eq!(m.row(0), m.row(1));
    }

    #[test]
    fn corpus_and_features() {
        let labels = BinaryLabelVector::new(vec![Label::Positive, Label::Negative]).unwrap();
        assert!(Corpus::new("x", docs(&["a"]), labels.clone()).is_err());
        let c = Corpus::new("x", docs(&["kiwi mango", "mango"]), labels).unwrap();
        let v = build_vocabulary(&c.documents, 1).unwrap();
        let f = FeatureSet::from_corpus(&c, &v);
        assert_eq!(f.counts.row(0), &[(0, 1.0), (1, 1.0)]);
        let s = f.subset(&[1]).unwrap();
        assert_eq!(s.labels.as_slice(), &[Label::Negative]);
    }
}
