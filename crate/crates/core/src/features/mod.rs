//! Tokenization, vocabularies and sparse document-term matrices.

mod fair;
mod importance;

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, GroupLabel};

pub use fair::{fair_weights, FairnessWeights};
pub use importance::{
    corpus_importance, group_importance, model_importance, ImportanceRanking, RankedTerm, Scope,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("no term reaches min_df = {0}")]
    EmptyVocabulary(usize),
    #[error("group {0} has no documents")]
    GroupAbsent(GroupLabel),
    #[error("vocabulary mismatch: model has {expected} terms, vocabulary has {actual}")]
    VocabMismatch { expected: usize, actual: usize },
    #[error("term `{0}` does not occur in either group")]
    TermAbsent(String),
    #[error("triplet file: {0}")]
    Triplets(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

pub fn bundled_stopwords() -> impl Iterator<Item = &'static str> {
    BUNDLED_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Serializable tokenizer settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    pub min_len: usize,
    pub remove_stopwords: bool,
    pub extra_stopwords: Vec<String>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            min_len: 2,
            remove_stopwords: true,
            extra_stopwords: Vec::new(),
        }
    }
}

/// Lowercases, splits on every non-alphabetic character and drops short
/// tokens and stopwords.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    min_len: usize,
    stopwords: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::from_config(&TokenizerConfig::default())
    }
}

impl Tokenizer {
    /// Keeps every alphabetic token, including single letters.
    pub fn plain() -> Self {
        Tokenizer {
            min_len: 1,
            stopwords: HashSet::new(),
        }
    }

    pub fn from_config(config: &TokenizerConfig) -> Self {
        let mut stopwords: HashSet<String> = if config.remove_stopwords {
            bundled_stopwords().map(str::to_string).collect()
        } else {
            HashSet::new()
        };
        stopwords.extend(config.extra_stopwords.iter().map(|s| s.to_lowercase()));
        Tokenizer {
            min_len: config.min_len.max(1),
            stopwords,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphabetic())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| t.chars().count() >= self.min_len && !self.stopwords.contains(t))
            .collect()
    }
}

/// Term to column index mapping with document frequencies.
///
/// Terms are ordered by descending document frequency, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    n_docs: usize,
    terms: Vec<String>,
    df: Vec<usize>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.df, r.n_docs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            n_docs: v.n_docs,
            terms: v.terms,
            df: v.df,
        }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, df: Vec<usize>, n_docs: usize) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            df,
            n_docs,
            index,
        }
    }

    pub fn build<'a, I>(texts: I, tokenizer: &Tokenizer, min_df: usize) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0;
        for text in texts {
            n_docs += 1;
            let unique: HashSet<String> = tokenizer.tokenize(text).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        if n_docs == 0 {
            return Err(FeatureError::EmptyCorpus);
        }
        let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, n)| *n >= min_df).collect();
        if kept.is_empty() {
            return Err(FeatureError::EmptyVocabulary(min_df));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (terms, df) = kept.into_iter().unzip();
        Ok(Vocabulary::from_parts(terms, df, n_docs))
    }

    /// Vocabulary from explicit terms and document frequencies.
    pub fn from_terms(terms: Vec<String>, df: Vec<usize>, n_docs: usize) -> Vocabulary {
        assert_eq!(terms.len(), df.len(), "one document frequency per term");
        Vocabulary::from_parts(terms, df, n_docs)
    }

    /// Terms `t0..t{n-1}`, each seen in one of one documents.
    pub fn numbered(n: usize) -> Vocabulary {
        Vocabulary::from_parts((0..n).map(|i| format!("t{i}")).collect(), vec![1; n], 1)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of documents the frequencies were counted over.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df[index] as f64)).ln() + 1.0
    }
}

pub fn build_vocab(corpus: &Corpus, tokenizer: &Tokenizer, min_df: usize) -> Result<Vocabulary> {
    Vocabulary::build(corpus.texts(), tokenizer, min_df)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Counts,
    Tfidf,
    FairTfidf,
}

/// How [`vectorize`] weights terms.
#[derive(Debug, Clone, Copy)]
pub enum Scheme<'a> {
    Counts,
    Tfidf,
    FairTfidf(&'a FairnessWeights),
}

/// Sorted `(column, weight)` pairs for one document.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub vocabulary: Arc<Vocabulary>,
    pub doc_ids: Vec<String>,
    pub rows: Vec<SparseRow>,
    pub weighting: Weighting,
}

impl FeatureMatrix {
    /// Wraps prebuilt rows; documents are named `row-<i>`.
    pub fn from_rows(
        vocabulary: Arc<Vocabulary>,
        rows: Vec<SparseRow>,
        weighting: Weighting,
    ) -> FeatureMatrix {
        FeatureMatrix {
            vocabulary,
            doc_ids: (0..rows.len()).map(|i| format!("row-{i}")).collect(),
            rows,
            weighting,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    /// Matrix restricted to the given row positions, in that order.
    pub fn take_rows(&self, positions: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            vocabulary: Arc::clone(&self.vocabulary),
            doc_ids: positions.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            rows: positions.iter().map(|&i| self.rows[i].clone()).collect(),
            weighting: self.weighting,
        }
    }

    /// Writes the `doc_id,term_index,weight` triplet form, one non-zero
    /// entry per line, rows in matrix order and columns ascending.
    pub fn write_triplets<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["doc_id", "term_index", "weight"])?;
        for (id, row) in self.doc_ids.iter().zip(&self.rows) {
            for (j, v) in row {
                w.write_record([id.as_str(), &j.to_string(), &v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the triplet form back. Documents without any non-zero entry
    /// cannot be represented and are absent from the result.
    pub fn read_triplets<R: BufRead>(
        input: R,
        vocabulary: Arc<Vocabulary>,
        weighting: Weighting,
    ) -> Result<FeatureMatrix> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut doc_ids: Vec<String> = Vec::new();
        let mut rows: Vec<SparseRow> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let bad = || FeatureError::Triplets(format!("bad record {:?}", rec));
            let id = rec.get(0).ok_or_else(bad)?;
            let j: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let v: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if j >= vocabulary.len() || v.is_nan() || v < 0.0 {
                return Err(bad());
            }
            if doc_ids.last().map(String::as_str) != Some(id) {
                doc_ids.push(id.to_string());
                rows.push(Vec::new());
            }
            rows.last_mut().expect("row pushed above").push((j, v));
        }
        Ok(FeatureMatrix {
            vocabulary,
            doc_ids,
            rows,
            weighting,
        })
    }
}

fn count_row(text: &str, vocab: &Vocabulary, tokenizer: &Tokenizer) -> SparseRow {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for t in tokenizer.tokenize(text) {
        if let Some(j) = vocab.index_of(&t) {
            *counts.entry(j).or_default() += 1.0;
        }
    }
    let mut row: SparseRow = counts.into_iter().collect();
    row.sort_by_key(|(j, _)| *j);
    row
}

fn l2_normalize(row: &mut SparseRow) {
    let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in row.iter_mut() {
            *v /= norm;
        }
    }
}

/// Turns texts into rows over `vocab`. Out-of-vocabulary tokens are ignored;
/// idf always comes from the vocabulary's own document frequencies.
pub fn vectorize_texts<'a, I>(
    ids_texts: I,
    vocab: &Arc<Vocabulary>,
    tokenizer: &Tokenizer,
    scheme: Scheme<'_>,
) -> FeatureMatrix
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let (doc_ids, texts): (Vec<String>, Vec<&str>) = ids_texts
        .into_iter()
        .map(|(id, t)| (id.to_string(), t))
        .unzip();
    let rows: Vec<SparseRow> = texts
        .par_iter()
        .map(|text| {
            let mut row = count_row(text, vocab, tokenizer);
            if let Scheme::Tfidf | Scheme::FairTfidf(_) = scheme {
                for (j, v) in row.iter_mut() {
                    *v *= vocab.idf(*j);
                }
                l2_normalize(&mut row);
            }
            if let Scheme::FairTfidf(w) = scheme {
                w.scale_row(&mut row);
            }
            row
        })
        .collect();
    let weighting = match scheme {
        Scheme::Counts => Weighting::Counts,
        Scheme::Tfidf => Weighting::Tfidf,
        Scheme::FairTfidf(_) => Weighting::FairTfidf,
    };
    FeatureMatrix {
        vocabulary: Arc::clone(vocab),
        doc_ids,
        rows,
        weighting,
    }
}

pub fn vectorize(
    corpus: &Corpus,
    vocab: &Arc<Vocabulary>,
    tokenizer: &Tokenizer,
    scheme: Scheme<'_>,
) -> FeatureMatrix {
    vectorize_texts(
        corpus.iter().map(|d| (d.id.as_str(), d.text.as_str())),
        vocab,
        tokenizer,
        scheme,
    )
}
