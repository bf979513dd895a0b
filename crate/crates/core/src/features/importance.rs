use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{vectorize, FeatureError, Result, Scheme, Tokenizer, Vocabulary};
use crate::classifiers::TrainedModel;
use crate::corpus::{Corpus, GroupLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Corpus,
    Group(GroupLabel),
    Model(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Corpus => f.write_str("corpus"),
            Scope::Group(g) => write!(f, "group {g}"),
            Scope::Model(m) => write!(f, "model {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub term: String,
    pub score: f64,
}

/// Terms by non-increasing score. Only terms with a positive score appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub scope: Scope,
    pub entries: Vec<RankedTerm>,
}

impl ImportanceRanking {
    /// Ranks column scores; equal scores keep vocabulary order.
    pub fn from_scores(scores: &[f64], vocab: &Vocabulary, top_k: usize, scope: Scope) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] > 0.0).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let entries = order
            .into_iter()
            .take(top_k)
            .map(|j| RankedTerm {
                term: vocab.term(j).to_string(),
                score: scores[j],
            })
            .collect();
        ImportanceRanking { scope, entries }
    }

    /// 1-based position of `term`, if ranked.
    pub fn rank_of(&self, term: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.term == term)
            .map(|p| p + 1)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.term.as_str())
    }

    /// `term,score,rank` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term", "score", "rank"])?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([e.term.as_str(), &e.score.to_string(), &(i + 1).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Summed tf-idf weight of each term over the documents of `group`.
pub fn group_importance(
    corpus: &Corpus,
    vocab: &Arc<Vocabulary>,
    tokenizer: &Tokenizer,
    group: GroupLabel,
    top_k: usize,
) -> Result<ImportanceRanking> {
    let members: Vec<(&str, &str)> = corpus
        .iter()
        .filter(|d| d.group == group)
        .map(|d| (d.id.as_str(), d.text.as_str()))
        .collect();
    if members.is_empty() {
        return Err(FeatureError::GroupAbsent(group));
    }
    let m = super::vectorize_texts(members, vocab, tokenizer, Scheme::Tfidf);
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); vocab.len()];
    for row in &m.rows {
        for &(j, v) in row {
            columns[j].push(v);
        }
    }
    // sorted summation keeps the totals independent of document order
    let scores: Vec<f64> = columns
        .into_iter()
        .map(|mut c| {
            c.sort_by(f64::total_cmp);
            c.into_iter().sum()
        })
        .collect();
    Ok(ImportanceRanking::from_scores(
        scores.as_slice(),
        vocab,
        top_k,
        Scope::Group(group),
    ))
}

/// Summed tf-idf over the whole corpus.
pub fn corpus_importance(
    corpus: &Corpus,
    vocab: &Arc<Vocabulary>,
    tokenizer: &Tokenizer,
    top_k: usize,
) -> ImportanceRanking {
    let m = vectorize(corpus, vocab, tokenizer, Scheme::Tfidf);
    let mut scores = vec![0.0; vocab.len()];
    for row in &m.rows {
        for &(j, v) in row {
            scores[j] += v;
        }
    }
    ImportanceRanking::from_scores(&scores, vocab, top_k, Scope::Corpus)
}

/// Naive Bayes: `|log P(t|A) - log P(t|B)|`. Random forest: mean impurity
/// decrease across trees.
pub fn model_importance(
    model: &TrainedModel,
    vocab: &Vocabulary,
    top_k: usize,
) -> Result<ImportanceRanking> {
    if model.n_terms() != vocab.len() {
        return Err(FeatureError::VocabMismatch {
            expected: model.n_terms(),
            actual: vocab.len(),
        });
    }
    let scores = model.term_importance();
    Ok(ImportanceRanking::from_scores(
        &scores,
        vocab,
        top_k,
        Scope::Model(model.kind().to_string()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::nb_fit;
    use crate::features::tests::corpus_of;
    use crate::features::{build_vocab, vectorize, Scheme};
    use proptest::prelude::*;

    #[test]
    fn single_doc_group_ranks_by_weight() {
        let c = corpus_of(&[("a a b", GroupLabel::A), ("c", GroupLabel::B)]);
        let v = Arc::new(build_vocab(&c, &Tokenizer::plain(), 1).unwrap());
        let r = group_importance(&c, &v, &Tokenizer::plain(), GroupLabel::A, 10).unwrap();
        assert_eq!(r.terms().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(r.rank_of("c"), None);
    }

    #[test]
    fn absent_group_is_an_error() {
        let c = corpus_of(&[("a b", GroupLabel::A)]);
        let v = Arc::new(build_vocab(&c, &Tokenizer::plain(), 1).unwrap());
        assert!(matches!(
            group_importance(&c, &v, &Tokenizer::plain(), GroupLabel::B, 5),
            Err(FeatureError::GroupAbsent(GroupLabel::B))
        ));
    }

    #[test]
    fn nb_ranking_by_log_gap() {
        let c = corpus_of(&[("good good", GroupLabel::A), ("bad", GroupLabel::B)]);
        let tok = Tokenizer::plain();
        let v = Arc::new(build_vocab(&c, &tok, 1).unwrap());
        let x = vectorize(&c, &v, &tok, Scheme::Counts);
        let model = TrainedModel::NaiveBayes(nb_fit(&x, &c.labels(), 1.0).unwrap());
        let r = model_importance(&model, &v, 10).unwrap();
        // |ln(1/4) - ln(2/3)| = ln(8/3) > |ln(3/4) - ln(1/3)| = ln(9/4)
        assert_eq!(r.terms().collect::<Vec<_>>(), vec!["bad", "good"]);
        assert!((r.entries[0].score - (8.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((r.entries[1].score - (9.0f64 / 4.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn nb_ranking_ignores_prior_scaling() {
        let c = corpus_of(&[
            ("good good fun", GroupLabel::A),
            ("bad", GroupLabel::B),
            ("fun bad bad", GroupLabel::B),
        ]);
        let tok = Tokenizer::plain();
        let v = Arc::new(build_vocab(&c, &tok, 1).unwrap());
        let x = vectorize(&c, &v, &tok, Scheme::Counts);
        let nb = nb_fit(&x, &c.labels(), 1.0).unwrap();
        let mut scaled = nb.clone();
        for p in scaled.class_log_prior.iter_mut() {
            *p += 3.0f64.ln();
        }
        let a = model_importance(&TrainedModel::NaiveBayes(nb), &v, 10).unwrap();
        let b = model_importance(&TrainedModel::NaiveBayes(scaled), &v, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_vocab_mismatch() {
        let c = corpus_of(&[("x y", GroupLabel::A), ("z", GroupLabel::B)]);
        let tok = Tokenizer::plain();
        let v = Arc::new(build_vocab(&c, &tok, 1).unwrap());
        let x = vectorize(&c, &v, &tok, Scheme::Counts);
        let model = TrainedModel::NaiveBayes(nb_fit(&x, &c.labels(), 1.0).unwrap());
        let other = build_vocab(&corpus_of(&[("x", GroupLabel::A)]), &tok, 1).unwrap();
        assert!(matches!(
            model_importance(&model, &other, 5),
            Err(FeatureError::VocabMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn group_ranking_is_permutation_invariant(
            words in prop::collection::vec(prop::collection::vec(0usize..6, 1..8), 2..10),
            seed in any::<u64>(),
        ) {
            let vocab_words = ["queues", "park", "rides", "like", "castle", "food"];
            let texts: Vec<String> = words
                .iter()
                .map(|d| d.iter().map(|&w| vocab_words[w]).collect::<Vec<_>>().join(" "))
                .collect();
            let entries: Vec<(&str, GroupLabel)> = texts.iter().map(|t| (t.as_str(), GroupLabel::A)).collect();
            let c = corpus_of(&entries);
            let tok = Tokenizer::plain();
            let v = Arc::new(build_vocab(&c, &tok, 1).unwrap());
            let base = group_importance(&c, &v, &tok, GroupLabel::A, 20).unwrap();
            let mut ids = c.ids();
            let mut rng = crate::rng::seeded(seed);
            crate::rng::shuffle(&mut rng, &mut ids);
            let shuffled = c.select(&ids).unwrap();
            let again = group_importance(&shuffled, &v, &tok, GroupLabel::A, 20).unwrap();
            prop_assert_eq!(base, again);
        }
    }
}
