//! Deterministic offline rewriter used as a stand-in for a remote model.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::features::bundled_stopwords;

const CONTRACTIONS: &[(&str, &str)] = &[
    ("ain't", "is not"),
    ("aren't", "are not"),
    ("can't", "cannot"),
    ("couldn't", "could not"),
    ("didn't", "did not"),
    ("doesn't", "does not"),
    ("don't", "do not"),
    ("hadn't", "had not"),
    ("hasn't", "has not"),
    ("haven't", "have not"),
    ("isn't", "is not"),
    ("mustn't", "must not"),
    ("shouldn't", "should not"),
    ("wasn't", "was not"),
    ("weren't", "were not"),
    ("won't", "will not"),
    ("wouldn't", "would not"),
    ("i'm", "i am"),
    ("i've", "i have"),
    ("i'll", "i will"),
    ("i'd", "i would"),
    ("you're", "you are"),
    ("you've", "you have"),
    ("you'll", "you will"),
    ("we're", "we are"),
    ("we've", "we have"),
    ("we'll", "we will"),
    ("they're", "they are"),
    ("they've", "they have"),
    ("they'll", "they will"),
    ("it's", "it is"),
    ("that's", "that is"),
    ("there's", "there is"),
    ("here's", "here is"),
    ("what's", "what is"),
    ("let's", "let us"),
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopwordPolicy {
    #[default]
    Keep,
    Drop,
}

/// Rewrite table as written in a config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleSpec {
    pub rewrites: BTreeMap<String, String>,
    pub expand_contractions: bool,
    pub stopwords: StopwordPolicy,
}

impl Default for RuleSpec {
    fn default() -> Self {
        RuleSpec::new(&[])
    }
}

impl RuleSpec {
    pub fn new(rewrites: &[(&str, &str)]) -> Self {
        RuleSpec {
            rewrites: rewrites
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            expand_contractions: true,
            stopwords: StopwordPolicy::Keep,
        }
    }
}

/// Validated rules with every rewrite chain resolved to its fixed point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRules {
    spec: RuleSpec,
    resolved: BTreeMap<String, Vec<String>>,
    stopwords: HashSet<String>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphabetic() || c == '\''
}

impl RewriteRules {
    pub fn new(spec: RuleSpec) -> Result<Self, TransformError> {
        let mut table: BTreeMap<String, Vec<String>> = BTreeMap::new();
        if spec.expand_contractions {
            for (k, v) in CONTRACTIONS {
                table.insert(k.to_string(), v.split(' ').map(str::to_string).collect());
            }
        }
        for (k, v) in &spec.rewrites {
            let key = k.trim().to_lowercase().replace('\u{2019}', "'");
            if key.is_empty() || !key.chars().all(is_word_char) {
                return Err(TransformError::Rules(format!(
                    "rewrite key `{k}` must be a single word"
                )));
            }
            let target = v.to_lowercase().replace('\u{2019}', "'");
            let words: Vec<String> = target.split_whitespace().map(str::to_string).collect();
            if let Some(w) = words.iter().find(|w| !w.chars().all(is_word_char)) {
                return Err(TransformError::Rules(format!(
                    "rewrite target `{v}` contains non-word `{w}`"
                )));
            }
            table.insert(key, words);
        }
        let mut resolved = BTreeMap::new();
        for key in table.keys() {
            let mut stack = Vec::new();
            let words = resolve(key, &table, &mut stack)?;
            resolved.insert(key.clone(), words);
        }
        let stopwords = match spec.stopwords {
            StopwordPolicy::Keep => HashSet::new(),
            StopwordPolicy::Drop => bundled_stopwords().map(str::to_string).collect(),
        };
        Ok(RewriteRules {
            spec,
            resolved,
            stopwords,
        })
    }

    pub fn spec(&self) -> &RuleSpec {
        &self.spec
    }

    fn rewrite_word(&self, word: &str, out: &mut String) {
        let replaced: Vec<&str> = match self.resolved.get(word) {
            Some(ws) => ws.iter().map(String::as_str).collect(),
            None => vec![word],
        };
        let kept: Vec<&str> = replaced
            .into_iter()
            .filter(|w| !self.stopwords.contains(*w))
            .collect();
        out.push_str(&kept.join(" "));
    }
}

fn resolve(
    word: &str,
    table: &BTreeMap<String, Vec<String>>,
    stack: &mut Vec<String>,
) -> Result<Vec<String>, TransformError> {
    let Some(target) = table.get(word) else {
        return Ok(vec![word.to_string()]);
    };
    if stack.iter().any(|w| w == word) {
        stack.push(word.to_string());
        return Err(TransformError::Rules(format!(
            "cyclic rewrite: {}",
            stack.join(" -> ")
        )));
    }
    stack.push(word.to_string());
    let mut out = Vec::new();
    for w in target {
        out.extend(resolve(w, table, stack)?);
    }
    stack.pop();
    Ok(out)
}

/// Lowercases, applies the rewrite table word by word (contractions
/// included), optionally drops stopwords and collapses whitespace.
/// Punctuation outside words is kept. Applying it twice equals applying it
/// once.
pub fn offline_simplify(text: &str, rules: &RewriteRules) -> String {
    let lower = text.to_lowercase().replace('\u{2019}', "'");
    let mut out = String::with_capacity(lower.len());
    let mut word = String::new();
    for c in lower.chars() {
        if is_word_char(c) {
            word.push(c);
        } else {
            if !word.is_empty() {
                rules.rewrite_word(&word, &mut out);
                word.clear();
            }
            out.push(c);
        }
    }
    if !word.is_empty() {
        rules.rewrite_word(&word, &mut out);
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rules(pairs: &[(&str, &str)]) -> RewriteRules {
        RewriteRules::new(RuleSpec::new(pairs)).unwrap()
    }

    #[test]
    fn rewrite_examples() {
        let r = rules(&[("didn't", "did not"), ("queues", "lines")]);
        assert_eq!(
            offline_simplify("I didn't like the long queues", &r),
            "i did not like the long lines"
        );
        assert_eq!(
            offline_simplify("Queues were GREAT!", &rules(&[("queues", "lines")])),
            "lines were great!"
        );
        assert_eq!(offline_simplify("", &r), "");
        assert_eq!(
            offline_simplify("lines were great!", &r),
            "lines were great!"
        );
    }

    #[test]
    fn whitespace_and_curly_apostrophes() {
        let r = rules(&[]);
        assert_eq!(
            offline_simplify("  We  can\u{2019}t\n\twait ", &r),
            "we cannot wait"
        );
    }

    #[test]
    fn chains_resolve_and_cycles_fail() {
        let r = rules(&[("queues", "lines"), ("lines", "waits")]);
        assert_eq!(offline_simplify("queues lines", &r), "waits waits");
        let err = RewriteRules::new(RuleSpec::new(&[("a", "b"), ("b", "a")])).unwrap_err();
        assert!(err.to_string().contains("cyclic"));
        assert!(RewriteRules::new(RuleSpec::new(&[("two words", "x")])).is_err());
        assert!(RewriteRules::new(RuleSpec::new(&[("long", "very long")])).is_err());
    }

    #[test]
    fn stopword_drop() {
        let mut spec = RuleSpec::new(&[("queues", "lines")]);
        spec.stopwords = StopwordPolicy::Drop;
        let r = RewriteRules::new(spec).unwrap();
        assert_eq!(
            offline_simplify("I didn't like the long queues", &r),
            "like long lines"
        );
    }

    proptest! {
        #[test]
        fn idempotent(text in "[a-zA-Z' .,!?\u{2019}\n]{0,80}") {
            let mut spec = RuleSpec::new(&[("queues", "lines"), ("lines", "waits"), ("great", "good")]);
            for policy in [StopwordPolicy::Keep, StopwordPolicy::Drop] {
                spec.stopwords = policy;
                let r = RewriteRules::new(spec.clone()).unwrap();
                let once = offline_simplify(&text, &r);
                prop_assert_eq!(offline_simplify(&once, &r), once);
            }
        }
    }
}
