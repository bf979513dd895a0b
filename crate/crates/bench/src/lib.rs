//! Synthetic review corpora for benchmarks.

use leakage_core::corpus::Provenance;
use leakage_core::{Corpus, Document, GroupLabel, GroupNames};

const SHARED: &[&str] = &[
    "park",
    "ride",
    "castle",
    "parade",
    "food",
    "staff",
    "ticket",
    "hotel",
    "fireworks",
    "queue",
    "show",
    "family",
    "day",
    "kids",
    "price",
    "crowd",
    "magic",
    "weather",
    "shop",
    "map",
];
const GROUP_A: &[&str] = &["brilliant", "lovely", "holiday", "queues", "pounds"];
const GROUP_B: &[&str] = &["awesome", "vacation", "lines", "dollars", "parking"];

/// `per_group` documents per label; each draws words from a shared pool
/// and a small group-specific pool, so labels are learnable but not trivial.
pub fn synthetic_corpus(per_group: usize, words_per_doc: usize, seed: u64) -> Corpus {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move |n: usize| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) % n as u64) as usize
    };
    let mut docs = Vec::with_capacity(2 * per_group);
    for i in 0..2 * per_group {
        let group = if i % 2 == 0 {
            GroupLabel::A
        } else {
            GroupLabel::B
        };
        let marked = if group == GroupLabel::A {
            GROUP_A
        } else {
            GROUP_B
        };
        let words: Vec<&str> = (0..words_per_doc)
            .map(|_| {
                if next(4) == 0 {
                    marked[next(marked.len())]
                } else {
                    SHARED[next(SHARED.len())]
                }
            })
            .collect();
        docs.push(Document {
            id: format!("s{i}"),
            text: words.join(" "),
            group,
            meta: Default::default(),
        });
    }
    Corpus::new(
        docs,
        GroupNames::new("United Kingdom", "United States"),
        Provenance::default(),
    )
    .expect("synthetic corpus is valid")
}
