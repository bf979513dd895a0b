#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use leakage_cli::config::BackendKind;
use leakage_cli::RunConfig;
use leakage_core::transform::RuleSpec;
use leakage_core::{GridSpec, ModelKind};

const SHARED: &[&str] = &[
    "park",
    "ride",
    "castle",
    "parade",
    "food",
    "staff",
    "fireworks",
    "hotel",
    "tickets",
    "crowd",
    "weather",
    "mountain",
    "show",
    "kids",
    "family",
    "train",
    "breakfast",
    "photos",
    "shop",
    "evening",
];
const UK: &[&str] = &["queues", "pounds", "brilliant", "holiday"];
const US: &[&str] = &["lines", "dollars", "awesome", "vacation"];

/// Rewrites that map both groups' marker words onto the same terms.
pub const NEUTRALIZE: &[(&str, &str)] = &[
    ("queues", "waits"),
    ("lines", "waits"),
    ("pounds", "money"),
    ("dollars", "money"),
    ("brilliant", "great"),
    ("awesome", "great"),
    ("holiday", "trip"),
    ("vacation", "trip"),
];

fn review(i: usize, markers: &[&str]) -> String {
    let mut words = Vec::new();
    for j in 0..8 {
        words.push(SHARED[(i * 7 + j * 3 + i / 5) % SHARED.len()]);
    }
    words.insert(2, markers[i % markers.len()]);
    words.insert(5, markers[(i + 1) % markers.len()]);
    words.join(" ")
}

/// Kaggle-shaped review CSV: `per_group` Hong Kong reviews from each of
/// the two target locations, plus rows the filter must drop.
pub fn write_reviews(path: &Path, per_group: usize) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record([
        "Review_ID",
        "Rating",
        "Year_Month",
        "Reviewer_Location",
        "Review_Text",
        "Branch",
    ])
    .unwrap();
    let mut id = 1000;
    let mut row = |w: &mut csv::Writer<std::fs::File>, loc: &str, text: &str, branch: &str| {
        id += 1;
        w.write_record([&id.to_string(), "4", "2019-4", loc, text, branch])
            .unwrap();
    };
    for i in 0..per_group {
        row(
            &mut w,
            "United Kingdom",
            &review(i, UK),
            "Disneyland_HongKong",
        );
        row(
            &mut w,
            "United States",
            &review(i, US),
            "Disneyland_HongKong",
        );
        if i % 4 == 0 {
            row(&mut w, "Australia", &review(i, UK), "Disneyland_HongKong");
            row(&mut w, "United States", &review(i, US), "Disneyland_Paris");
        }
    }
    w.flush().unwrap();
}

/// Small, fast configuration over a synthetic CSV in `dir`.
pub fn config(dir: &Path, per_group: usize) -> RunConfig {
    let data = dir.join("reviews.csv");
    if !data.exists() {
        write_reviews(&data, 60);
    }
    let mut c = RunConfig::default();
    c.data.path = data;
    c.sample_per_group = per_group;
    c.seeds = vec![0, 1];
    c.transform.backend = BackendKind::Rule;
    c.transform.rules = RuleSpec {
        rewrites: NEUTRALIZE
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect::<BTreeMap<_, _>>(),
        ..RuleSpec::default()
    };
    c.transform.cache_path = dir.join("cache.jsonl");
    c.output_dir = dir.join("runs");
    c.classifiers.naive_bayes = one_point(ModelKind::NaiveBayes, &[("alpha", Some(1.0))]);
    c.classifiers.random_forest = one_point(
        ModelKind::RandomForest,
        &[("n_trees", Some(20.0)), ("max_depth", None)],
    );
    c.sweep.sizes = vec![40];
    c.top_k = 10;
    c
}

pub fn one_point(kind: ModelKind, values: &[(&str, Option<f64>)]) -> GridSpec {
    let mut g = GridSpec::default_for(kind);
    g.params = values
        .iter()
        .map(|(k, v)| (k.to_string(), vec![*v]))
        .collect();
    g.cv_folds = 3;
    g
}
