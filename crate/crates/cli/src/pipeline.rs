//! The audit, sweep and transform commands.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use leakage_core::classifiers::grid_search;
use leakage_core::corpus::{ingest_csv, ColumnMapping};
use leakage_core::features::{
    build_vocab, fair_weights, group_importance, model_importance, vectorize, FairnessWeights,
    Scheme, Scope,
};
use leakage_core::rng::derive_seed;
use leakage_core::sentiment::{preservation, Scorer};
use leakage_core::stats::{discordant, mcnemar_from_counts, seed_sweep};
use leakage_core::transform::{
    transform_corpus, ChatCompletionBackend, FlaggedDoc, IdentityTransformer, LookupTransformer,
    RewriteRules, RuleTransformer, TransformOptions, TransformOutcome, CACHE_FORMAT_VERSION,
};
use leakage_core::{
    evaluate, Corpus, FeatureMatrix, GroupLabel, Hyperparams, ModelKind, SentimentLexicon,
    SplitSpec, Tokenizer, TrainedModel, TransformCache, Transformer, Vocabulary, Weighting,
};

use crate::config::{BackendKind, FeatureConfig, RunConfig};
use crate::error::{AtStage, AuditError, Stage};
use crate::report::{
    render_markdown, AuditReport, CacheInfo, DocumentCounts, Evaluation, ModelRun, ModelSummary,
    RankingPair, RunManifest, SeedRun, Timestamps, MANIFEST_JSON, RANKINGS_CSV, REPORT_JSON,
    REPORT_MD, REPORT_SCHEMA_VERSION, SENTIMENT_CSV,
};

/// Ingests the configured CSV and reduces it to the two groups.
pub fn load_corpus(config: &RunConfig) -> Result<Corpus, AuditError> {
    let d = &config.data;
    let mut mapping: ColumnMapping = d.columns.clone();
    if let Some(f) = &d.filter {
        if !mapping.required.contains(&f.column) {
            mapping.required.push(f.column.clone());
        }
    }
    let raw = ingest_csv(&d.path, &mapping).at(Stage::Ingest)?;
    let p = &raw.provenance;
    log::info!(
        "read {} rows from {} ({} empty text, {} missing group, {} duplicate ids skipped)",
        p.rows_read,
        p.source,
        p.skipped_empty_text,
        p.skipped_missing_group,
        p.skipped_duplicate_id
    );
    let filter = d
        .filter
        .as_ref()
        .map(|f| (f.column.as_str(), f.equals.as_str()));
    raw.filter_binary((&d.groups[0], &d.groups[1]), filter)
        .at(Stage::Filter)
}

/// All documents drawn by any configured seed, in first-draw order.
pub fn sampled_union(
    corpus: &Corpus,
    per_group: usize,
    seeds: &[u64],
) -> Result<Corpus, AuditError> {
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    for &seed in seeds {
        let sample = corpus.balanced_sample(per_group, seed).at(Stage::Sample)?;
        for id in sample.ids() {
            if seen.insert(id.clone()) {
                ids.push(id);
            }
        }
    }
    corpus.select(&ids).at(Stage::Sample)
}

pub fn build_backend(config: &RunConfig) -> Result<Box<dyn Transformer>, AuditError> {
    let t = &config.transform;
    Ok(match t.backend {
        BackendKind::Identity => Box::new(IdentityTransformer),
        BackendKind::Rule => Box::new(RuleTransformer::new(
            RewriteRules::new(t.rules.clone()).at(Stage::Config)?,
        )),
        BackendKind::Chat => {
            Box::new(ChatCompletionBackend::new(t.chat.clone()).at(Stage::Config)?)
        }
        BackendKind::Lookup => {
            let l = t
                .lookup
                .as_ref()
                .ok_or_else(|| AuditError::config(Stage::Config, "missing transform.lookup"))?;
            Box::new(
                LookupTransformer::from_csv(&l.path, &l.original_column, &l.transformed_column)
                    .map_err(|e| AuditError::data(Stage::Transform, e.to_string()))?,
            )
        }
    })
}

pub fn load_lexicon(config: &RunConfig) -> Result<SentimentLexicon, AuditError> {
    match &config.sentiment.lexicon {
        None => Ok(SentimentLexicon::bundled()),
        Some(path) => {
            let file = File::open(path).map_err(|e| {
                AuditError::config(Stage::Sentiment, format!("{}: {e}", path.display()))
            })?;
            let version = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            SentimentLexicon::from_tsv(BufReader::new(file), &version).at(Stage::Sentiment)
        }
    }
}

fn transform_options(config: &RunConfig) -> TransformOptions {
    TransformOptions::from_backend(&config.transform.chat, config.transform.offline)
}

fn run_transform(
    config: &RunConfig,
    corpus: &Corpus,
    backend: &dyn Transformer,
    cache: &mut TransformCache,
) -> Result<TransformOutcome, AuditError> {
    let outcome = transform_corpus(
        corpus,
        backend,
        &config.transform.template,
        cache,
        &transform_options(config),
    )
    .at(Stage::Transform)?;
    log::info!(
        "transform: {} cached, {} backend calls, {} flagged",
        outcome.cache_hits,
        outcome.backend_calls,
        outcome.flagged.len()
    );
    if !outcome.flagged.is_empty() {
        log::warn!(
            "{} flagged documents are excluded from both corpora",
            outcome.flagged.len()
        );
    }
    Ok(outcome)
}

struct Features {
    vocab: Arc<Vocabulary>,
    tokenizer: Tokenizer,
    fair: Option<FairnessWeights>,
}

impl Features {
    fn matrix(&self, corpus: &Corpus, weighting: Weighting) -> FeatureMatrix {
        let scheme = match (weighting, &self.fair) {
            (Weighting::Counts, _) => Scheme::Counts,
            (Weighting::Tfidf, _) => Scheme::Tfidf,
            (Weighting::FairTfidf, Some(w)) => Scheme::FairTfidf(w),
            (Weighting::FairTfidf, None) => {
                unreachable!("fair weights are computed when configured")
            }
        };
        vectorize(corpus, &self.vocab, &self.tokenizer, scheme)
    }
}

/// Vocabulary (and fair-weighting multipliers, if any model uses them)
/// learned from the training split only.
fn featurize(train: &Corpus, cfg: &FeatureConfig) -> Result<Features, AuditError> {
    let tokenizer = Tokenizer::from_config(&cfg.tokenizer);
    let vocab = Arc::new(build_vocab(train, &tokenizer, cfg.min_df).at(Stage::Vectorize)?);
    let fair = if ModelKind::ALL
        .iter()
        .any(|&k| cfg.weighting(k) == Weighting::FairTfidf)
    {
        Some(
            fair_weights(
                train,
                &vocab,
                &tokenizer,
                cfg.fair_threshold,
                cfg.fair_steepness,
            )
            .at(Stage::Vectorize)?,
        )
    } else {
        None
    };
    Ok(Features {
        vocab,
        tokenizer,
        fair,
    })
}

fn model_index(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::NaiveBayes => 1,
        ModelKind::RandomForest => 2,
    }
}

/// Picks hyperparameters by cross-validation (skipped for one-point grids)
/// and fits on the whole training set.
fn select_and_fit(
    config: &RunConfig,
    kind: ModelKind,
    x: &FeatureMatrix,
    labels: &[GroupLabel],
    seed: u64,
    search: bool,
) -> Result<(Hyperparams, Option<f64>, TrainedModel), AuditError> {
    let mut grid = config.classifiers.grid(kind).clone();
    let candidates = grid.hyperparams(kind).at(Stage::Config)?;
    let (params, cv_score) = if search && candidates.len() > 1 {
        grid.seed = derive_seed(grid.seed, seed);
        let result = grid_search(x, labels, kind, &grid).at(Stage::GridSearch)?;
        (result.best, Some(result.table[result.best_index].mean))
    } else {
        (candidates[0], None)
    };
    let model = params
        .fit(x, labels, derive_seed(seed, 1000 + model_index(kind)))
        .at(Stage::Fit)?;
    Ok((params, cv_score, model))
}

struct Fitted {
    features: Features,
    models: Vec<(ModelKind, Evaluation, TrainedModel)>,
}

fn fit_representation(
    config: &RunConfig,
    train: &Corpus,
    test: &Corpus,
    seed: u64,
) -> Result<Fitted, AuditError> {
    let features = featurize(train, &config.features)?;
    let ytr = train.labels();
    let yte = test.labels();
    let mut models = Vec::new();
    for kind in ModelKind::ALL {
        let weighting = config.features.weighting(kind);
        let xtr = features.matrix(train, weighting);
        let xte = features.matrix(test, weighting);
        let (hyperparams, cv_score, model) = select_and_fit(config, kind, &xtr, &ytr, seed, true)?;
        let report = evaluate(&model, &xte, &yte).at(Stage::Evaluate)?;
        models.push((
            kind,
            Evaluation {
                hyperparams,
                cv_score,
                report,
            },
            model,
        ));
    }
    Ok(Fitted { features, models })
}

struct SeedResult {
    run: SeedRun,
    rankings: Vec<RankingPair>,
}

fn run_seed(
    config: &RunConfig,
    filtered: &Corpus,
    transformed: &Corpus,
    seed: u64,
    with_rankings: bool,
) -> Result<SeedResult, AuditError> {
    let sample = filtered
        .balanced_sample(config.sample_per_group, seed)
        .at(Stage::Sample)?;
    let keep: Vec<String> = sample
        .ids()
        .into_iter()
        .filter(|id| transformed.get(id).is_some())
        .collect();
    let original = sample.select(&keep).at(Stage::Sample)?;
    let spec = SplitSpec {
        test_fraction: config.split.test_fraction,
        seed,
        stratified: config.split.stratified,
    };
    let (train_o, test_o) = original.split(&spec).at(Stage::Sample)?;
    let train_ids = train_o.ids();
    let test_ids = test_o.ids();
    let train_t = transformed.select(&train_ids).at(Stage::Sample)?;
    let test_t = transformed.select(&test_ids).at(Stage::Sample)?;

    let fo = fit_representation(config, &train_o, &test_o, seed)?;
    let ft = fit_representation(config, &train_t, &test_t, seed)?;

    let sig = &config.significance;
    let mut models = Vec::new();
    for ((kind, eo, _), (_, et, _)) in fo.models.iter().zip(&ft.models) {
        let (b, c) = discordant(&eo.report.correctness, &et.report.correctness)
            .map_err(|e| AuditError::internal(Stage::Significance, e.to_string()))?;
        models.push(ModelRun {
            model: *kind,
            accuracy_delta: eo.report.accuracy - et.report.accuracy,
            mcnemar: mcnemar_from_counts(b, c, sig.correction, sig.method),
            original: eo.clone(),
            transformed: et.clone(),
        });
    }

    let mut rankings = Vec::new();
    if with_rankings {
        let k = config.top_k;
        for ((kind, _, mo), (_, _, mt)) in fo.models.iter().zip(&ft.models) {
            rankings.push(RankingPair {
                scope: Scope::Model(kind.to_string()),
                original: model_importance(mo, &fo.features.vocab, k).at(Stage::Importance)?,
                transformed: model_importance(mt, &ft.features.vocab, k).at(Stage::Importance)?,
            });
        }
        let tok = Tokenizer::from_config(&config.features.tokenizer);
        let transformed_sample = transformed.select(&keep).at(Stage::Importance)?;
        let vo =
            Arc::new(build_vocab(&original, &tok, config.features.min_df).at(Stage::Importance)?);
        let vt = Arc::new(
            build_vocab(&transformed_sample, &tok, config.features.min_df).at(Stage::Importance)?,
        );
        for g in GroupLabel::BOTH {
            rankings.push(RankingPair {
                scope: Scope::Group(g),
                original: group_importance(&original, &vo, &tok, g, k).at(Stage::Importance)?,
                transformed: group_importance(&transformed_sample, &vt, &tok, g, k)
                    .at(Stage::Importance)?,
            });
        }
    }
    Ok(SeedResult {
        run: SeedRun {
            seed,
            n_train: train_ids.len(),
            test_ids,
            models,
        },
        rankings,
    })
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub report: AuditReport,
    pub run_dir: PathBuf,
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Fresh directory `audit-<utc time>-<config hash prefix>[-n]`.
fn create_run_dir(root: &Path, hash: &str) -> Result<PathBuf, AuditError> {
    std::fs::create_dir_all(root).at(Stage::Report)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("audit-{stamp}-{}", &hash[..8]);
    for n in 0.. {
        let name = if n == 0 {
            base.clone()
        } else {
            format!("{base}-{n}")
        };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(AuditError::internal(Stage::Report, e.to_string())),
        }
    }
    unreachable!()
}

/// ingest, filter, sample, transform, sentiment check, then per seed:
/// split, vectorize, grid search, fit, evaluate, McNemar; importance
/// rankings come from the first seed. Artifacts go to a new run directory.
pub fn cmd_audit(config: &RunConfig) -> Result<AuditOutcome, AuditError> {
    config.validate()?;
    let started = now_rfc3339();
    let config_hash = config.hash();

    let filtered = load_corpus(config)?;
    log::info!(
        "{} documents after filtering ({} / {})",
        filtered.len(),
        filtered.count(GroupLabel::A),
        filtered.count(GroupLabel::B)
    );
    let union = sampled_union(&filtered, config.sample_per_group, &config.seeds)?;

    let backend = build_backend(config)?;
    let mut cache = TransformCache::open(&config.transform.cache_path).at(Stage::Transform)?;
    let outcome = run_transform(config, &union, backend.as_ref(), &mut cache)?;
    let transformed = outcome.corpus;

    let lexicon = Arc::new(load_lexicon(config)?);
    let scorers = Scorer::pair(Arc::clone(&lexicon), config.sentiment.neutral_band);
    let originals = union.select(&transformed.ids()).at(Stage::Sentiment)?;
    let sentiment = preservation(
        &originals,
        &transformed,
        &scorers,
        config.sentiment.thresholds,
    )
    .at(Stage::Sentiment)?;
    if !sentiment.passed {
        log::warn!(
            "sentiment not preserved: agreement {:.3}, flip rate {:.3}",
            sentiment.agreement,
            sentiment.flip_rate
        );
    }

    let mut runs = Vec::new();
    let mut rankings = Vec::new();
    for (i, &seed) in config.seeds.iter().enumerate() {
        log::info!("seed {seed} ({}/{})", i + 1, config.seeds.len());
        let r = run_seed(config, &filtered, &transformed, seed, i == 0)?;
        runs.push(r.run);
        if i == 0 {
            rankings = r.rankings;
        }
    }
    let alpha = config.significance.alpha;
    let summary = ModelKind::ALL
        .iter()
        .filter_map(|&k| ModelSummary::from_runs(k, &runs, alpha))
        .collect();

    let run_dir = create_run_dir(&config.output_dir, &config_hash)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        config: config.clone(),
        seeds: config.seeds.clone(),
        lexicon_version: lexicon.version.clone(),
        backend: backend.id().to_string(),
        model: backend.model().to_string(),
        template: config.transform.template.name().to_string(),
        cache: CacheInfo {
            path: config.transform.cache_path.display().to_string(),
            format_version: CACHE_FORMAT_VERSION,
            entries: cache.len(),
            digest: cache.digest(),
        },
        split_policy: "one split per seed on document ids, shared by original and transformed text"
            .into(),
        timestamps: Timestamps {
            started,
            finished: String::new(),
        },
    };
    let mut report = AuditReport {
        schema_version: REPORT_SCHEMA_VERSION,
        groups: filtered.groups().clone(),
        documents: DocumentCounts {
            filtered: filtered.len(),
            sampled: union.len(),
            transformed: transformed.len(),
            flagged: outcome.flagged.len(),
        },
        runs,
        summary,
        significance_alpha: alpha,
        preservation: sentiment,
        rankings,
        flagged: outcome.flagged,
        manifest,
    };
    report
        .validate()
        .map_err(|e| AuditError::internal(Stage::Report, e))?;
    report.manifest.timestamps.finished = now_rfc3339();
    write_artifacts(&report, &run_dir)?;
    log::info!("wrote {}", run_dir.display());
    Ok(AuditOutcome { report, run_dir })
}

fn write_artifacts(report: &AuditReport, dir: &Path) -> Result<(), AuditError> {
    let io = |e: std::io::Error| AuditError::internal(Stage::Report, e.to_string());
    std::fs::write(dir.join(REPORT_JSON), report.to_json()).map_err(io)?;
    let mut manifest = serde_json::to_string_pretty(&report.manifest).expect("manifest serializes");
    manifest.push('\n');
    std::fs::write(dir.join(MANIFEST_JSON), manifest).map_err(io)?;
    std::fs::write(dir.join(REPORT_MD), render_markdown(report)).map_err(io)?;

    let csv_err = |e: csv::Error| AuditError::internal(Stage::Report, e.to_string());
    let mut w = csv::Writer::from_path(dir.join(RANKINGS_CSV)).map_err(csv_err)?;
    w.write_record(["scope", "data", "rank", "term", "score"])
        .map_err(csv_err)?;
    for pair in &report.rankings {
        let scope = match &pair.scope {
            Scope::Corpus => "corpus".to_string(),
            Scope::Group(g) => format!("group_{}", g.to_string().to_lowercase()),
            Scope::Model(m) => m.clone(),
        };
        for (data, ranking) in [
            ("original", &pair.original),
            ("transformed", &pair.transformed),
        ] {
            for (i, e) in ranking.entries.iter().enumerate() {
                w.write_record([
                    scope.as_str(),
                    data,
                    &(i + 1).to_string(),
                    &e.term,
                    &format!("{:.6}", e.score),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(io)?;
    let file = File::create(dir.join(SENTIMENT_CSV)).map_err(io)?;
    report
        .preservation
        .write_chart_csv(file)
        .map_err(|e| AuditError::internal(Stage::Report, e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub model: ModelKind,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub seeds: usize,
}

/// Accuracy against balanced sample size on original text, averaged over
/// the configured seeds.
pub fn cmd_sweep(config: &RunConfig, sizes: &[usize]) -> Result<Vec<SweepRow>, AuditError> {
    config.validate()?;
    if sizes.is_empty() {
        return Err(AuditError::config(Stage::Config, "no sweep sizes given"));
    }
    if let Some(s) = sizes.iter().find(|s| **s < 2 || **s % 2 == 1) {
        return Err(AuditError::config(
            Stage::Config,
            format!("sweep size {s} must be even and at least 2"),
        ));
    }
    let filtered = load_corpus(config)?;
    let mut rows = Vec::new();
    for &size in sizes {
        for kind in ModelKind::ALL {
            let summary = seed_sweep(&config.seeds, |seed| {
                let sample = filtered.balanced_sample(size / 2, seed).at(Stage::Sample)?;
                let spec = SplitSpec {
                    test_fraction: config.split.test_fraction,
                    seed,
                    stratified: config.split.stratified,
                };
                let (train, test) = sample.split(&spec).at(Stage::Sample)?;
                let f = featurize(&train, &config.features)?;
                let weighting = config.features.weighting(kind);
                let (_, _, model) = select_and_fit(
                    config,
                    kind,
                    &f.matrix(&train, weighting),
                    &train.labels(),
                    seed,
                    config.sweep.grid_search,
                )?;
                evaluate(&model, &f.matrix(&test, weighting), &test.labels()).at(Stage::Evaluate)
            })
            .map_err(|e| match e {
                leakage_core::stats::SweepError::Failed { seed, source } => AuditError {
                    message: format!("size {size}, seed {seed}: {}", source.message),
                    ..source
                },
                other => AuditError::config(Stage::Config, other.to_string()),
            })?;
            log::info!(
                "size {size} {kind}: mean accuracy {:.3}",
                summary.mean.accuracy
            );
            rows.push(SweepRow {
                size,
                model: kind,
                mean_accuracy: summary.mean.accuracy,
                std_accuracy: summary.std.accuracy,
                seeds: summary.seeds.len(),
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), AuditError> {
    let err = |e: csv::Error| AuditError::internal(Stage::Report, e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["size", "model", "mean_accuracy", "std_accuracy", "seeds"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            r.size.to_string(),
            r.model.to_string(),
            format!("{:.6}", r.mean_accuracy),
            format!("{:.6}", r.std_accuracy),
            r.seeds.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| AuditError::internal(Stage::Report, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSummary {
    pub documents: usize,
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub flagged: Vec<FlaggedDoc>,
    pub cache_path: PathBuf,
    pub output: PathBuf,
}

/// Transforms every document any configured seed would sample, filling the
/// cache, and writes the pairs to `<output_dir>/transformed-<hash>.csv`.
pub fn cmd_transform(config: &RunConfig) -> Result<TransformSummary, AuditError> {
    config.validate()?;
    let filtered = load_corpus(config)?;
    let union = sampled_union(&filtered, config.sample_per_group, &config.seeds)?;
    let backend = build_backend(config)?;
    let mut cache = TransformCache::open(&config.transform.cache_path).at(Stage::Transform)?;
    let outcome = run_transform(config, &union, backend.as_ref(), &mut cache)?;

    std::fs::create_dir_all(&config.output_dir).at(Stage::Transform)?;
    let output = config
        .output_dir
        .join(format!("transformed-{}.csv", &config.hash()[..8]));
    let err = |e: csv::Error| AuditError::internal(Stage::Transform, e.to_string());
    let mut w = csv::Writer::from_path(&output).map_err(err)?;
    w.write_record(["id", "group", "original", "transformed"])
        .map_err(err)?;
    for doc in outcome.corpus.iter() {
        let original = union
            .get(&doc.id)
            .map(|d| d.text.as_str())
            .unwrap_or_default();
        w.write_record([
            doc.id.as_str(),
            outcome.corpus.groups().name(doc.group),
            original,
            doc.text.as_str(),
        ])
        .map_err(err)?;
    }
    w.flush().at(Stage::Transform)?;
    Ok(TransformSummary {
        documents: outcome.corpus.len(),
        backend_calls: outcome.backend_calls,
        cache_hits: outcome.cache_hits,
        flagged: outcome.flagged,
        cache_path: config.transform.cache_path.clone(),
        output,
    })
}
