//! The audit report, its consistency checks and its Markdown rendering.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use leakage_core::features::Scope;
use leakage_core::stats::{discordant, MetricSummary};
use leakage_core::transform::FlaggedDoc;
use leakage_core::{
    EvalReport, GroupNames, Hyperparams, ImportanceRanking, McNemarResult, ModelKind,
    PreservationReport, SeedSweepSummary,
};

use crate::config::RunConfig;
use crate::error::{AuditError, Stage};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const RANKINGS_CSV: &str = "rankings.csv";
pub const SENTIMENT_CSV: &str = "sentiment.csv";

/// Wall-clock fields; the only part of a report that differs between two
/// runs of the same configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheInfo {
    pub path: String,
    pub format_version: u32,
    pub entries: usize,
    /// Digest over cached (request hash, text) pairs.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub lexicon_version: String,
    pub backend: String,
    pub model: String,
    pub template: String,
    pub cache: CacheInfo,
    pub split_policy: String,
    pub timestamps: Timestamps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub hyperparams: Hyperparams,
    /// Mean cross-validation score of the chosen grid point; absent when
    /// the grid has a single point and no search was run.
    pub cv_score: Option<f64>,
    pub report: EvalReport,
}

/// One model on one seed: original vs transformed text on the same test ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model: ModelKind,
    pub original: Evaluation,
    pub transformed: Evaluation,
    /// Original accuracy minus transformed accuracy.
    pub accuracy_delta: f64,
    pub mcnemar: McNemarResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub n_train: usize,
    pub test_ids: Vec<String>,
    pub models: Vec<ModelRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub original_mean: MetricSummary,
    pub original_std: MetricSummary,
    pub transformed_mean: MetricSummary,
    pub transformed_std: MetricSummary,
    pub mean_accuracy_delta: f64,
    pub significant_runs: usize,
    pub significant_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingPair {
    pub scope: Scope,
    pub original: ImportanceRanking,
    pub transformed: ImportanceRanking,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub filtered: usize,
    pub sampled: usize,
    pub transformed: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub groups: GroupNames,
    pub documents: DocumentCounts,
    pub runs: Vec<SeedRun>,
    pub summary: Vec<ModelSummary>,
    pub significance_alpha: f64,
    pub preservation: PreservationReport,
    /// Rankings from the first seed's models and sample.
    pub rankings: Vec<RankingPair>,
    pub flagged: Vec<FlaggedDoc>,
    pub manifest: RunManifest,
}

impl ModelSummary {
    pub fn from_runs(model: ModelKind, runs: &[SeedRun], alpha: f64) -> Option<ModelSummary> {
        let picked: Vec<&ModelRun> = runs
            .iter()
            .filter_map(|r| r.models.iter().find(|m| m.model == model))
            .collect();
        if picked.is_empty() {
            return None;
        }
        let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
        let side = |f: fn(&ModelRun) -> &Evaluation| {
            SeedSweepSummary::from_reports(
                seeds.clone(),
                picked.iter().map(|m| f(m).report.clone()).collect(),
            )
            .ok()
        };
        let original = side(|m| &m.original)?;
        let transformed = side(|m| &m.transformed)?;
        let n = picked.len();
        let significant_runs = picked
            .iter()
            .filter(|m| m.mcnemar.significant(alpha))
            .count();
        Some(ModelSummary {
            model,
            original_mean: original.mean,
            original_std: original.std,
            transformed_mean: transformed.mean,
            transformed_std: transformed.std,
            mean_accuracy_delta: picked.iter().map(|m| m.accuracy_delta).sum::<f64>() / n as f64,
            significant_runs,
            significant_fraction: significant_runs as f64 / n as f64,
        })
    }
}

impl AuditReport {
    pub fn summary_for(&self, model: ModelKind) -> Option<&ModelSummary> {
        self.summary.iter().find(|s| s.model == model)
    }

    pub fn ranking(&self, scope: &Scope) -> Option<&RankingPair> {
        self.rankings.iter().find(|r| &r.scope == scope)
    }

    /// Re-derives every redundant number and checks it against the stored one.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return Err(format!(
                "schema_version {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.runs.is_empty() {
            return Err("report has no runs".into());
        }
        for run in &self.runs {
            for m in &run.models {
                let ctx = format!("seed {} {}", run.seed, m.model);
                for (side, e) in [("original", &m.original), ("transformed", &m.transformed)] {
                    e.report
                        .validate()
                        .map_err(|err| format!("{ctx} {side}: {err}"))?;
                    if e.report.correctness.len() != run.test_ids.len() {
                        return Err(format!(
                            "{ctx} {side}: test set size disagrees with test ids"
                        ));
                    }
                }
                let delta = m.original.report.accuracy - m.transformed.report.accuracy;
                if (delta - m.accuracy_delta).abs() > 1e-12 {
                    return Err(format!(
                        "{ctx}: accuracy_delta {} != {delta}",
                        m.accuracy_delta
                    ));
                }
                let (b, c) = discordant(
                    &m.original.report.correctness,
                    &m.transformed.report.correctness,
                )
                .map_err(|e| format!("{ctx}: {e}"))?;
                let t = &m.mcnemar;
                if (t.b, t.c) != (b, c) {
                    return Err(format!(
                        "{ctx}: McNemar counts ({}, {}) != ({b}, {c})",
                        t.b, t.c
                    ));
                }
                if !(0.0..=1.0).contains(&t.p_value) || t.statistic.is_nan() || t.statistic < 0.0 {
                    return Err(format!("{ctx}: McNemar result out of range"));
                }
            }
        }
        for s in &self.summary {
            let expect = ModelSummary::from_runs(s.model, &self.runs, self.significance_alpha)
                .ok_or_else(|| format!("summary for {} has no runs", s.model))?;
            if (expect.mean_accuracy_delta - s.mean_accuracy_delta).abs() > 1e-12
                || (expect.original_mean.accuracy - s.original_mean.accuracy).abs() > 1e-12
                || (expect.transformed_mean.accuracy - s.transformed_mean.accuracy).abs() > 1e-12
                || expect.significant_runs != s.significant_runs
            {
                return Err(format!(
                    "summary for {} disagrees with the per-seed runs",
                    s.model
                ));
            }
        }
        let p = &self.preservation;
        if !(0.0..=1.0).contains(&p.agreement) || p.flips > p.n_docs {
            return Err("sentiment preservation numbers are out of range".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn model_title(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::NaiveBayes => "Naive Bayes",
        ModelKind::RandomForest => "Random Forest",
    }
}

fn scope_title(scope: &Scope, groups: &GroupNames) -> String {
    match scope {
        Scope::Corpus => "whole corpus (tf-idf)".into(),
        Scope::Group(g) => format!("{} reviews (tf-idf)", groups.name(*g)),
        Scope::Model(m) => match m.as_str() {
            "naive_bayes" => "Naive Bayes model".into(),
            "random_forest" => "Random Forest model".into(),
            other => other.to_string(),
        },
    }
}

fn pm(mean: f64, std: f64, n: usize) -> String {
    if n > 1 {
        format!("{mean:.3} ± {std:.3}")
    } else {
        format!("{mean:.3}")
    }
}

pub fn render_markdown(r: &AuditReport) -> String {
    let mut md = String::new();
    let n_seeds = r.runs.len();
    let m = &r.manifest;
    let _ = writeln!(md, "# Leakage audit: {} vs {}\n", r.groups.a, r.groups.b);
    let _ = writeln!(
        md,
        "Transformation `{}` / `{}` with template `{}`. {} seed(s): {}. Config `{}`.\n",
        m.backend,
        m.model,
        m.template,
        n_seeds,
        m.seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(", "),
        &m.config_hash[..12.min(m.config_hash.len())]
    );
    let d = &r.documents;
    let _ = writeln!(
        md,
        "Documents: {} after filtering, {} sampled, {} transformed, {} flagged.\n",
        d.filtered, d.sampled, d.transformed, d.flagged
    );

    let _ = writeln!(md, "## Accuracy\n");
    let _ = writeln!(md, "| Model | Original | Transformed | Drop |");
    let _ = writeln!(md, "|---|---|---|---|");
    for s in &r.summary {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {:.3} |",
            model_title(s.model),
            pm(s.original_mean.accuracy, s.original_std.accuracy, n_seeds),
            pm(
                s.transformed_mean.accuracy,
                s.transformed_std.accuracy,
                n_seeds
            ),
            s.mean_accuracy_delta
        );
    }
    let _ = writeln!(
        md,
        "\n## Precision, recall and F1 (positive class: {})\n",
        r.groups.a
    );
    let _ = writeln!(md, "| Model | Data | Precision | Recall | F1 |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for s in &r.summary {
        for (label, v) in [
            ("original", &s.original_mean),
            ("transformed", &s.transformed_mean),
        ] {
            let _ = writeln!(
                md,
                "| {} | {} | {:.3} | {:.3} | {:.3} |",
                model_title(s.model),
                label,
                v.precision,
                v.recall,
                v.f1
            );
        }
    }

    let _ = writeln!(
        md,
        "\n## McNemar test (original vs transformed predictions)\n"
    );
    let _ = writeln!(md, "| Seed | Model | b | c | Statistic | p-value |");
    let _ = writeln!(md, "|---|---|---|---|---|---|");
    for run in &r.runs {
        for mr in &run.models {
            let t = &mr.mcnemar;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {:.4} | {:.4} |",
                run.seed,
                model_title(mr.model),
                t.b,
                t.c,
                t.statistic,
                t.p_value
            );
        }
    }
    for s in &r.summary {
        let _ = writeln!(
            md,
            "\n{}: significant at α = {} in {}/{} seed(s).",
            model_title(s.model),
            r.significance_alpha,
            s.significant_runs,
            n_seeds
        );
    }

    let p = &r.preservation;
    let _ = writeln!(md, "\n## Sentiment preservation\n");
    let _ =
        writeln!(
        md,
        "Worst-engine agreement {:.3}, flips {} of {} ({:.1}%), mean |Δ polarity| {:.3}: **{}**.\n",
        p.agreement,
        p.flips,
        p.n_docs,
        100.0 * p.flip_rate,
        p.mean_abs_delta,
        if p.passed { "preserved" } else { "NOT preserved" }
    );
    let _ = writeln!(
        md,
        "| Engine | Agreement | Pos→Neg | Neg→Pos | Mean abs Δ |"
    );
    let _ = writeln!(md, "|---|---|---|---|---|");
    for e in &p.per_engine {
        let _ = writeln!(
            md,
            "| {} | {:.3} | {} | {} | {:.3} |",
            e.engine, e.agreement, e.positive_to_negative, e.negative_to_positive, e.mean_abs_delta
        );
    }

    let _ = writeln!(md, "\n## Word importance\n");
    for pair in &r.rankings {
        let _ = writeln!(md, "### {}\n", scope_title(&pair.scope, &r.groups));
        let _ = writeln!(md, "| Rank | Original | Transformed |");
        let _ = writeln!(md, "|---|---|---|");
        let n = pair
            .original
            .entries
            .len()
            .max(pair.transformed.entries.len());
        for i in 0..n {
            let cell = |rk: &ImportanceRanking| {
                rk.entries
                    .get(i)
                    .map(|e| format!("{} ({:.4})", e.term, e.score))
                    .unwrap_or_default()
            };
            let _ = writeln!(
                md,
                "| {} | {} | {} |",
                i + 1,
                cell(&pair.original),
                cell(&pair.transformed)
            );
        }
        let _ = writeln!(md);
    }
    if !r.flagged.is_empty() {
        let _ = writeln!(md, "## Flagged documents\n");
        for f in &r.flagged {
            let _ = writeln!(md, "- `{}`: {}", f.doc_id, f.reason);
        }
    }
    md
}

/// Loads and validates a stored report, then re-renders `report.md` from it.
pub fn cmd_report(run_dir: &Path) -> Result<String, AuditError> {
    let path = run_dir.join(REPORT_JSON);
    if !path.is_file() {
        return Err(AuditError::data(
            Stage::Report,
            format!("no run found in {}", run_dir.display()),
        ));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| {
        AuditError::data(
            Stage::Report,
            format!("cannot read {}: {e}", path.display()),
        )
    })?;
    let report: AuditReport = serde_json::from_str(&text)
        .map_err(|e| AuditError::data(Stage::Report, format!("corrupt {}: {e}", path.display())))?;
    report
        .validate()
        .map_err(|e| AuditError::data(Stage::Report, format!("invalid {}: {e}", path.display())))?;
    let md = render_markdown(&report);
    std::fs::write(run_dir.join(REPORT_MD), &md)
        .map_err(|e| AuditError::internal(Stage::Report, e.to_string()))?;
    Ok(md)
}
