//! Run configuration: a JSON document with strict validation, layered under
//! command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use leakage_core::classifiers::SelectionMetric;
use leakage_core::corpus::ColumnMapping;
use leakage_core::features::TokenizerConfig;
use leakage_core::sentiment::{PreservationThresholds, DEFAULT_NEUTRAL_BAND};
use leakage_core::stats::McNemarMethod;
use leakage_core::transform::{BackendConfig, RuleSpec};
use leakage_core::{GridSpec, ModelKind, PromptTemplate, Weighting};

use crate::error::{AuditError, Stage};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub column: String,
    pub equals: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: PathBuf,
    pub columns: ColumnMapping,
    /// Group values kept; the first is label A (the positive class).
    pub groups: [String; 2],
    pub filter: Option<FilterSpec>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: PathBuf::from("DisneylandReviews.csv"),
            columns: ColumnMapping {
                text: "Review_Text".into(),
                group: "Reviewer_Location".into(),
                id: Some("Review_ID".into()),
                required: vec!["Branch".into()],
            },
            groups: ["United Kingdom".into(), "United States".into()],
            filter: Some(FilterSpec {
                column: "Branch".into(),
                equals: "Disneyland_HongKong".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub tokenizer: TokenizerConfig,
    pub min_df: usize,
    /// Naive Bayes expects counts; the forest splits on tf-idf by default.
    pub naive_bayes: Weighting,
    pub random_forest: Weighting,
    /// Fair tf-idf sigmoid midpoint and steepness (percent disparity).
    pub fair_threshold: f64,
    pub fair_steepness: f64,
}

impl FeatureConfig {
    pub fn weighting(&self, kind: ModelKind) -> Weighting {
        match kind {
            ModelKind::NaiveBayes => self.naive_bayes,
            ModelKind::RandomForest => self.random_forest,
        }
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            tokenizer: TokenizerConfig::default(),
            min_df: 1,
            naive_bayes: Weighting::Counts,
            random_forest: Weighting::Tfidf,
            fair_threshold: 20.0,
            fair_steepness: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Identity,
    Rule,
    Chat,
    Lookup,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(BackendKind::Identity),
            "rule" => Ok(BackendKind::Rule),
            "chat" => Ok(BackendKind::Chat),
            "lookup" => Ok(BackendKind::Lookup),
            other => Err(format!(
                "unknown backend `{other}` (identity, rule, chat, lookup)"
            )),
        }
    }
}

/// Previously obtained original/transformed pairs in a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupConfig {
    pub path: PathBuf,
    pub original_column: String,
    pub transformed_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    pub backend: BackendKind,
    pub template: PromptTemplate,
    pub rules: RuleSpec,
    pub chat: BackendConfig,
    pub lookup: Option<LookupConfig>,
    pub cache_path: PathBuf,
    pub offline: bool,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            backend: BackendKind::Rule,
            template: PromptTemplate::simplify(),
            rules: RuleSpec::default(),
            chat: BackendConfig::default(),
            lookup: None,
            cache_path: PathBuf::from("transform-cache.jsonl"),
            offline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub naive_bayes: GridSpec,
    pub random_forest: GridSpec,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            naive_bayes: GridSpec::default_for(ModelKind::NaiveBayes),
            random_forest: GridSpec::default_for(ModelKind::RandomForest),
        }
    }
}

impl ClassifierConfig {
    pub fn grid(&self, kind: ModelKind) -> &GridSpec {
        match kind {
            ModelKind::NaiveBayes => &self.naive_bayes,
            ModelKind::RandomForest => &self.random_forest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SentimentConfig {
    pub neutral_band: f64,
    pub thresholds: PreservationThresholds,
    /// TSV lexicon replacing the bundled one.
    pub lexicon: Option<PathBuf>,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        SentimentConfig {
            neutral_band: DEFAULT_NEUTRAL_BAND,
            thresholds: PreservationThresholds::default(),
            lexicon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub correction: bool,
    pub method: McNemarMethod,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            alpha: 0.05,
            correction: true,
            method: McNemarMethod::ChiSquare,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Total sample sizes (split evenly between the groups).
    pub sizes: Vec<usize>,
    /// Pick hyperparameters by grid search at every size instead of using
    /// the first point of each grid.
    pub grid_search: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: (1..=10).map(|k| k * 100).collect(),
            grid_search: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub data: DataConfig,
    pub sample_per_group: usize,
    pub seeds: Vec<u64>,
    pub split: SplitConfig,
    pub features: FeatureConfig,
    pub transform: TransformConfig,
    pub classifiers: ClassifierConfig,
    pub sentiment: SentimentConfig,
    pub significance: SignificanceConfig,
    pub sweep: SweepConfig,
    /// Length of the stored importance rankings.
    pub top_k: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            data: DataConfig::default(),
            sample_per_group: 150,
            seeds: vec![0],
            split: SplitConfig::default(),
            features: FeatureConfig::default(),
            transform: TransformConfig::default(),
            classifiers: ClassifierConfig::default(),
            sentiment: SentimentConfig::default(),
            significance: SignificanceConfig::default(),
            sweep: SweepConfig::default(),
            top_k: 20,
            output_dir: PathBuf::from("runs"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub offline: bool,
    pub output_dir: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub sample_per_group: Option<usize>,
}

fn config_error(message: impl Into<String>) -> AuditError {
    AuditError::config(Stage::Config, message)
}

impl RunConfig {
    /// Parses a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, AuditError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.path);
        fix(&mut self.transform.cache_path);
        fix(&mut self.output_dir);
        if let Some(l) = &mut self.transform.lookup {
            fix(&mut l.path);
        }
        if let Some(l) = &mut self.sentiment.lexicon {
            fix(l);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if o.offline {
            self.transform.offline = true;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(b) = o.backend {
            self.transform.backend = b;
        }
        if let Some(n) = o.sample_per_group {
            self.sample_per_group = n;
        }
    }

    pub fn validate(&self) -> Result<(), AuditError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(config_error(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.data.groups[0] == self.data.groups[1] {
            return Err(config_error("the two group values must differ"));
        }
        if self.sample_per_group == 0 {
            return Err(config_error("sample_per_group must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(config_error("at least one seed is required"));
        }
        let f = self.split.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(config_error(format!(
                "split.test_fraction must be in (0, 1), got {f}"
            )));
        }
        if self.features.min_df == 0 {
            return Err(config_error("features.min_df must be at least 1"));
        }
        if !(self.features.fair_threshold.is_finite() && self.features.fair_steepness > 0.0) {
            return Err(config_error(
                "fair weighting needs a finite threshold and positive steepness",
            ));
        }
        for kind in ModelKind::ALL {
            let grid = self.classifiers.grid(kind);
            grid.hyperparams(kind)
                .map_err(|e| config_error(format!("classifiers.{kind}: {e}")))?;
            if grid.cv_folds < 2 {
                return Err(config_error(format!(
                    "classifiers.{kind}.cv_folds must be at least 2"
                )));
            }
        }
        let s = &self.sentiment;
        if !(s.neutral_band >= 0.0 && s.neutral_band < 1.0) {
            return Err(config_error("sentiment.neutral_band must be in [0, 1)"));
        }
        let t = &s.thresholds;
        if !((0.0..=1.0).contains(&t.min_agreement) && (0.0..=1.0).contains(&t.max_flip_rate)) {
            return Err(config_error("sentiment thresholds must be in [0, 1]"));
        }
        if !(self.significance.alpha > 0.0 && self.significance.alpha < 1.0) {
            return Err(config_error("significance.alpha must be in (0, 1)"));
        }
        if self.top_k == 0 {
            return Err(config_error("top_k must be at least 1"));
        }
        match self.transform.backend {
            BackendKind::Chat => self
                .transform
                .chat
                .validate()
                .map_err(|e| config_error(e.to_string()))?,
            BackendKind::Lookup if self.transform.lookup.is_none() => {
                return Err(config_error(
                    "the lookup backend needs a transform.lookup section",
                ))
            }
            _ => {}
        }
        if let Some(size) = self.sweep.sizes.iter().find(|s| **s < 2 || *s % 2 == 1) {
            return Err(config_error(format!(
                "sweep size {size} must be even and at least 2"
            )));
        }
        Ok(())
    }

    /// Digest of the canonical JSON form; identifies the run in manifests.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn selection_metric(&self, kind: ModelKind) -> SelectionMetric {
        self.classifiers.grid(kind).metric
    }
}
