use std::fmt;

use leakage_core::classifiers::ClassifierError;
use leakage_core::corpus::CorpusError;
use leakage_core::features::FeatureError;
use leakage_core::sentiment::SentimentError;
use leakage_core::transform::TransformError;

/// Pipeline stage an error surfaced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Filter,
    Sample,
    Transform,
    Sentiment,
    Vectorize,
    GridSearch,
    Fit,
    Evaluate,
    Significance,
    Importance,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Sample => "sample",
            Stage::Transform => "transform",
            Stage::Sentiment => "sentiment",
            Stage::Vectorize => "vectorize",
            Stage::GridSearch => "grid-search",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
            Stage::Significance => "significance",
            Stage::Importance => "importance",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

/// Error class, which decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Backend,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Backend => 4,
            ErrorKind::Internal => 5,
        }
    }
}

#[derive(Debug)]
pub struct AuditError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for AuditError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for AuditError {}

impl AuditError {
    pub fn new(stage: Stage, kind: ErrorKind, message: impl Into<String>) -> Self {
        AuditError {
            stage,
            kind,
            message: message.into(),
        }
    }

    pub fn config(stage: Stage, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorKind::Config, message)
    }

    pub fn data(stage: Stage, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorKind::Data, message)
    }

    pub fn internal(stage: Stage, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorKind::Internal, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

/// Attaches a stage to a module error.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, AuditError>;
}

fn corpus_kind(e: &CorpusError) -> ErrorKind {
    match e {
        CorpusError::InvalidSplit(_) => ErrorKind::Config,
        _ => ErrorKind::Data,
    }
}

impl<T> AtStage<T> for Result<T, CorpusError> {
    fn at(self, stage: Stage) -> Result<T, AuditError> {
        self.map_err(|e| AuditError::new(stage, corpus_kind(&e), e.to_string()))
    }
}

impl<T> AtStage<T> for Result<T, TransformError> {
    fn at(self, stage: Stage) -> Result<T, AuditError> {
        self.map_err(|e| {
            let kind = match &e {
                TransformError::Template(_)
                | TransformError::Rules(_)
                | TransformError::Config(_) => ErrorKind::Config,
                TransformError::Offline { .. } | TransformError::Backend { .. } => {
                    ErrorKind::Backend
                }
                TransformError::Corpus(c) => corpus_kind(c),
                TransformError::Csv(_)
                | TransformError::Cache { .. }
                | TransformError::Io(_)
                | TransformError::Json(_) => ErrorKind::Data,
            };
            AuditError::new(stage, kind, e.to_string())
        })
    }
}

impl<T> AtStage<T> for Result<T, FeatureError> {
    fn at(self, stage: Stage) -> Result<T, AuditError> {
        self.map_err(|e| {
            let kind = match &e {
                FeatureError::EmptyCorpus
                | FeatureError::EmptyVocabulary(_)
                | FeatureError::GroupAbsent(_) => ErrorKind::Data,
                FeatureError::Csv(_) | FeatureError::Io(_) | FeatureError::Triplets(_) => {
                    ErrorKind::Data
                }
                _ => ErrorKind::Internal,
            };
            AuditError::new(stage, kind, e.to_string())
        })
    }
}

impl<T> AtStage<T> for Result<T, ClassifierError> {
    fn at(self, stage: Stage) -> Result<T, AuditError> {
        self.map_err(|e| {
            let kind = match &e {
                ClassifierError::InvalidHyperparameter(_) | ClassifierError::EmptyGrid => {
                    ErrorKind::Config
                }
                ClassifierError::FoldConstruction { .. }
                | ClassifierError::EmptyTrainingSet
                | ClassifierError::EmptyTestSet
                | ClassifierError::EmptyClass(_) => ErrorKind::Data,
                _ => ErrorKind::Internal,
            };
            AuditError::new(stage, kind, e.to_string())
        })
    }
}

impl<T> AtStage<T> for Result<T, SentimentError> {
    fn at(self, stage: Stage) -> Result<T, AuditError> {
        self.map_err(|e| {
            let kind = match &e {
                SentimentError::Lexicon { .. }
                | SentimentError::Overlap(_)
                | SentimentError::Io(_) => ErrorKind::Config,
                _ => ErrorKind::Internal,
            };
            AuditError::new(stage, kind, e.to_string())
        })
    }
}

impl<T> AtStage<T> for Result<T, std::io::Error> {
    fn at(self, stage: Stage) -> Result<T, AuditError> {
        self.map_err(|e| AuditError::new(stage, ErrorKind::Internal, e.to_string()))
    }
}
