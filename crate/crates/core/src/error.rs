use thiserror::Error;

/// Errors raised by the quantification library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite estimate")]
    NonFiniteEstimate,
    #[error("invalid prevalence vector: ({pos}, {neg})")]
    InvalidPrevalence { pos: f64, neg: f64 },
    #[error("invalid rates: tpr={tpr}, fpr={fpr}")]
    InvalidRates { tpr: f64, fpr: f64 },
    #[error("class unavailable: {0} required but absent from the pool")]
    ClassUnavailable(crate::Label),
    #[error("degenerate stratification: class {0} has no documents")]
    DegenerateStratification(crate::Label),
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("degenerate class weights: a class has zero prevalence")]
    DegenerateClassWeights,
    #[error("calibration needs both classes")]
    CalibrationNeedsBothClasses,
    #[error("rates undefined: class {0} absent from labels")]
    RatesUndefined(crate::Label),
    #[error("unadjustable: degenerate rates (tpr={tpr}, fpr={fpr})")]
    DegenerateRates { tpr: f64, fpr: f64 },
    #[error("EM undefined at zero prior")]
    EmZeroPrior,
    #[error("posterior out of range: {0}")]
    PosteriorOutOfRange(f64),
    #[error("empty pool: {0}")]
    EmptyPool(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("all {} configurations failed: {}", .0.len(), format_causes(.0))]
    AllConfigsFailed(Vec<(usize, String)>),
}

fn format_causes(causes: &[(usize, String)]) -> String {
    causes
        .iter()
        .map(|(i, c)| format!("#{i}: {c}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, QuantError>;
