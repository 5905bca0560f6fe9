use thiserror::Error;

/// Failures of the log-domain numerics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("empty table")]
    EmptyTable,
    #[error("non-finite temperature {0}")]
    NonFiniteTemperature(f64),
    #[error("negative probability {value} at index {index}")]
    NegativeProbability { index: usize, value: f64 },
}

/// Structural and semantic violations of a model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("region {region}: {reason}")]
    InvalidRegion { region: usize, reason: String },
    #[error("region ids must be dense: expected {expected}, found {found}")]
    NonDenseRegionId { expected: usize, found: usize },
    #[error("variable {variable} has inconsistent cardinalities {first} and {second}")]
    CardinalityMismatch {
        variable: usize,
        first: usize,
        second: usize,
    },
    #[error("variable {0} is not covered by any region")]
    UncoveredVariable(usize),
    #[error("dangling edge ({parent}, {child}): region count is {regions}")]
    DanglingEdge {
        parent: usize,
        child: usize,
        regions: usize,
    },
    #[error("duplicate edge ({parent}, {child})")]
    DuplicateEdge { parent: usize, child: usize },
    #[error("containment violated on edge ({parent}, {child}): child variables are not a strict subset of the parent's")]
    ContainmentViolated { parent: usize, child: usize },
    #[error("region {region} has too many labels (limit {limit})")]
    TooManyLabels { region: usize, limit: usize },
    #[error("feature id {feature} out of range (feature count {count})")]
    FeatureOutOfRange { feature: usize, count: usize },
    #[error("feature {feature} has two tables on region {region}")]
    DuplicateFeatureTable { feature: usize, region: usize },
    #[error("sample {sample}: {reason}")]
    InvalidSample { sample: usize, reason: String },
    #[error("sample {sample}: loss of the true label on region {region} is {value}, must be 0")]
    NonzeroTrueLoss {
        sample: usize,
        region: usize,
        value: f64,
    },
    #[error("sample {sample}: true labels of regions {first} and {second} disagree on variable {variable}")]
    InconsistentTruth {
        sample: usize,
        first: usize,
        second: usize,
        variable: usize,
    },
    #[error("table length {found} does not match label count {expected} of region {region}")]
    TableLength {
        region: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("counting numbers: {0}")]
    InvalidCounts(String),
    #[error("weight vector has length {found}, model has {expected} features")]
    WeightLength { expected: usize, found: usize },
}

/// Errors of the brute-force oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("joint label space too large: {size} exceeds the enumeration guard {limit}")]
    GuardExceeded { size: u128, limit: u128 },
}

/// Failures while evaluating objectives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("regularization constant C must be nonnegative, got {0}")]
    NegativeRegularization(f64),
}

/// Inference configuration problems.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("region {region}: zero denominator c_r + sum of parent counts")]
    ZeroDenominator { region: usize },
}

/// Errors surfaced by the text formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("feature count mismatch: file has {found}, model has {expected}")]
    FeatureCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        FormatError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }
}

/// Training configuration and data problems.
#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// Data generation problems.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("invalid denoise spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bitmap line {line}: {message}")]
    Bitmap { line: usize, message: String },
}
