//! The oracle digit classifier and every evaluation metric: group-fairness
//! gaps, feature-space Fréchet distance, the Inception-style score and the
//! indicator entropy report.

mod entropy_report;
mod fairness;
mod oracle;
mod quality;
mod report;

pub use entropy_report::{group_entropy_report, pearson, GroupEntropy, GroupEntropyReport};
pub use fairness::{
    compute_fd, compute_spd, fd_from_predictions, unrecognizable_proportion, FdSummary,
    GroupDistribution,
};
pub use oracle::{
    cross_entropy, shift_image, train_oracle, OracleClassifier, OracleTrainConfig, Prediction,
    CLASSES, FEATURE_WIDTH, ORACLE_WIDTHS,
};
pub use quality::{compute_frechet, compute_is, fit_gaussian};
pub use report::{MetricsReport, REPORT_SCHEMA_VERSION};
